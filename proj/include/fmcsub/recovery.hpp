// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

#ifndef FMCSUB_RECOVERY_HPP
#define FMCSUB_RECOVERY_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "fmcsub/binio.hpp"
#include "fmcsub/core.hpp"

namespace fmcsub {

/// Complex linear map held as two real matrices, applied with the four-real-multiply rule:
/// (Re + i Im)(x_r + i x_i) = (Re x_r - Im x_i) + i (Re x_i + Im x_r).
struct ComplexLinear {
  rmat re;
  rmat im;

  Index rows() const noexcept { return re.rows(); }
  Index cols() const noexcept { return re.cols(); }

  static ComplexLinear from_complex(const cmat& m) { return {m.real(), m.imag()}; }

  cmat to_complex() const {
    cmat out(rows(), cols());
    out.real() = re;
    out.imag() = im;
    return out;
  }

  cmat apply(const cmat& x) const {
    require(x.rows() == cols(), "complex linear layer: input length mismatch");
    const rmat xr = x.real(), xi = x.imag();
    cmat out(rows(), x.cols());
    out.real().noalias() = re * xr;
    out.real().noalias() -= im * xi;
    out.imag().noalias() = re * xi;
    out.imag().noalias() += im * xr;
    return out;
  }

  /// Same as apply() when only the listed input rows of x are nonzero.
  cmat apply_rows(const cmat& x, const std::vector<Index>& nz) const {
    require(x.rows() == cols(), "complex linear layer: input length mismatch");
    const auto n = static_cast<Index>(nz.size());
    rmat wr(rows(), n), wi(rows(), n), xr(n, x.cols()), xi(n, x.cols());
    for (Index c = 0; c < n; ++c) {
      wr.col(c) = re.col(nz[c]);
      wi.col(c) = im.col(nz[c]);
      xr.row(c) = x.row(nz[c]).real();
      xi.row(c) = x.row(nz[c]).imag();
    }
    cmat out(rows(), x.cols());
    out.real().noalias() = wr * xr;
    out.real().noalias() -= wi * xi;
    out.imag().noalias() = wr * xi;
    out.imag().noalias() += wi * xr;
    return out;
  }

  /// Conjugate-transpose product W^H g.
  cmat apply_adjoint(const cmat& g) const {
    require(g.rows() == rows(), "complex linear layer: gradient length mismatch");
    const rmat gr = g.real(), gi = g.imag();
    cmat out(cols(), g.cols());
    out.real().noalias() = re.transpose() * gr;
    out.real().noalias() += im.transpose() * gi;
    out.imag().noalias() = re.transpose() * gi;
    out.imag().noalias() -= im.transpose() * gr;
    return out;
  }
};

/// Unrolled complex learned FISTA: weights tied across layers, one shrink threshold per layer.
struct UnrolledNet {
  ComplexLinear W;  ///< pixels x pixels
  ComplexLinear V;  ///< pixels x measurements
  rvec delta;       ///< per-layer softshrink thresholds

  std::size_t n_layer() const noexcept { return static_cast<std::size_t>(delta.size()); }
  Index n_pixels() const noexcept { return W.rows(); }
  Index n_meas() const noexcept { return V.cols(); }

  /// W = I - mu A^H A, V = mu A^H, every threshold = delta0.
  static UnrolledNet from_model(const cmat& A, double mu, std::size_t n_layer, double delta0) {
    require(mu > 0, "step size must be positive");
    require(n_layer >= 1, "network needs at least one layer");
    require(delta0 >= 0, "threshold must be non-negative");
    UnrolledNet net;
    const cmat ah = A.adjoint();
    cmat w = -mu * (ah * A);
    w.diagonal().array() += 1.0;
    net.W = ComplexLinear::from_complex(w);
    net.V = ComplexLinear::from_complex(mu * ah);
    net.delta = rvec::Constant(static_cast<Index>(n_layer), delta0);
    return net;
  }

  void validate() const {
    require(W.rows() == W.cols() && W.re.rows() == W.im.rows() && W.re.cols() == W.im.cols(), "W must be square");
    require(V.rows() == W.rows() && V.re.rows() == V.im.rows() && V.re.cols() == V.im.cols(), "V shape mismatch");
    require(delta.size() >= 1, "network needs at least one layer");
    require((delta.array() >= 0).all(), "thresholds must be non-negative");
  }
};

/// Phase-preserving shrink of each modulus by delta, floored at zero.
template <class Derived>
typename Derived::PlainObject complex_softshrink(const Eigen::MatrixBase<Derived>& z, double delta) {
  require(delta >= 0, "softshrink threshold must be non-negative");
  typename Derived::PlainObject out(z.rows(), z.cols());
  for (Index c = 0; c < z.cols(); ++c) {
    for (Index r = 0; r < z.rows(); ++r) {
      const cplx v = z(r, c);
      const double mag = std::abs(v);
      out(r, c) = mag > delta ? v * ((mag - delta) / mag) : cplx(0.0, 0.0);
    }
  }
  return out;
}

/// Largest eigenvalue of A^H A by power iteration on the Gram operator.
inline double power_iteration_lmax(const cmat& A, std::size_t iters = 5000, double tol = 1e-10) {
  require(A.size() > 0, "power iteration on an empty matrix");
  Rng rng(0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  cvec v(A.cols());
  for (auto& e : v) e = cplx(1.0 + u(rng), u(rng));
  v.normalize();
  double lambda = 0.0;
  for (std::size_t k = 0; k < iters; ++k) {
    const cvec w = A.adjoint() * (A * v);
    const double next = v.dot(w).real();
    const double norm = w.norm();
    if (norm == 0.0) throw ContractViolation("power iteration on a zero matrix");
    v = w / norm;
    if (k > 0 && std::abs(next - lambda) <= tol * std::abs(next)) return next;
    lambda = next;
  }
  throw NumericalError("power iteration did not converge in " + std::to_string(iters) + " iterations", lambda);
}

struct FistaConfig {
  std::size_t n_iter = 200;
  double step = 0.0;        ///< mu, at most 1 / lambda_max(A^H A)
  double threshold = 0.0;   ///< l1 weight lambda; the shrink uses step * threshold
  double tolerance = 1e-8;  ///< relative iterate change for early stop; 0 disables
};

/// 0.5 ||y - A x||^2 + lambda sum |x_k|, summed over columns.
inline double lasso_objective(const cmat& A, const cmat& y, const cmat& x, double threshold) {
  return 0.5 * (y - A * x).squaredNorm() + threshold * x.cwiseAbs().sum();
}

/// FISTA on the complex lasso. Columns of y are independent problems sharing A.
/// `on_iterate(k, x)` sees every iterate (k from 0).
inline cmat fista_solve(const cmat& A, const cmat& y, const FistaConfig& cfg,
                        const std::function<void(std::size_t, const cmat&)>& on_iterate = {}) {
  require(y.rows() == A.rows(), "fista: measurement length does not match the operator");
  require(cfg.step > 0, "fista: step must be positive");
  require(cfg.threshold >= 0, "fista: threshold must be non-negative");
  const cmat ah = A.adjoint();
  const double shrink = cfg.step * cfg.threshold;
  const double f0 = 0.5 * y.squaredNorm();
  const double blowup = 1e6 * std::max(f0, std::numeric_limits<double>::min());
  cmat x_prev = cmat::Zero(A.cols(), y.cols());
  cmat a = x_prev;
  double eta = 1.0;
  for (std::size_t k = 0; k < cfg.n_iter; ++k) {
    const cmat z = a - cfg.step * (ah * (A * a - y));
    cmat x = complex_softshrink(z, shrink);
    const double eta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * eta * eta));
    const double c = (eta - 1.0) / eta_next;
    a = x + c * (x - x_prev);
    eta = eta_next;
    if (on_iterate) on_iterate(k, x);
    if (k % 16 == 15 || k + 1 == cfg.n_iter) {
      const double obj = lasso_objective(A, y, x, cfg.threshold);
      if (!std::isfinite(obj) || obj > blowup) {
        throw NumericalError("fista diverged at iteration " + std::to_string(k) + "; step too large?", obj);
      }
    }
    bool converged = false;
    if (cfg.tolerance > 0) {
      converged = true;
      for (Index c2 = 0; c2 < x.cols() && converged; ++c2) {
        const double scale = std::max(x.col(c2).norm(), std::numeric_limits<double>::min());
        converged = (x.col(c2) - x_prev.col(c2)).norm() <= cfg.tolerance * scale;
      }
    }
    x_prev = std::move(x);
    if (converged) break;
  }
  return x_prev;
}

inline cvec fista_solve(const cmat& A, const cvec& y, const FistaConfig& cfg,
                        const std::function<void(std::size_t, const cmat&)>& on_iterate = {}) {
  return fista_solve(A, cmat(y), cfg, on_iterate).col(0);
}

/// Same iterates as fista_solve, driven by the normal equations: gram = A^H A, aty = A^H y.
/// Cheaper when A is much taller than wide and many iterations are needed.
inline cmat fista_solve_gram(const cmat& gram, const cmat& aty, const FistaConfig& cfg) {
  require(gram.rows() == gram.cols() && aty.rows() == gram.rows(), "fista: gram shape mismatch");
  require(cfg.step > 0, "fista: step must be positive");
  require(cfg.threshold >= 0, "fista: threshold must be non-negative");
  const double shrink = cfg.step * cfg.threshold;
  cmat x_prev = cmat::Zero(gram.cols(), aty.cols());
  cmat a = x_prev;
  double eta = 1.0;
  for (std::size_t k = 0; k < cfg.n_iter; ++k) {
    cmat x = complex_softshrink(cmat(a - cfg.step * (gram * a - aty)), shrink);
    const double eta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * eta * eta));
    a = x + ((eta - 1.0) / eta_next) * (x - x_prev);
    eta = eta_next;
    if (k % 64 == 63 && !x.allFinite()) throw NumericalError("fista diverged at iteration " + std::to_string(k), 0.0);
    bool converged = cfg.tolerance > 0;
    for (Index c = 0; c < x.cols() && converged; ++c) {
      const double scale = std::max(x.col(c).norm(), std::numeric_limits<double>::min());
      converged = (x.col(c) - x_prev.col(c)).norm() <= cfg.tolerance * scale;
    }
    x_prev = std::move(x);
    if (converged) break;
  }
  return x_prev;
}

/// Everything reverse mode needs from one forward pass.
struct ClfistaTape {
  std::vector<cmat> a_in;        ///< momentum point fed to layer j (zero for j = 0)
  std::vector<cmat> z;           ///< pre-shrink activations
  std::vector<cmat> x;           ///< layer outputs
  std::vector<double> eta;       ///< eta_0 = 1, then one per layer
  std::vector<double> momentum;  ///< (eta_{j} - 1) / eta_{j+1} per layer
  std::vector<Index> active_rows;
  cmat ys;  ///< the masked input
};

/// Unrolled forward pass starting from x = x_au = 0, eta = 1.
inline cmat clfista_forward(const UnrolledNet& net, const cmat& ys, ClfistaTape* tape = nullptr) {
  require(ys.rows() == net.n_meas(), "clfista: measurement length does not match the network");
  require(net.W.rows() == net.W.cols() && net.V.rows() == net.W.rows(), "clfista: inconsistent network shapes");
  std::vector<Index> active;
  for (Index r = 0; r < ys.rows(); ++r) {
    if ((ys.row(r).array() != cplx(0.0, 0.0)).any()) active.push_back(r);
  }
  const cmat vy = net.V.apply_rows(ys, active);
  const Index n = net.n_pixels();
  cmat x_prev = cmat::Zero(n, ys.cols());
  cmat a = x_prev;
  double eta = 1.0;
  if (tape) {
    *tape = {};
    tape->eta.push_back(eta);
    tape->active_rows = active;
    tape->ys = ys;
  }
  for (std::size_t j = 0; j < net.n_layer(); ++j) {
    cmat z = j == 0 ? vy : cmat(net.W.apply(a) + vy);
    cmat x = complex_softshrink(z, net.delta[static_cast<Index>(j)]);
    const double eta_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * eta * eta));
    const double c = (eta - 1.0) / eta_next;
    cmat a_next = x + c * (x - x_prev);
    if (tape) {
      tape->a_in.push_back(std::move(a));
      tape->z.push_back(std::move(z));
      tape->x.push_back(x);
      tape->eta.push_back(eta_next);
      tape->momentum.push_back(c);
    }
    a = std::move(a_next);
    x_prev = std::move(x);
    eta = eta_next;
  }
  return x_prev;
}

inline cvec clfista_forward(const UnrolledNet& net, const cvec& ys) { return clfista_forward(net, cmat(ys)).col(0); }

// Network weights block shared by the checkpoint container.
inline void write_net(binio::ByteWriter& w, const UnrolledNet& net) {
  w.u64(static_cast<std::uint64_t>(net.n_pixels()));
  w.u64(static_cast<std::uint64_t>(net.n_meas()));
  w.u64(net.n_layer());
  w.f64_array(net.W.re.data(), static_cast<std::size_t>(net.W.re.size()));
  w.f64_array(net.W.im.data(), static_cast<std::size_t>(net.W.im.size()));
  w.f64_array(net.V.re.data(), static_cast<std::size_t>(net.V.re.size()));
  w.f64_array(net.V.im.data(), static_cast<std::size_t>(net.V.im.size()));
  w.f64_array(net.delta.data(), net.n_layer());
}

inline UnrolledNet read_net(binio::ByteReader& r) {
  const auto np = r.u64(), nm = r.u64(), nl = r.u64();
  if (np == 0 || nm == 0 || nl == 0 || np > (1u << 20) || nm > (1u << 24) || nl > (1u << 16)) {
    throw FormatError("implausible network dimensions");
  }
  if (r.remaining() < 8 * (2 * np * np + 2 * np * nm + nl)) throw FormatError("truncated file");
  UnrolledNet net;
  const auto p = static_cast<Index>(np), m = static_cast<Index>(nm);
  net.W.re.resize(p, p);
  net.W.im.resize(p, p);
  net.V.re.resize(p, m);
  net.V.im.resize(p, m);
  net.delta.resize(static_cast<Index>(nl));
  r.f64_array(net.W.re.data(), np * np);
  r.f64_array(net.W.im.data(), np * np);
  r.f64_array(net.V.re.data(), np * nm);
  r.f64_array(net.V.im.data(), np * nm);
  r.f64_array(net.delta.data(), nl);
  return net;
}

}  // namespace fmcsub

#endif  // FMCSUB_RECOVERY_HPP
