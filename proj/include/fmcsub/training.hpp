// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

#ifndef FMCSUB_TRAINING_HPP
#define FMCSUB_TRAINING_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fmcsub/binio.hpp"
#include "fmcsub/config.hpp"
#include "fmcsub/core.hpp"
#include "fmcsub/forward_model.hpp"
#include "fmcsub/recovery.hpp"
#include "fmcsub/scene_gen.hpp"
#include "fmcsub/subsampling.hpp"

namespace fmcsub {

enum class LossKind { kL1, kL2 };

struct TrainConfig {
  std::size_t n_iter = 3000;
  std::size_t batch_size = 16;
  double lr = 1e-3;      ///< logits
  double lr_net = 1e-3;  ///< W, V, delta; relative to each tensor's initial RMS when scale_net_lr
  bool scale_net_lr = true;
  double lr_w_scale = 1.0;
  double lr_delta_scale = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double gamma_init = 5.0;
  double gamma_end = 0.5;
  std::uint64_t seed = 1;
  bool train_net = true;
  LossKind loss = LossKind::kL1;
  std::size_t finetune_iters = 0;  ///< network-only steps on the final hard pattern

  void validate() const {
    if (!(gamma_init > gamma_end) || !(gamma_end > 0)) throw ConfigError("need gamma_init > gamma_end > 0");
    if (!(lr > 0) || !(lr_net > 0) || !(lr_w_scale > 0) || !(lr_delta_scale > 0)) {
      throw ConfigError("learning rates must be positive");
    }
    if (n_iter < 1 || batch_size < 1) throw ConfigError("n_iter and batch_size must be >= 1");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(eps > 0)) throw ConfigError("bad Adam constants");
  }

  static TrainConfig from_config(const Config& c) {
    TrainConfig t;
    t.n_iter = c.count("n_iter", t.n_iter);
    t.batch_size = c.count("batch_size", t.batch_size);
    t.lr = c.number("lr", t.lr);
    t.lr_net = c.number("lr_net", t.lr_net);
    t.scale_net_lr = c.flag("scale_net_lr", t.scale_net_lr);
    t.lr_w_scale = c.number("lr_w_scale", t.lr_w_scale);
    t.lr_delta_scale = c.number("lr_delta_scale", t.lr_delta_scale);
    t.beta1 = c.number("adam_beta1", t.beta1);
    t.beta2 = c.number("adam_beta2", t.beta2);
    t.eps = c.number("adam_eps", t.eps);
    t.gamma_init = c.number("gamma_init", t.gamma_init);
    t.gamma_end = c.number("gamma_end", t.gamma_end);
    t.seed = c.count("train_seed", t.seed);
    t.train_net = c.flag("train_net", t.train_net);
    t.finetune_iters = c.count("finetune_iters", t.finetune_iters);
    const auto loss = c.str("loss", "l1");
    if (loss == "l2") {
      t.loss = LossKind::kL2;
    } else if (loss != "l1") {
      throw ConfigError("loss must be 'l1' or 'l2'");
    }
    t.validate();
    return t;
  }
};

/// Which pixels the initial W and V may touch.
enum class InitSupport {
  kAll,        ///< every grid pixel
  kEmpirical,  ///< pixels holding a scatterer somewhere in the training set
};

/// Unrolled network shape and initialization.
struct NetConfig {
  std::size_t n_layer = 15;
  double delta_rel = 5e-2;  ///< initial threshold as a fraction of max |V y_s| on a calibration batch
  std::size_t calibration_batch = 64;
  InitSupport support = InitSupport::kAll;

  static NetConfig from_config(const Config& c) {
    NetConfig n;
    n.n_layer = c.count("n_layer", n.n_layer);
    n.delta_rel = c.number("delta_rel", n.delta_rel);
    n.calibration_batch = c.count("calibration_batch", n.calibration_batch);
    const auto sup = c.str("init_support", "all");
    if (sup == "empirical") {
      n.support = InitSupport::kEmpirical;
    } else if (sup != "all") {
      throw ConfigError("init_support must be 'all' or 'empirical'");
    }
    if (n.n_layer < 1) throw ConfigError("n_layer must be >= 1");
    return n;
  }
};

/// Linear anneal gamma(i) = gamma_init - (i - 1) (gamma_init - gamma_end) / n_iter, for i in [1, n_iter].
inline double temperature(std::size_t i, const TrainConfig& cfg) {
  if (i < 1 || i > cfg.n_iter) throw ContractViolation("temperature: iteration index out of range");
  const double step = (cfg.gamma_init - cfg.gamma_end) / static_cast<double>(cfg.n_iter);
  return cfg.gamma_init - static_cast<double>(i - 1) * step;
}

/// Sum of complex moduli of x - x_hat.
template <class A, class B>
double l1_loss(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x_hat) {
  require(x.rows() == x_hat.rows() && x.cols() == x_hat.cols(), "l1_loss: length mismatch");
  return (x - x_hat).cwiseAbs().sum();
}

/// Per-iteration selection: one sample per axis plus the unified mask.
struct IterationSelection {
  std::array<SelectionSample, 3> axes;
  std::array<bool, 3> trainable{true, true, true};
  double gamma = 1.0;
  rvec mask;
};

struct GradientBundle {
  std::array<rvec, 3> d_theta;
  rmat d_W_re, d_W_im, d_V_re, d_V_im;
  rvec d_delta;
};

struct BackwardOptions {
  bool net = true;    ///< gradients for W, V, delta
  bool logits = true; ///< straight-through gradients for trainable axes
};

namespace detail {

/// Gradient through the complex shrink for one layer; accumulates d/d delta.
inline cmat softshrink_backward(const cmat& z, double delta, const cmat& g, double& d_delta) {
  cmat out(z.rows(), z.cols());
  double dd = 0.0;
  for (Index c = 0; c < z.cols(); ++c) {
    for (Index r = 0; r < z.rows(); ++r) {
      const cplx v = z(r, c);
      const double mag = std::abs(v);
      if (mag > delta) {
        const cplx u = v / mag;
        const cplx gg = g(r, c);
        const double proj = (std::conj(gg) * u).real();
        out(r, c) = (1.0 - delta / mag) * gg + (delta / mag) * proj * u;
        dd -= proj;
      } else {
        out(r, c) = cplx(0.0, 0.0);
      }
    }
  }
  d_delta += dd;
  return out;
}

/// Straight-through: the hard gradient is passed to the soft vector, then through the softmax.
inline rvec softmax_backward(const SelectionSample& s, const rvec& d_soft, double gamma) {
  const double dot = s.soft.dot(d_soft);
  return (s.soft.array() * (d_soft.array() - dot)).matrix() / gamma;
}

}  // namespace detail

/// Reverse-mode gradients of a loss whose gradient w.r.t. the network output is `seed`.
/// `y` is the unmasked batch the mask was applied to.
inline GradientBundle backward(const UnrolledNet& net, const ClfistaTape& tape, const cmat& y,
                               const IterationSelection& sel, const cmat& seed, const BackwardOptions& opt = {}) {
  const std::size_t L = net.n_layer();
  require(tape.z.size() == L && tape.x.size() == L, "backward: tape does not match the network depth");
  require(seed.rows() == net.n_pixels() && seed.cols() == tape.ys.cols(), "backward: seed shape mismatch");
  require(y.rows() == tape.ys.rows() && y.cols() == tape.ys.cols(), "backward: measurement batch mismatch");
  require(sel.mask.size() == y.rows(), "backward: mask does not match the measurement length");
  const Index n = net.n_pixels();
  const Index b = seed.cols();

  GradientBundle g;
  g.d_delta = rvec::Zero(static_cast<Index>(L));

  cmat ga_cur = cmat::Zero(n, b);   // d/d a_j
  cmat ga_next = cmat::Zero(n, b);  // d/d a_{j+1}
  cmat gsum = cmat::Zero(n, b);
  std::vector<cmat> gz_store;
  gz_store.reserve(L);
  for (std::size_t jj = L; jj-- > 0;) {
    const double c = tape.momentum[jj];
    cmat gx = (1.0 + c) * ga_cur;
    if (jj + 1 == L) gx += seed;
    if (jj + 1 < L) gx -= tape.momentum[jj + 1] * ga_next;
    double dd = 0.0;
    cmat gz = detail::softshrink_backward(tape.z[jj], net.delta[static_cast<Index>(jj)], gx, dd);
    g.d_delta[static_cast<Index>(jj)] = dd;
    gsum += gz;
    ga_next = std::move(ga_cur);
    if (jj > 0) {
      ga_cur = net.W.apply_adjoint(gz);
      gz_store.push_back(std::move(gz));
    } else {
      ga_cur = cmat::Zero(n, b);
    }
  }

  if (opt.net) {
    // dW = sum_j gz_j a_{j-1}^H as one product over layer-stacked columns.
    const Index k = static_cast<Index>(gz_store.size()) * b;
    g.d_W_re = rmat::Zero(n, n);
    g.d_W_im = rmat::Zero(n, n);
    if (k > 0) {
      rmat gr(n, k), gi(n, k), ar(n, k), ai(n, k);
      for (std::size_t s = 0; s < gz_store.size(); ++s) {
        const std::size_t layer = L - 1 - s;  // gz_store is in reverse layer order
        const auto off = static_cast<Index>(s) * b;
        gr.middleCols(off, b) = gz_store[s].real();
        gi.middleCols(off, b) = gz_store[s].imag();
        ar.middleCols(off, b) = tape.a_in[layer].real();
        ai.middleCols(off, b) = tape.a_in[layer].imag();
      }
      g.d_W_re.noalias() = gr * ar.transpose();
      g.d_W_re.noalias() += gi * ai.transpose();
      g.d_W_im.noalias() = gi * ar.transpose();
      g.d_W_im.noalias() -= gr * ai.transpose();
    }
    // dV = gsum ys^H; only the active measurement columns are nonzero.
    const Index m = net.n_meas();
    g.d_V_re = rmat::Zero(n, m);
    g.d_V_im = rmat::Zero(n, m);
    const auto na = static_cast<Index>(tape.active_rows.size());
    if (na > 0) {
      rmat yr(b, na), yi(b, na);
      for (Index c = 0; c < na; ++c) {
        yr.col(c) = tape.ys.row(tape.active_rows[c]).real().transpose();
        yi.col(c) = tape.ys.row(tape.active_rows[c]).imag().transpose();
      }
      const rmat sr = gsum.real(), si = gsum.imag();
      const rmat dr = sr * yr + si * yi;
      const rmat di = si * yr - sr * yi;
      for (Index c = 0; c < na; ++c) {
        g.d_V_re.col(tape.active_rows[c]) = dr.col(c);
        g.d_V_im.col(tape.active_rows[c]) = di.col(c);
      }
    }
  }

  for (int a = 0; a < 3; ++a) g.d_theta[a] = rvec::Zero(sel.axes[a].hard.size());
  const bool any_trainable = sel.trainable[0] || sel.trainable[1] || sel.trainable[2];
  if (opt.logits && any_trainable) {
    const cmat d_ys = net.V.apply_adjoint(gsum);
    // ys = s .* y with real s: dL/ds_r = sum_b Re(conj(g) y).
    const rvec d_mask = (d_ys.real().cwiseProduct(y.real()) + d_ys.imag().cwiseProduct(y.imag())).rowwise().sum();
    const Index nt = sel.axes[0].hard.size(), nr = sel.axes[1].hard.size(), nf = sel.axes[2].hard.size();
    require(nt * nr * nf == d_mask.size(), "backward: axis sizes do not match the mask");
    const rvec& ht = sel.axes[0].hard;
    const rvec& hr = sel.axes[1].hard;
    const rvec& hf = sel.axes[2].hard;
    std::array<rvec, 3> d_hard{rvec::Zero(nt), rvec::Zero(nr), rvec::Zero(nf)};
    for (Index i = 0; i < nt; ++i)
      for (Index j = 0; j < nr; ++j)
        for (Index f = 0; f < nf; ++f) {
          const double d = d_mask[f + nf * (j + nr * i)];
          d_hard[0][i] += d * hr[j] * hf[f];
          d_hard[1][j] += d * ht[i] * hf[f];
          d_hard[2][f] += d * ht[i] * hr[j];
        }
    for (int a = 0; a < 3; ++a) {
      g.d_theta[a] = sel.trainable[a] ? detail::softmax_backward(sel.axes[a], d_hard[a], sel.gamma)
                                      : rvec::Zero(d_hard[a].size());
    }
  }
  return g;
}

/// Adam with bias correction over any number of flat parameter groups.
class Adam {
 public:
  struct Group {
    std::span<double> param;
    std::span<const double> grad;
    double lr;
  };

  Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) : b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(std::span<const Group> groups) {
    if (m_.empty()) {
      for (const auto& g : groups) {
        m_.emplace_back(g.param.size(), 0.0);
        v_.emplace_back(g.param.size(), 0.0);
      }
    }
    require(m_.size() == groups.size(), "adam: group count changed between steps");
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < groups.size(); ++k) {
      const auto& g = groups[k];
      require(g.param.size() == m_[k].size() && g.grad.size() == g.param.size(), "adam: state dimension mismatch");
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < g.param.size(); ++i) {
        const double gi = g.grad[i];
        m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
        v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
        g.param[i] -= g.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
    }
  }

  std::size_t steps() const noexcept { return t_; }

 private:
  double b1_, b2_, eps_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

template <class M>
std::span<double> flat(M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

template <class M>
std::span<const double> flat_const(const M& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

/// How each axis is handled during training.
struct AxisPlan {
  std::array<bool, 3> trainable{true, true, true};
  std::array<rvec, 3> pinned;  ///< fixed 0/1 mask for axes that are not trained
};

struct TrainLogRecord {
  std::size_t iteration = 0;
  double gamma = 0.0;
  double loss = 0.0;
  std::array<double, 3> entropy{};
  std::array<std::vector<std::size_t>, 3> hard;

  std::string to_json() const {
    nlohmann::json j;
    j["iteration"] = iteration;
    j["gamma"] = gamma;
    j["loss"] = loss;
    j["entropy"] = {entropy[0], entropy[1], entropy[2]};
    j["tx"] = hard[0];
    j["rx"] = hard[1];
    j["freq"] = hard[2];
    return j.dump();
  }
};

/// Shannon entropy of softmax(theta).
inline double logits_entropy(const rvec& theta) {
  const rvec p = softmax(theta);
  double h = 0.0;
  for (double v : p) {
    if (v > 0) h -= v * std::log(v);
  }
  return h;
}

struct TrainResult {
  SelectionState selection;
  UnrolledNet net;
  std::vector<TrainLogRecord> log;
};

class TrainingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

namespace detail {
inline constexpr std::uint64_t kBatchStream = 10;
inline constexpr std::uint64_t kGumbelStream = 11;

inline double rms(const rmat& m) { return m.size() ? std::sqrt(m.squaredNorm() / static_cast<double>(m.size())) : 0.0; }
inline double rms(const rvec& v) { return v.size() ? std::sqrt(v.squaredNorm() / static_cast<double>(v.size())) : 0.0; }
}  // namespace detail

/// Draws the iteration's selection for every axis; pinned axes use their fixed masks.
inline IterationSelection draw_selection(const SelectionState& s, const AxisPlan& plan, double gamma,
                                         std::uint64_t seed, std::size_t iteration) {
  IterationSelection sel;
  sel.gamma = gamma;
  sel.trainable = plan.trainable;
  for (int a = 0; a < 3; ++a) {
    if (plan.trainable[a]) {
      auto rng = make_stream(seed, iteration, detail::kGumbelStream + static_cast<std::uint64_t>(a));
      sel.axes[a] = sample_selection(s.theta[a], s.m[a], gamma, rng);
    } else {
      require(plan.pinned[a].size() == s.theta[a].size(), "pinned mask length mismatch");
      sel.axes[a].hard = plan.pinned[a];
      sel.axes[a].soft = plan.pinned[a];
      sel.axes[a].gumbel = rvec::Zero(plan.pinned[a].size());
    }
  }
  sel.mask = kron_mask(sel.axes[0].hard, sel.axes[1].hard, sel.axes[2].hard);
  return sel;
}

/// Mean-over-batch L1 loss of one forward pass and its gradient seed.
inline double batch_l1(const cmat& x, const cmat& x_hat, cmat* seed) {
  const cmat d = x_hat - x;
  const double b = static_cast<double>(x.cols());
  if (seed) {
    seed->resize(d.rows(), d.cols());
    for (Index i = 0; i < d.size(); ++i) {
      const double mag = std::abs(d(i));
      (*seed)(i) = mag > 0 ? d(i) / (mag * b) : cplx(0.0, 0.0);
    }
  }
  return d.cwiseAbs().sum() / b;
}

/// Mean-over-batch 0.5 ||x_hat - x||^2 and its gradient seed.
inline double batch_l2(const cmat& x, const cmat& x_hat, cmat* seed) {
  const cmat d = x_hat - x;
  const double b = static_cast<double>(x.cols());
  if (seed) *seed = d / b;
  return 0.5 * d.squaredNorm() / b;
}

inline double batch_loss(LossKind kind, const cmat& x, const cmat& x_hat, cmat* seed) {
  return kind == LossKind::kL2 ? batch_l2(x, x_hat, seed) : batch_l1(x, x_hat, seed);
}

/// Initial network per the model: mu = 1 / lambda_max(A^H A), thresholds calibrated on a batch.
inline UnrolledNet init_network(const MeasurementModel& model, const Dataset& data, const NetConfig& nc,
                                const SelectionState& selection, const AxisPlan& plan) {
  require(data.has_measurements(), "network init needs measurements");
  std::array<rvec, 3> masks;
  for (int a = 0; a < 3; ++a) {
    masks[a] = plan.trainable[a] ? deterministic_selection(selection.theta[a], selection.m[a]) : plan.pinned[a];
  }
  const rvec mask = kron_mask(masks[0], masks[1], masks[2]);
  // Full-model ISTA, with V scaled by N/M so a masked y back-projects at full-data magnitude.
  cmat a_init = model.A;
  if (nc.support == InitSupport::kEmpirical) {
    std::vector<char> used(model.n_pixels(), 0);
    for (const auto& sc : data.scenes)
      for (const auto& s : sc.scatterers) used[s.pixel] = 1;
    for (std::size_t k = 0; k < model.n_pixels(); ++k)
      if (!used[k]) a_init.col(static_cast<Index>(k)).setZero();
  }
  const double mu = 1.0 / power_iteration_lmax(a_init);
  auto net = UnrolledNet::from_model(a_init, mu, nc.n_layer, 0.0);
  const double gain = static_cast<double>(mask.size()) / std::max(mask.sum(), 1.0);
  net.V.re *= gain;
  net.V.im *= gain;
  const std::size_t nb = std::min<std::size_t>(std::max<std::size_t>(nc.calibration_batch, 1), data.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < nb; ++i) {
    const cvec ys = apply_mask(mask, data.measurements[i]);
    acc += net.V.apply(cmat(ys)).cwiseAbs().maxCoeff();
  }
  net.delta.setConstant(nc.delta_rel * acc / static_cast<double>(nb));
  return net;
}

/// The training loop shared by joint and single-axis selection learning.
inline TrainResult train_selection(const MeasurementModel& model, const Dataset& data, const TrainConfig& cfg,
                                   UnrolledNet net, SelectionState selection, const AxisPlan& plan,
                                   const std::function<void(const TrainLogRecord&)>& on_log = {}) {
  cfg.validate();
  selection.validate();
  net.validate();
  require(data.has_measurements(), "training needs paired measurements");
  require(net.n_meas() == static_cast<Index>(model.n_rows()) && net.n_pixels() == static_cast<Index>(model.n_pixels()),
          "network shape does not match the model");
  require(selection.length(Axis::kTransmit) == model.n_t() && selection.length(Axis::kReceive) == model.n_r() &&
              selection.length(Axis::kFrequency) == model.n_f(),
          "logits lengths do not match the model axes");
  for (int a = 0; a < 3; ++a) {
    if (!plan.trainable[a]) {
      require(plan.pinned[a].size() == selection.theta[a].size(), "pinned mask length mismatch");
      require(static_cast<std::size_t>(plan.pinned[a].sum()) == selection.m[a], "pinned mask popcount differs from M");
    }
  }

  const std::size_t b = std::min(cfg.batch_size, data.size());
  const Index n_meas = net.n_meas(), n_pix = net.n_pixels();

  // W is dimensionless; V and delta carry data units, so their steps are relative to initial size.
  const bool sc = cfg.scale_net_lr;
  const double s_v = sc ? std::hypot(detail::rms(net.V.re), detail::rms(net.V.im)) : 1.0;
  const double s_wre = cfg.lr_w_scale, s_wim = cfg.lr_w_scale;
  const double s_vre = s_v, s_vim = s_v;
  const double s_del = cfg.lr_delta_scale * (sc && net.delta.mean() > 0 ? net.delta.mean() : 1.0);

  Adam adam(cfg.beta1, cfg.beta2, cfg.eps);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = data.size();
  std::size_t epoch = 0;

  TrainResult out;
  out.log.reserve(cfg.n_iter);
  const BackwardOptions bopt{cfg.train_net, true};
  for (std::size_t it = 1; it <= cfg.n_iter; ++it) {
    const double gamma = temperature(it, cfg);
    const IterationSelection sel = draw_selection(selection, plan, gamma, cfg.seed, it);

    cmat yb(n_meas, static_cast<Index>(b));
    cmat xb(n_pix, static_cast<Index>(b));
    for (std::size_t k = 0; k < b; ++k) {
      if (cursor == data.size()) {
        auto rng = make_stream(cfg.seed, epoch++, detail::kBatchStream);
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const auto idx = order[cursor++];
      yb.col(static_cast<Index>(k)) = data.measurements[idx];
      xb.col(static_cast<Index>(k)) = data.scenes[idx].image;
    }
    const cmat ys = apply_mask(sel.mask, yb);
    ClfistaTape tape;
    const cmat x_hat = clfista_forward(net, ys, &tape);
    cmat seed;
    const double loss = batch_loss(cfg.loss, xb, x_hat, &seed);
    if (!std::isfinite(loss)) {
      throw TrainingError("non-finite loss at iteration " + std::to_string(it) + " (gamma " +
                              std::to_string(gamma) + ", last finite loss " +
                              (out.log.empty() ? std::string("n/a") : std::to_string(out.log.back().loss)) + ")",
                          loss);
    }
    const GradientBundle g = backward(net, tape, yb, sel, seed, bopt);

    std::vector<Adam::Group> groups;
    for (int a = 0; a < 3; ++a) groups.push_back({flat(selection.theta[a]), flat_const(g.d_theta[a]), cfg.lr});
    if (cfg.train_net) {
      groups.push_back({flat(net.W.re), flat_const(g.d_W_re), cfg.lr_net * s_wre});
      groups.push_back({flat(net.W.im), flat_const(g.d_W_im), cfg.lr_net * s_wim});
      groups.push_back({flat(net.V.re), flat_const(g.d_V_re), cfg.lr_net * s_vre});
      groups.push_back({flat(net.V.im), flat_const(g.d_V_im), cfg.lr_net * s_vim});
      groups.push_back({flat(net.delta), flat_const(g.d_delta), cfg.lr_net * s_del});
    }
    adam.step(groups);
    net.delta = net.delta.cwiseMax(0.0);

    TrainLogRecord rec;
    rec.iteration = it;
    rec.gamma = gamma;
    rec.loss = loss;
    for (int a = 0; a < 3; ++a) {
      rec.entropy[a] = logits_entropy(selection.theta[a]);
      rec.hard[a] = active_indices(sel.axes[a].hard);
    }
    if (on_log) on_log(rec);
    out.log.push_back(std::move(rec));
  }
  out.selection = std::move(selection);
  out.net = std::move(net);
  return out;
}

/// Joint selection of transmitters, receivers and frequency bins.
inline TrainResult train_jdps(const MeasurementModel& model, const Dataset& data, const TrainConfig& cfg,
                              UnrolledNet net, SelectionState selection,
                              const std::function<void(const TrainLogRecord&)>& on_log = {}) {
  return train_selection(model, data, cfg, std::move(net), std::move(selection), AxisPlan{}, on_log);
}

/// Network-only training with every axis held at the pattern `selection` and `plan` deploy.
/// Logits are left as they are. Log iterations continue from cfg.n_iter.
inline TrainResult finetune_network(const MeasurementModel& model, const Dataset& data, TrainConfig cfg,
                                    UnrolledNet net, SelectionState selection, const AxisPlan& plan,
                                    const std::function<void(const TrainLogRecord&)>& on_log = {}) {
  require(cfg.finetune_iters >= 1, "finetune_network: finetune_iters must be >= 1");
  AxisPlan frozen;
  for (int a = 0; a < 3; ++a) {
    frozen.trainable[a] = false;
    frozen.pinned[a] = plan.trainable[a] ? deterministic_selection(selection.theta[a], selection.m[a]) : plan.pinned[a];
  }
  const std::size_t offset = cfg.n_iter;
  cfg.n_iter = cfg.finetune_iters;
  cfg.seed ^= 0x9e3779b97f4a7c15ULL;
  cfg.train_net = true;
  auto relog = [&](const TrainLogRecord& r) {
    if (!on_log) return;
    TrainLogRecord shifted = r;
    shifted.iteration += offset;
    on_log(shifted);
  };
  TrainResult out = train_selection(model, data, cfg, std::move(net), std::move(selection), frozen, relog);
  for (auto& r : out.log) r.iteration += offset;
  return out;
}

/// Learns one axis; the other two stay at the given fixed masks.
inline TrainResult train_dps_single_axis(Axis axis, const MeasurementModel& model, const Dataset& data,
                                         const TrainConfig& cfg, UnrolledNet net, SelectionState selection,
                                         const std::array<rvec, 3>& pinned,
                                         const std::function<void(const TrainLogRecord&)>& on_log = {}) {
  AxisPlan plan;
  for (int a = 0; a < 3; ++a) {
    plan.trainable[a] = a == static_cast<int>(axis);
    if (!plan.trainable[a]) plan.pinned[a] = pinned[a];
  }
  return train_selection(model, data, cfg, std::move(net), std::move(selection), plan, on_log);
}

// ---------------------------------------------------------------------------
// Checkpoint container:
//   magic "FMCCKPT" + version byte, str method, str model_hash, network block,
//   then per axis: u8 trainable, u64 n, u64 m, f64[n] logits, u64 n_pinned, u64[n_pinned] pinned indices.

struct Checkpoint {
  std::string method;
  std::string model_hash;
  UnrolledNet net;
  SelectionState selection;
  AxisPlan plan;

  /// Hard pattern the checkpoint deploys: top-K of trained logits, fixed masks elsewhere.
  SelectionPattern pattern() const {
    std::array<rvec, 3> m;
    for (int a = 0; a < 3; ++a) {
      m[a] = plan.trainable[a] ? deterministic_selection(selection.theta[a], selection.m[a]) : plan.pinned[a];
    }
    auto p = SelectionPattern::from_masks(method, m[0], m[1], m[2]);
    p.logits = selection.theta;
    return p;
  }
};

namespace detail {
inline constexpr std::string_view kCheckpointMagic = "FMCCKPT";
inline constexpr std::uint8_t kCheckpointVersion = 1;
}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& c) {
  binio::ByteWriter w;
  binio::write_magic(w, detail::kCheckpointMagic, detail::kCheckpointVersion);
  w.str(c.method);
  w.str(c.model_hash);
  write_net(w, c.net);
  for (int a = 0; a < 3; ++a) {
    w.u8(c.plan.trainable[a] ? 1 : 0);
    w.u64(static_cast<std::uint64_t>(c.selection.theta[a].size()));
    w.u64(c.selection.m[a]);
    w.f64_array(c.selection.theta[a].data(), static_cast<std::size_t>(c.selection.theta[a].size()));
    const auto pinned = c.plan.trainable[a] ? std::vector<std::size_t>{} : active_indices(c.plan.pinned[a]);
    w.u64(pinned.size());
    for (auto i : pinned) w.u64(i);
  }
  return w.bytes();
}

inline Checkpoint deserialize_checkpoint(std::string_view bytes) {
  binio::ByteReader r(bytes);
  binio::read_magic(r, detail::kCheckpointMagic, detail::kCheckpointVersion);
  Checkpoint c;
  c.method = r.str();
  c.model_hash = r.str();
  c.net = read_net(r);
  for (int a = 0; a < 3; ++a) {
    c.plan.trainable[a] = r.u8() != 0;
    const auto n = r.u64();
    c.selection.m[a] = r.u64();
    if (n > r.remaining() / 8) throw FormatError("truncated file");
    c.selection.theta[a].resize(static_cast<Index>(n));
    r.f64_array(c.selection.theta[a].data(), n);
    const auto np = r.u64();
    if (np > n) throw FormatError("pinned index count exceeds axis length");
    std::vector<std::size_t> idx(np);
    for (auto& i : idx) {
      i = r.u64();
      if (i >= n) throw FormatError("pinned index out of range");
    }
    if (!c.plan.trainable[a]) c.plan.pinned[a] = indicator(n, idx);
  }
  r.expect_end();
  try {
    c.selection.validate();
    c.net.validate();
  } catch (const ContractViolation& e) {
    throw FormatError(std::string("inconsistent checkpoint: ") + e.what());
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  binio::write_file(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(binio::read_file(path));
}

}  // namespace fmcsub

#endif  // FMCSUB_TRAINING_HPP
