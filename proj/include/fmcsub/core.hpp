// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

#ifndef FMCSUB_CORE_HPP
#define FMCSUB_CORE_HPP

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace fmcsub {

using cplx = std::complex<double>;
using cvec = Eigen::VectorXcd;
using cmat = Eigen::MatrixXcd;
using rvec = Eigen::VectorXd;
using rmat = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Seeded generator used throughout; every stochastic operation takes one explicitly.
using Rng = std::mt19937_64;

/// Base of all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Physically invalid parameter (non-positive velocity, bad pulse constants, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an operation's precondition (shape mismatch, m > n, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class ResourceError : public Error {
 public:
  using Error::Error;
};

/// Malformed or incompatible file content.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File missing or unreadable.
class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Iterative method failed to converge or diverged. Carries the last estimate.
class NumericalError : public Error {
 public:
  NumericalError(const std::string& what, double last_estimate)
      : Error(what), last_estimate_(last_estimate) {}
  double last_estimate() const noexcept { return last_estimate_; }

 private:
  double last_estimate_;
};

/// Independent generator for sub-stream `stream` of a master seed.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(tag)};
  return Rng(seq);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}

}  // namespace fmcsub

#endif  // FMCSUB_CORE_HPP
