#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace hspline {

/// Bad input: wrong sizes, out-of-range parameters, malformed files.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// All sites (or a required triple of sites) lie on one line.
class CollinearSitesError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A factorization or solve produced an unusable result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Conjugate gradient ran out of iterations. Carries the residual history so
/// callers can inspect how far it got.
class NonConvergenceError : public NumericalError {
 public:
  NonConvergenceError(const std::string& what, std::vector<double> history)
      : NumericalError(what), history_(std::move(history)) {}

  const std::vector<double>& residual_history() const noexcept { return history_; }

 private:
  std::vector<double> history_;
};

}  // namespace hspline
