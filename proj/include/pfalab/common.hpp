#ifndef PFALAB_COMMON_HPP
#define PFALAB_COMMON_HPP

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace pfalab {

// Residual variances at or below this level are treated as exactly degenerate:
// the conditional indicator is deterministic and the scale factor is infinite.
inline constexpr double kDegenerateSigmaTol = 1e-12;

// Pairs whose residual correlation reaches this magnitude are outside the
// domain of the bivariate quadrature and are bounded instead of integrated.
inline constexpr double kRhoDomainLimit = 1.0 - 1e-9;

// Thrown when a computed artifact fails one of its published guarantees
// (as opposed to the caller passing bad input).
class VerificationError : public std::runtime_error {
 public:
  explicit VerificationError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a computation would exceed a configured resource budget.
class ResourceBudgetError : public std::runtime_error {
 public:
  explicit ResourceBudgetError(const std::string& what) : std::runtime_error(what) {}
};

// Compensated (Neumaier) accumulator.  Summation order is fixed by the caller,
// which keeps parallel reductions bit-reproducible when chunk boundaries are
// fixed independently of the worker count.
class KahanSum {
 public:
  void add(double value) {
    const double t = sum_ + value;
    if (std::abs(sum_) >= std::abs(value)) {
      comp_ += (sum_ - t) + value;
    } else {
      comp_ += (value - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace pfalab

#endif  // PFALAB_COMMON_HPP
