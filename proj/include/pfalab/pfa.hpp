#ifndef PFALAB_PFA_HPP
#define PFALAB_PFA_HPP

#include <cstddef>
#include <utility>
#include <vector>

#include "pfalab/matlin.hpp"

namespace pfalab::pfa {

// Principal factor split of a covariance matrix at factor count k.
//
// Given the spectral form sigma = T diag(lambda) T^T with descending
// lambda, the first k principal columns form the factor part and the
// rest the residual part:
//   loadings L[i][j] = sqrt(lambda_j) T[i][j]           (m x k)
//   omega_i          = sum_{j<k} lambda_j T[i][j]^2     (variance explained)
//   resid_cov A      = sigma - L L^T, accumulated as the spectral tail
//                      sum_{j>=k} lambda_j T_j T_j^T (cancellation-free,
//                      PSD by construction; L L^T + A recovers sigma to
//                      eigensolver accuracy)
//   sigma_resid_i    = A[i][i] (nonnegative residual variance)
//   a_i              = sigma_resid_i^{-1/2}, or +infinity when the index
//                      is degenerate (sigma_resid_i <= 1e-12)
//   resid_corr       = A scaled to unit diagonal; rows/columns of
//                      degenerate indices are exactly 0.
//
// sigma_resid is the true residual variance (the diagonal of A).  For a
// unit-diagonal sigma it coincides with 1 - omega_i; for inputs that are
// standardized only in aggregate (trace ~ m) the two differ and the
// diagonal of A is authoritative.
struct PfaModel {
  std::size_t m = 0;
  std::size_t k = 0;
  std::vector<double> eigenvalues;  // descending, >= 0
  matlin::Matrix t;                 // m x m eigenvector columns
  matlin::Matrix loadings;          // m x k
  std::vector<double> omega;
  std::vector<double> sigma_resid;
  std::vector<double> a;
  std::vector<char> degenerate;     // sigma_resid[i] <= 1e-12
  matlin::Matrix resid_cov;
  matlin::Matrix resid_corr;

  std::size_t degenerate_count() const;
};

// Residual quality: sqrt(lambda_{k+1}^2 + ... + lambda_m^2) / m for a
// descending eigenvalue vector.  k = m gives exactly 0.  Throws
// std::invalid_argument if the vector is not sorted (slack 1e-12) or
// k > m.
double theta(const std::vector<double>& eigenvalues, std::size_t k);

// Smallest k whose residual quality passes theta <= c * m^{-delta},
// found by linear scan; k = m always satisfies the bound.
struct KSelection {
  std::size_t k = 0;
  double theta = 0.0;
  double bound = 0.0;
};
KSelection select_k(const std::vector<double>& eigenvalues, double c,
                    double delta);

PfaModel decompose(const matlin::CorrelationMatrix& sigma, std::size_t k);

// Same split, but reusing a decomposition the caller already has.
PfaModel from_decomposition(const matlin::CorrelationMatrix& sigma,
                            const matlin::SpectralDecomposition& dec,
                            std::size_t k);

// Pairs (i < j), both non-degenerate, whose residual correlation exceeds
// 1 - eps in magnitude.  The full count is exact; the listed pairs are
// capped at max_pairs_reported.
struct SEpsilonResult {
  std::size_t count = 0;
  double threshold = 0.0;  // 1 - eps
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
};
SEpsilonResult s_epsilon(const PfaModel& model, double eps,
                         std::size_t max_pairs_reported = 64);

// m^{-2} * sum_{i <= j} |A[i][j]|^beta over the residual covariance,
// diagonal included.  beta must lie in (0, 2].
double weak_dependence_sum(const PfaModel& model, double beta);

// Finite-grid regime label for one tracked index followed across an
// m-grid: degenerate if its residual variance hits the 1e-12 floor at
// any grid point; else diverging if a grows by at least growth_ratio
// from the smallest to the largest m; else bounded.
enum class Regime { kBounded, kDiverging, kDegenerateAtFiniteM };
const char* regime_name(Regime regime);

struct TrackedSeries {
  std::vector<double> sigma_resid;  // one value per grid point
  std::vector<double> a;
};
Regime classify_regime(const TrackedSeries& series, double growth_ratio = 4.0);

// Growth-exponent diagnostic for the divergence-rate relation between
// the largest and smallest diverging a-values.  Input: for each grid
// point, the a-values of the indices classified as diverging there.
// Applicable only with >= 3 grid points, each carrying >= 2 values all
// strictly above 1 (so the logarithms are positive); otherwise the
// result is marked not applicable (which is not an error).  Per grid
// point the ratio log(max a) / log(min a) is recorded; the headline
// estimate is the ratio at the largest m, and the sequence is flagged
// stable when max/min of the ratios is <= 2.
struct RatioCondition {
  bool applicable = false;
  bool stable = false;
  double q_estimate = 0.0;  // meaningful only when applicable
  std::vector<double> per_m_ratio;
};
RatioCondition ratio_condition(
    const std::vector<std::vector<double>>& diverging_a_per_m);

// Side-condition summary for one model.  ratio_q_estimate uses a
// single-dimension surrogate of the grid diagnostic above: the ratio
// log(max a) / log(min a) over all non-degenerate indices, reported
// only when at least two such indices exist and min a > 1 + 1e-9.
struct ConditionReport {
  double theta_m = 0.0;
  std::size_t k_used = 0;
  double delta = 0.0;
  double c = 0.0;
  double eps = 0.0;              // the eps behind s_eps_count
  std::size_t s_eps_count = 0;
  double s_eps_normalized = 0.0;  // m^{-2+delta} * s_eps_count
  bool ratio_applicable = false;
  double ratio_q_estimate = 0.0;
  std::vector<std::pair<double, double>> weak_dep_sums;  // (beta, value)
};
ConditionReport build_condition_report(const PfaModel& model, double c,
                                       double delta, double eps,
                                       const std::vector<double>& beta_grid);

}  // namespace pfalab::pfa

#endif  // PFALAB_PFA_HPP
