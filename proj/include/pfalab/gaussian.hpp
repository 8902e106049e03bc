#ifndef PFALAB_GAUSSIAN_HPP
#define PFALAB_GAUSSIAN_HPP

#include <cstddef>
#include <vector>

namespace pfalab::gaussian {

// Standard normal cdf via the complementary error function; absolute
// error well below 1e-14.  +-infinity map to 1 and 0.
double std_normal_cdf(double x);

// Standard normal density.
double std_normal_pdf(double x);

// Standard normal quantile (Wichura's rational approximations, relative
// error ~1e-16).  p in (0, 1); p = 0 and p = 1 return -+infinity.
// Throws std::invalid_argument outside [0, 1].
double std_normal_quantile(double p);

// Rejection probability of one index conditional on the factors:
// the two-sided p-value 2 Phi(-|z_i|) falls at or below t.  shift is
// mu_i + eta_i.  Non-degenerate indices integrate the residual normal
// over the complement of [c2, c1]; degenerate indices (zero residual
// variance) have a deterministic p-value, with ties 2 Phi(-|shift|) = t
// counted as rejections.
double marginal_rejection_prob(double t, double shift, double a,
                               bool degenerate);

// Per-index threshold geometry at level t, conditional on the factor
// draw behind shift[i] = mu_i + eta_i:
//   z_half = Phi^{-1}(t/2) <= 0
//   r1 = -z_half - shift,  r2 = z_half - shift   (r1 >= r2)
//   c1 = a * r1,  c2 = a * r2                    (NaN when degenerate)
//   marginal_prob = marginal_rejection_prob per index.
struct ThresholdProfile {
  double t = 0.0;
  double z_half = 0.0;
  std::vector<double> r1, r2;
  std::vector<double> c1, c2;
  std::vector<double> marginal_prob;
  std::vector<char> degenerate;

  std::size_t size() const { return marginal_prob.size(); }
};
ThresholdProfile build_threshold_profile(double t,
                                         const std::vector<double>& shift,
                                         const std::vector<double>& a,
                                         const std::vector<char>& degenerate);

// P(c2_i <= V_i <= c1_i, c2_j <= V_j <= c1_j) for standard normal
// (V_i, V_j) with correlation rho: the probability that neither index
// rejects.  Evaluated through the one-factor representation
//   integral of [Phi((sqrt(rho) z + c1_i)/sqrt(1-rho)) - (c2_i term)]
//            dot [same for j] dPhi(z)
// by adaptive Gauss-Kronrod quadrature on |z| <= 8.5 (density below
// 1e-16 outside), absolute error <= 1e-9.  Negative rho is handled by
// reflecting index j (exact by symmetry), so the kernel only ever sees
// rho >= 0.  Throws std::domain_error when |rho| >= 1 - 1e-9; the
// caller owns near-comonotone pairs.
double joint_survival(double rho, double c1_i, double c2_i, double c1_j,
                      double c2_j);

// Exact boundary cases |rho| = 1: one acceptance band intersected with
// the other (comonotone, sign > 0) or with its reflection (antithetic).
double comonotone_survival(double sign, double c1_i, double c2_i, double c1_j,
                           double c2_j);

enum class PairMethod {
  kQuadrature,
  kDegenerateBranch,
  kReflectionBranch,
  kBoundaryClosedForm
};
const char* pair_method_name(PairMethod method);

// Covariance of the two non-rejection indicators:
//   cov(Y_i, Y_j) = E[Y_i Y_j] - (1 - p_i)(1 - p_j)
// which equals the covariance of the rejection indicators.  Degenerate
// indices make their indicator deterministic, so the covariance is
// exactly zero on that branch.  Pairs at the quadrature domain edge
// (|rho| >= 1 - 1e-9, notably rank-one residual blocks where the
// correlation is exactly +-1) take the closed-form boundary branch.
struct PairCovariance {
  std::size_t i = 0;
  std::size_t j = 0;
  double rho = 0.0;
  double joint_survival = 0.0;
  double cov = 0.0;
  PairMethod method = PairMethod::kQuadrature;
};
PairCovariance pair_covariance(std::size_t i, std::size_t j, double rho,
                               const ThresholdProfile& profile);

}  // namespace pfalab::gaussian

#endif  // PFALAB_GAUSSIAN_HPP
