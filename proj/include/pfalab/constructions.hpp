#ifndef PFALAB_CONSTRUCTIONS_HPP
#define PFALAB_CONSTRUCTIONS_HPP

#include <cstddef>
#include <vector>

#include "pfalab/matlin.hpp"
#include "pfalab/rng.hpp"

namespace pfalab::constructions {

// Linear epsilon profile: eps_j = first + (last - first) * (j-1)/(k-1).
// Defaults reproduce (0.1, 0.2, 0.3, 0.4) at k = 4 and keep eps_k = 0.4
// fixed across dimensions, so tail constants do not drift with m.
struct EpsilonRule {
  double first = 0.1;
  double last = 0.4;
};

// Two-sided spectrum plan on an even dimension m with k = m/2:
// construction-order eigenvalues are (1 + eps_1, ..., 1 + eps_k,
// 1 - eps_1, ..., 1 - eps_k); note sum = m and the pairing
// (1 + eps_j) + (1 - eps_j) = 2 holds exactly in floating point.
struct EigenSpectrumPlan {
  std::size_t m = 0;
  std::size_t k = 0;
  std::vector<double> epsilons;  // strictly increasing, each in (0, 1)

  std::vector<double> eigenvalues_construction_order() const;
  std::vector<double> eigenvalues_sorted_desc() const;
  void validate() const;
};

EigenSpectrumPlan make_spectrum(std::size_t m, const EpsilonRule& rule = {});
EigenSpectrumPlan make_spectrum_explicit(std::size_t m,
                                         std::vector<double> epsilons);

enum class FamilyKind { kBlockDiag, kDense, kBoundedTail, kMixed };
const char* family_name(FamilyKind kind);

// A generated covariance instance together with its design factors:
// sigma == t * diag(d) * t^T with t orthogonal and d in construction order.
// planned_spectrum is d sorted descending; an eigendecomposition of sigma
// must recover it within 1e-8 (see verify_spectrum_recovery).
struct FamilyOutput {
  FamilyKind kind = FamilyKind::kDense;
  matlin::CorrelationMatrix sigma;
  std::size_t design_k = 0;  // the family's factor count, m/2
  std::vector<double> planned_spectrum;
  matlin::Matrix t;
  std::vector<double> d;
};

// Block-diagonal family: block 1 (indices 0..k-1) is the raw Gram
// q1 * diag(1 + eps_j) * q1^T; block 2 is a unit-diagonal matrix with
// spectrum nu_j = 1 + (eps_1/2) * (k-1-2(j-1))/(k-1), rotated to a
// correlation matrix by Bendel-Mickey Givens sweeps. Every block-1
// eigenvalue exceeds every block-2 eigenvalue, so the top-k eigenspace
// is exactly block 1. Diagonal is unity only on block 2; the matrix is
// standardized in aggregate (trace close to m), not entrywise.
FamilyOutput build_block_diag_family(const EigenSpectrumPlan& plan, Rng& rng);

// Deterministic assembly from caller-provided orthogonal blocks; throws
// std::invalid_argument if either assembled block is (numerically)
// diagonal, i.e. carries no coupling (max off-diagonal < 1e-6).
FamilyOutput assemble_block_diag(const EigenSpectrumPlan& plan,
                                 const matlin::Matrix& q1,
                                 const matlin::Matrix& q2);

// Rotate a symmetric PSD matrix with trace n to unit diagonal by Givens
// rotations in planes of off-unity diagonal pairs (spectrum preserved).
// basis rows are updated alongside so that a == basis * diag(spectrum
// of input) * basis^T stays true. Exposed for direct testing.
void bendel_mickey_to_correlation(matlin::Matrix& a, matlin::Matrix& basis);

// Tilted positive unit vector u_i proportional to 1 + (i-1)/(2(m-1));
// every entry lies in (0, 1) and stays away from sqrt(1/2).
std::vector<double> make_dense_profile(std::size_t m);

// Dense family: Householder reflection T = I - 2 u u^T applied to the
// plan's construction-order eigenvalues. All m^2 entries of T are
// bounded away from zero, so every index keeps positive residual
// variance at any factor count.
FamilyOutput build_dense_family(const EigenSpectrumPlan& plan);
FamilyOutput build_dense_family(const EigenSpectrumPlan& plan,
                                const std::vector<double>& u);

// Bounded-tail family: dense profile on indices 0..m-2 rescaled to norm
// sqrt(1 - u0^2), last entry u0 (small). Construction column m carries
// 1 - eps_k, so sigma_resid[m-1] >= (1 - eps_k)(1 - 2 u0^2)^2 and
// a[m-1] <= 1 / ((1 - 2 u0^2) sqrt(1 - eps_k)) for any u0 in (0, 1/4].
FamilyOutput build_bounded_tail_family(const EigenSpectrumPlan& plan,
                                       double u0 = 1e-5);

// Mixed family (m >= 8): u_1 = m^{-1/2}, u_2..u_{k-1} equal, u_k =
// sqrt(2)/4, u_{k+1} = tilde_u0 in (0, 1/8), u_j = 0 for j >= k+2.
// Eigenvalue-to-column map: 1..k-1 -> 1+eps_{1..k-1}, k -> 1-eps_k,
// k+1 -> 1-eps_1, k+2..m-1 -> 1-eps_{2..k-1}, m -> 1+eps_k. At factor
// count k this yields, exactly:
//   sigma_resid[0]   = 4 l_{k+1} u_1^2 tilde_u0^2 + (1/2) l_m u_1^2
//   sigma_resid[m-1] = 0                     (degenerate index)
// with l_{k+1} = 1 - eps_1, l_m = 1 - eps_k, and
//   sigma_resid[k]  >= (1 - eps_k)[(1 - 2 tilde_u0^2)^2 + 2 tilde_u0^2].
FamilyOutput build_mixed_family(const EigenSpectrumPlan& plan,
                                double tilde_u0 = 0.1);

// Closed forms / bounds backing the comments above.
double mixed_sigma1_closed_form(const EigenSpectrumPlan& plan, double tilde_u0);
double mixed_sigma_k1_lower_bound(double eps_last, double tilde_u0);
double bounded_tail_a_bound(double eps_last, double u0);

// Residual quality sqrt(sum of squares of the m - k smallest planned
// eigenvalues) / m at the family's design factor count.
double planned_theta(const FamilyOutput& fam);

// Re-decomposes fam.sigma, compares the recovered spectrum against
// planned_spectrum elementwise (descending, tolerance 1e-8) and checks
// the implied residual quality at design_k to the same tolerance.
// Throws VerificationError on mismatch.
void verify_spectrum_recovery(const FamilyOutput& fam);

}  // namespace pfalab::constructions

#endif  // PFALAB_CONSTRUCTIONS_HPP
