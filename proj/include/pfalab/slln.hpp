#ifndef PFALAB_SLLN_HPP
#define PFALAB_SLLN_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "pfalab/constructions.hpp"
#include "pfalab/gaussian.hpp"
#include "pfalab/pfa.hpp"
#include "pfalab/rng.hpp"

namespace pfalab::slln {

// Mean-vector rule: indices 0, s, 2s, ... receive `value`, where the
// stride is s = max(1, floor(1/fraction)); fraction 0 keeps all means
// at zero.
struct MuRule {
  double fraction = 0.0;
  double value = 0.0;
};

std::vector<double> make_mu(std::size_t m, const MuRule& rule);

struct PairBudget {
  std::size_t max_pairs = 2000000;
};

// Full description of a dimension-sweep experiment.  Everything that
// influences numbers lives here; worker-thread count deliberately does
// not (results are thread-count invariant).
struct ExperimentConfig {
  std::string family = "block-diag";
  std::vector<std::size_t> m_grid;
  double t = 0.1;
  MuRule mu_rule;
  double c = 1.0;
  double delta = 0.4;
  double eps_g = 0.05;   // exclusion-band radius around the thresholds
  double eps_s = 0.1;    // high-correlation cutoff (|rho| > 1 - eps_s)
  std::size_t replications = 100;
  std::uint64_t seed = 0;
  std::string k_rule = "half";  // "half" (k = m/2) or "select" (scan)
  PairBudget budget;
  std::vector<double> beta_grid = {1.0, 2.0};

  void validate() const;
};

constructions::FamilyKind parse_family(const std::string& name);

// One draw of the underlying Gaussian vector together with the pieces
// that define the conditional experiment: the factor coordinates and
// the factor contribution eta = L * w_factors.
struct SampleResult {
  std::vector<double> z;
  std::vector<double> w_factors;
  std::vector<double> eta;
};

// z = mu + T sqrt(D) w with w ~ N(0, I_m) drawn from rng (2m uniforms).
SampleResult sample_z(const std::vector<double>& mu,
                      const pfa::PfaModel& model, Rng& rng);

// Number of indices with two-sided p-value 2 Phi(-|z_i|) <= t.
std::size_t rejection_count(const std::vector<double>& z, double t);

// Mean of the per-index rejection probabilities: E[R(t)/m | factors].
double conditional_mean(const gaussian::ThresholdProfile& profile);

struct VarianceOptions {
  // Pairs with |rho| >= rho_cutoff skip the exact computation and
  // contribute their Cauchy-Schwarz bound (counted separately, never
  // silently dropped).  The default (above 1) disables the
  // substitution, so every pair is computed exactly: quadrature below
  // the domain edge, closed form at |rho| = 1.  Sweeps lower the
  // cutoff to 1 - eps_s to mirror the high-correlation budget.
  double rho_cutoff = 2.0;
  std::size_t max_pairs = 2000000;
  int threads = 1;
};

struct VarianceResult {
  double variance = 0.0;   // m^{-2} (diag_sum + 2 pair_sum)
  double diag_sum = 0.0;   // sum_i p_i (1 - p_i)
  double pair_sum = 0.0;   // sum_{i<j} cov_ij with CS substitutions
  std::size_t exact_pairs = 0;  // computed exactly (quadrature or closed form)
  std::size_t cs_pairs = 0;
  std::size_t degenerate_pairs = 0;
  std::size_t zero_pairs = 0;  // exact zero residual correlation
};

// Exact conditional variance of R(t)/m given the factor draw behind
// `profile`.  Deterministic for any thread count: pairs are split into
// fixed-size chunks, each chunk is summed with compensated addition,
// and chunk totals are combined in index order.
// Throws ResourceBudgetError when the live pair count exceeds
// options.max_pairs.
VarianceResult conditional_variance_exact(
    const pfa::PfaModel& model, const gaussian::ThresholdProfile& profile,
    const VarianceOptions& options);

struct GEventResult {
  bool hit = false;
  std::vector<std::size_t> offenders;
};

// Flags tracked indices whose recentred acceptance boundary comes
// within eps_g of zero: min(|r1_i|, |r2_i|) < eps_g.  Decay claims are
// asserted only on runs with no hit.
GEventResult g_event_check(const gaussian::ThresholdProfile& profile,
                           double eps_g,
                           const std::vector<std::size_t>& tracked);

struct GridPointReport {
  std::size_t m = 0;
  std::size_t k = 0;
  double theta = 0.0;
  double conditional_mean = 0.0;
  double variance_exact = 0.0;
  double diag_sum = 0.0;
  double pair_sum = 0.0;
  std::size_t exact_pairs = 0;  // computed exactly (quadrature or closed form)
  std::size_t cs_pairs = 0;
  std::size_t s_eps_count = 0;
  double s_eps_normalized = 0.0;  // m^{delta - 2} |S_eps|
  double deviation_mean = 0.0;
  double deviation_median = 0.0;
  double deviation_q90 = 0.0;
  bool g_hit = false;
  std::vector<std::size_t> g_offenders;
  std::vector<std::size_t> tracked;     // indices scanned for the G event
  std::vector<double> weak_dep_sums;    // one entry per config.beta_grid
};

struct SlopeFit {
  bool defined = false;
  double value = 0.0;
  std::size_t points_used = 0;
};

// Least-squares slope of log(y) against log(m); undefined when fewer
// than two usable (y > 0) points remain.
SlopeFit fit_log_slope(const std::vector<double>& ms,
                       const std::vector<double>& ys);

struct LyonsCheck {
  std::vector<double> partial_sums;  // cumulative sums of m^{-1} V_m
  bool exponent_defined = false;
  double exponent = 0.0;  // fitted decay exponent of m^{-1} V_m
  bool converges = false; // exponent < -1.05 (margin beyond harmonic)
};

// Desk-scale summability check for the strong-law criterion.  Requires
// at least three grid points; the verdict is a report, not a proof.
LyonsCheck lyons_check(const std::vector<std::size_t>& m_grid,
                       const std::vector<double>& variances);

// Slots tracked across the grid for regime classification: the first
// index, the first residual-side index (k), and the last index.
inline constexpr std::size_t kTrackedSlots = 3;

struct SllnReport {
  ExperimentConfig config;
  std::vector<GridPointReport> points;
  // Regime of each tracked slot, classified on its cross-grid series.
  std::vector<pfa::Regime> tracked_regimes;
  pfa::RatioCondition ratio;  // growth-ratio check on diverging slots
  SlopeFit slope;             // log V_m vs log m, G-hit points excluded
  double slope_target = 0.0;  // -delta: the asserted decay bound
  double slope_strong = 0.0;  // -2 delta: reported, not asserted
  bool slope_ok = false;
  bool low_confidence = false;  // fewer than 3 usable fit points
  bool any_g_hit = false;
  bool lyons_applicable = false;
  LyonsCheck lyons;
};

// Runs the full conditional experiment over config.m_grid.  Per grid
// point: build the family, pick k, decompose, draw one factor vector,
// compute the exact conditional mean/variance, then estimate deviation
// quantiles of |R(t)/m - conditional mean| over `replications` fresh
// residual draws (the factor draw is held fixed per m and independent
// across m).  Threads only parallelize pair summation.
SllnReport sweep(const ExperimentConfig& config, int threads = 1);

}  // namespace pfalab::slln

#endif  // PFALAB_SLLN_HPP
