#include "pfalab/slln.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

#include "pfalab/common.hpp"
#include "pfalab/matlin.hpp"

namespace pfalab::slln {

namespace {

// Pairs are processed in fixed-size chunks so that the compensated
// reduction is independent of the worker count.
constexpr std::size_t kPairChunk = 4096;

struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double x) {
    const double y = x - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
};

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Linear-interpolation quantile on a sorted sample (q in [0, 1]).
double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= sorted.size()) return sorted.back();
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

std::vector<double> make_mu(std::size_t m, const MuRule& rule) {
  require(m > 0, "make_mu: m must be positive");
  require(std::isfinite(rule.fraction) && rule.fraction >= 0.0 &&
              rule.fraction <= 1.0,
          "make_mu: fraction must lie in [0, 1]");
  require(std::isfinite(rule.value), "make_mu: non-finite value");
  std::vector<double> mu(m, 0.0);
  if (rule.fraction == 0.0 || rule.value == 0.0) return mu;
  const std::size_t stride = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(1.0 / rule.fraction)));
  for (std::size_t i = 0; i < m; i += stride) mu[i] = rule.value;
  return mu;
}

constructions::FamilyKind parse_family(const std::string& name) {
  if (name == "block-diag") return constructions::FamilyKind::kBlockDiag;
  if (name == "dense") return constructions::FamilyKind::kDense;
  if (name == "bounded-tail") return constructions::FamilyKind::kBoundedTail;
  if (name == "mixed") return constructions::FamilyKind::kMixed;
  throw std::invalid_argument("parse_family: unknown family '" + name + "'");
}

void ExperimentConfig::validate() const {
  parse_family(family);
  require(!m_grid.empty(), "ExperimentConfig: empty m_grid");
  for (std::size_t g = 0; g < m_grid.size(); ++g) {
    require(m_grid[g] >= 4 && m_grid[g] % 2 == 0,
            "ExperimentConfig: every m must be even and >= 4");
    if (g > 0)
      require(m_grid[g] > m_grid[g - 1],
              "ExperimentConfig: m_grid must be strictly increasing");
  }
  require(std::isfinite(t) && t > 0.0 && t < 1.0,
          "ExperimentConfig: t must lie in (0, 1)");
  require(std::isfinite(mu_rule.fraction) && mu_rule.fraction >= 0.0 &&
              mu_rule.fraction <= 1.0,
          "ExperimentConfig: mu fraction must lie in [0, 1]");
  require(std::isfinite(mu_rule.value), "ExperimentConfig: non-finite mu value");
  require(std::isfinite(c) && c > 0.0, "ExperimentConfig: C must be positive");
  require(std::isfinite(delta) && delta > 0.0,
          "ExperimentConfig: delta must be positive");
  require(std::isfinite(eps_g) && eps_g > 0.0,
          "ExperimentConfig: eps_g must be positive");
  require(std::isfinite(eps_s) && eps_s > 1e-9 && eps_s < 1.0,
          "ExperimentConfig: eps_s must lie in (1e-9, 1)");
  require(replications >= 1, "ExperimentConfig: replications must be >= 1");
  require(k_rule == "half" || k_rule == "select",
          "ExperimentConfig: k_rule must be 'half' or 'select'");
  require(budget.max_pairs >= 1, "ExperimentConfig: max_pairs must be >= 1");
  require(!beta_grid.empty(), "ExperimentConfig: empty beta_grid");
  for (double beta : beta_grid)
    require(std::isfinite(beta) && beta > 0.0 && beta <= 2.0,
            "ExperimentConfig: beta must lie in (0, 2]");
}

SampleResult sample_z(const std::vector<double>& mu,
                      const pfa::PfaModel& model, Rng& rng) {
  const std::size_t m = model.m;
  require(mu.size() == m, "sample_z: mu length does not match the model");
  require(model.t.rows() == m && model.t.cols() == m &&
              model.eigenvalues.size() == m,
          "sample_z: malformed decomposition");
  const std::size_t k = model.k;

  std::vector<double> w(m);
  for (std::size_t j = 0; j < m; ++j) w[j] = rng.normal();

  SampleResult out;
  out.w_factors.assign(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(k));
  out.eta.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* l = model.loadings.row_ptr(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += l[j] * w[j];
    out.eta[i] = acc;
  }

  // Tail scale factors sqrt(lambda_j) for the residual component.
  std::vector<double> scaled_tail(m - k);
  for (std::size_t j = k; j < m; ++j)
    scaled_tail[j - k] = std::sqrt(std::max(model.eigenvalues[j], 0.0)) * w[j];

  out.z.assign(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = model.t.row_ptr(i);
    double tail = 0.0;
    for (std::size_t j = k; j < m; ++j) tail += row[j] * scaled_tail[j - k];
    out.z[i] = mu[i] + out.eta[i] + tail;
  }
  return out;
}

std::size_t rejection_count(const std::vector<double>& z, double t) {
  require(std::isfinite(t) && t >= 0.0 && t <= 1.0,
          "rejection_count: t must lie in [0, 1]");
  std::size_t count = 0;
  for (double zi : z) {
    const double p = 2.0 * gaussian::std_normal_cdf(-std::abs(zi));
    if (p <= t) ++count;
  }
  return count;
}

double conditional_mean(const gaussian::ThresholdProfile& profile) {
  const std::size_t m = profile.size();
  require(m > 0, "conditional_mean: empty profile");
  KahanSum acc;
  for (double p : profile.marginal_prob) acc.add(p);
  return acc.sum / static_cast<double>(m);
}

VarianceResult conditional_variance_exact(
    const pfa::PfaModel& model, const gaussian::ThresholdProfile& profile,
    const VarianceOptions& options) {
  const std::size_t m = model.m;
  require(m > 0 && profile.size() == m,
          "conditional_variance_exact: profile/model size mismatch");
  require(profile.degenerate == model.degenerate,
          "conditional_variance_exact: profile degeneracy disagrees with "
          "the model");
  require(std::isfinite(options.rho_cutoff) && options.rho_cutoff > 0.0,
          "conditional_variance_exact: rho_cutoff must be positive");
  require(options.max_pairs >= 1,
          "conditional_variance_exact: max_pairs must be >= 1");
  require(options.threads >= 1,
          "conditional_variance_exact: threads must be >= 1");

  VarianceResult out;
  KahanSum diag;
  for (std::size_t i = 0; i < m; ++i) {
    const double p = profile.marginal_prob[i];
    diag.add(p * (1.0 - p));
  }
  out.diag_sum = diag.sum;

  std::vector<std::size_t> live;
  live.reserve(m);
  for (std::size_t i = 0; i < m; ++i)
    if (!model.degenerate[i]) live.push_back(i);
  const std::size_t n_live = live.size();
  const std::size_t n_pairs = n_live * (n_live - (n_live ? 1 : 0)) / 2;
  out.degenerate_pairs = m * (m - 1) / 2 - n_pairs;

  if (n_pairs > options.max_pairs) {
    std::ostringstream msg;
    msg << "conditional_variance_exact: " << n_pairs
        << " live pairs exceed the budget of " << options.max_pairs;
    throw ResourceBudgetError(msg.str());
  }

  if (n_pairs > 0) {
    // Cumulative pair counts per live row for unranking linear indices.
    std::vector<std::size_t> row_offset(n_live + 1, 0);
    for (std::size_t r = 0; r < n_live; ++r)
      row_offset[r + 1] = row_offset[r] + (n_live - 1 - r);

    const std::size_t n_chunks = (n_pairs + kPairChunk - 1) / kPairChunk;
    std::vector<double> chunk_sum(n_chunks, 0.0);
    std::vector<std::size_t> chunk_quad(n_chunks, 0);
    std::vector<std::size_t> chunk_cs(n_chunks, 0);
    std::vector<std::size_t> chunk_zero(n_chunks, 0);

    auto run_chunk = [&](std::size_t c) {
      const std::size_t begin = c * kPairChunk;
      const std::size_t end = std::min(n_pairs, begin + kPairChunk);
      std::size_t r = static_cast<std::size_t>(
                          std::upper_bound(row_offset.begin(), row_offset.end(),
                                           begin) -
                          row_offset.begin()) -
                      1;
      std::size_t s = begin - row_offset[r];
      KahanSum acc;
      for (std::size_t lin = begin; lin < end; ++lin) {
        const std::size_t i = live[r];
        const std::size_t j = live[r + 1 + s];
        const double rho = model.resid_corr(i, j);
        if (rho == 0.0) {
          ++chunk_zero[c];
        } else if (std::abs(rho) >= options.rho_cutoff) {
          const double pi = profile.marginal_prob[i];
          const double pj = profile.marginal_prob[j];
          acc.add(std::sqrt(pi * (1.0 - pi) * pj * (1.0 - pj)));
          ++chunk_cs[c];
        } else {
          acc.add(gaussian::pair_covariance(i, j, rho, profile).cov);
          ++chunk_quad[c];
        }
        if (++s == n_live - 1 - r) {
          ++r;
          s = 0;
        }
      }
      chunk_sum[c] = acc.sum;
    };

    const std::size_t n_workers = std::min<std::size_t>(
        static_cast<std::size_t>(options.threads), n_chunks);
    if (n_workers <= 1) {
      for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
    } else {
      std::vector<std::exception_ptr> errors(n_workers);
      std::vector<std::thread> workers;
      workers.reserve(n_workers);
      for (std::size_t w = 0; w < n_workers; ++w) {
        workers.emplace_back([&, w]() {
          try {
            for (std::size_t c = w; c < n_chunks; c += n_workers)
              run_chunk(c);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (std::thread& th : workers) th.join();
      for (const std::exception_ptr& err : errors)
        if (err) std::rethrow_exception(err);
    }

    KahanSum pair_total;
    for (std::size_t c = 0; c < n_chunks; ++c) {
      pair_total.add(chunk_sum[c]);
      out.exact_pairs += chunk_quad[c];
      out.cs_pairs += chunk_cs[c];
      out.zero_pairs += chunk_zero[c];
    }
    out.pair_sum = pair_total.sum;
  }

  const double scale = static_cast<double>(m) * static_cast<double>(m);
  double variance = (out.diag_sum + 2.0 * out.pair_sum) / scale;
  if (variance < -1e-8) {
    std::ostringstream msg;
    msg << "conditional_variance_exact: variance " << variance
        << " is negative beyond tolerance";
    throw VerificationError(msg.str());
  }
  out.variance = std::max(variance, 0.0);
  return out;
}

GEventResult g_event_check(const gaussian::ThresholdProfile& profile,
                           double eps_g,
                           const std::vector<std::size_t>& tracked) {
  require(std::isfinite(eps_g) && eps_g > 0.0,
          "g_event_check: eps_g must be positive");
  GEventResult out;
  for (std::size_t i : tracked) {
    require(i < profile.size(), "g_event_check: tracked index out of range");
    const double gap =
        std::min(std::abs(profile.r1[i]), std::abs(profile.r2[i]));
    if (gap < eps_g) {
      out.hit = true;
      out.offenders.push_back(i);
    }
  }
  return out;
}

SlopeFit fit_log_slope(const std::vector<double>& ms,
                       const std::vector<double>& ys) {
  require(ms.size() == ys.size(), "fit_log_slope: length mismatch");
  std::vector<double> xs, zs;
  for (std::size_t g = 0; g < ms.size(); ++g) {
    if (ms[g] > 0.0 && ys[g] > 0.0) {
      xs.push_back(std::log(ms[g]));
      zs.push_back(std::log(ys[g]));
    }
  }
  SlopeFit fit;
  fit.points_used = xs.size();
  if (xs.size() < 2) return fit;
  double mean_x = 0.0, mean_z = 0.0;
  for (std::size_t g = 0; g < xs.size(); ++g) {
    mean_x += xs[g];
    mean_z += zs[g];
  }
  mean_x /= static_cast<double>(xs.size());
  mean_z /= static_cast<double>(xs.size());
  double sxx = 0.0, sxz = 0.0;
  for (std::size_t g = 0; g < xs.size(); ++g) {
    sxx += (xs[g] - mean_x) * (xs[g] - mean_x);
    sxz += (xs[g] - mean_x) * (zs[g] - mean_z);
  }
  if (sxx <= 0.0) return fit;
  fit.defined = true;
  fit.value = sxz / sxx;
  return fit;
}

LyonsCheck lyons_check(const std::vector<std::size_t>& m_grid,
                       const std::vector<double>& variances) {
  require(m_grid.size() == variances.size(), "lyons_check: length mismatch");
  require(m_grid.size() >= 3, "lyons_check: needs at least 3 grid points");
  LyonsCheck out;
  KahanSum acc;
  std::vector<double> ms, terms;
  for (std::size_t g = 0; g < m_grid.size(); ++g) {
    require(m_grid[g] > 0, "lyons_check: m must be positive");
    require(std::isfinite(variances[g]) && variances[g] >= 0.0,
            "lyons_check: variances must be finite and nonnegative");
    const double term = variances[g] / static_cast<double>(m_grid[g]);
    acc.add(term);
    out.partial_sums.push_back(acc.sum);
    ms.push_back(static_cast<double>(m_grid[g]));
    terms.push_back(term);
  }
  const SlopeFit fit = fit_log_slope(ms, terms);
  out.exponent_defined = fit.defined;
  out.exponent = fit.value;
  out.converges = fit.defined && fit.value < -1.05;
  return out;
}

SllnReport sweep(const ExperimentConfig& config, int threads) {
  config.validate();
  require(threads >= 1, "sweep: threads must be >= 1");
  const constructions::FamilyKind kind = parse_family(config.family);
  const std::size_t n_grid = config.m_grid.size();

  SllnReport report;
  report.config = config;
  report.slope_target = -config.delta;
  report.slope_strong = -2.0 * config.delta;

  std::vector<gaussian::ThresholdProfile> profiles(n_grid);
  std::vector<std::array<std::size_t, kTrackedSlots>> slot_index(n_grid);
  std::vector<pfa::TrackedSeries> slots(kTrackedSlots);

  for (std::size_t g = 0; g < n_grid; ++g) {
    const std::size_t m = config.m_grid[g];
    const auto plan = constructions::make_spectrum(m);

    constructions::FamilyOutput fam;
    switch (kind) {
      case constructions::FamilyKind::kBlockDiag: {
        Rng family_rng(Rng::substream(config.seed, StreamKind::kFamilyBlocks,
                                      static_cast<std::uint64_t>(m)));
        fam = constructions::build_block_diag_family(plan, family_rng);
        break;
      }
      case constructions::FamilyKind::kDense:
        fam = constructions::build_dense_family(plan);
        break;
      case constructions::FamilyKind::kBoundedTail:
        fam = constructions::build_bounded_tail_family(plan);
        break;
      case constructions::FamilyKind::kMixed:
        fam = constructions::build_mixed_family(plan);
        break;
    }

    const matlin::SpectralDecomposition dec = matlin::eigendecompose(fam.sigma);
    const std::size_t k =
        (config.k_rule == "half")
            ? m / 2
            : pfa::select_k(dec.eigenvalues, config.c, config.delta).k;
    const pfa::PfaModel model = pfa::from_decomposition(fam.sigma, dec, k);

    const std::vector<double> mu = make_mu(m, config.mu_rule);

    Rng factor_rng(Rng::substream(config.seed, StreamKind::kFactorDraw,
                                  static_cast<std::uint64_t>(m)));
    std::vector<double> w_factors(k);
    for (std::size_t j = 0; j < k; ++j) w_factors[j] = factor_rng.normal();

    std::vector<double> base(m);
    for (std::size_t i = 0; i < m; ++i) {
      const double* l = model.loadings.row_ptr(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += l[j] * w_factors[j];
      base[i] = mu[i] + acc;
    }

    profiles[g] = gaussian::build_threshold_profile(config.t, base, model.a,
                                                    model.degenerate);

    VarianceOptions options;
    options.rho_cutoff = 1.0 - config.eps_s;
    options.max_pairs = config.budget.max_pairs;
    options.threads = threads;
    VarianceResult var;
    try {
      var = conditional_variance_exact(model, profiles[g], options);
    } catch (const ResourceBudgetError& err) {
      std::ostringstream msg;
      msg << "sweep: at m = " << m << ": " << err.what();
      throw ResourceBudgetError(msg.str());
    } catch (const VerificationError& err) {
      std::ostringstream msg;
      msg << "sweep: at m = " << m << ": " << err.what();
      throw VerificationError(msg.str());
    }

    const pfa::SEpsilonResult s_eps = pfa::s_epsilon(model, config.eps_s, 16);

    GridPointReport point;
    point.m = m;
    point.k = k;
    point.theta = pfa::theta(dec.eigenvalues, k);
    point.conditional_mean = conditional_mean(profiles[g]);
    point.variance_exact = var.variance;
    point.diag_sum = var.diag_sum;
    point.pair_sum = var.pair_sum;
    point.exact_pairs = var.exact_pairs;
    point.cs_pairs = var.cs_pairs;
    point.s_eps_count = s_eps.count;
    point.s_eps_normalized =
        static_cast<double>(s_eps.count) *
        std::pow(static_cast<double>(m), config.delta - 2.0);

    // Residual-loading matrix for the conditional replications.
    matlin::Matrix resid_load(m, m - k, 0.0);
    for (std::size_t j = k; j < m; ++j) {
      const double scale = std::sqrt(std::max(model.eigenvalues[j], 0.0));
      for (std::size_t i = 0; i < m; ++i)
        resid_load(i, j - k) = scale * model.t(i, j);
    }

    Rng resid_rng(Rng::substream(config.seed, StreamKind::kResidualDraw,
                                 static_cast<std::uint64_t>(m)));
    std::vector<double> deviations(config.replications, 0.0);
    std::vector<double> w_tail(m - k), z(m);
    for (std::size_t rep = 0; rep < config.replications; ++rep) {
      for (std::size_t j = 0; j < m - k; ++j) w_tail[j] = resid_rng.normal();
      for (std::size_t i = 0; i < m; ++i) {
        const double* row = resid_load.row_ptr(i);
        double acc = 0.0;
        for (std::size_t j = 0; j < m - k; ++j) acc += row[j] * w_tail[j];
        z[i] = base[i] + acc;
      }
      const double fraction =
          static_cast<double>(rejection_count(z, config.t)) /
          static_cast<double>(m);
      deviations[rep] = std::abs(fraction - point.conditional_mean);
    }
    KahanSum dev_acc;
    for (double d : deviations) dev_acc.add(d);
    point.deviation_mean =
        dev_acc.sum / static_cast<double>(config.replications);
    std::sort(deviations.begin(), deviations.end());
    point.deviation_median = sorted_quantile(deviations, 0.5);
    point.deviation_q90 = sorted_quantile(deviations, 0.9);

    for (double beta : config.beta_grid)
      point.weak_dep_sums.push_back(pfa::weak_dependence_sum(model, beta));

    slot_index[g] = {0, std::min(k, m - 1), m - 1};
    for (std::size_t s = 0; s < kTrackedSlots; ++s) {
      const std::size_t idx = slot_index[g][s];
      slots[s].sigma_resid.push_back(model.sigma_resid[idx]);
      slots[s].a.push_back(model.a[idx]);
    }

    report.points.push_back(std::move(point));
  }

  for (std::size_t s = 0; s < kTrackedSlots; ++s)
    report.tracked_regimes.push_back(pfa::classify_regime(slots[s]));

  std::vector<std::size_t> diverging_slots;
  for (std::size_t s = 0; s < kTrackedSlots; ++s)
    if (report.tracked_regimes[s] == pfa::Regime::kDiverging)
      diverging_slots.push_back(s);

  for (std::size_t g = 0; g < n_grid; ++g) {
    GridPointReport& point = report.points[g];
    std::vector<std::size_t> tracked;
    for (std::size_t s : diverging_slots) tracked.push_back(slot_index[g][s]);
    std::sort(tracked.begin(), tracked.end());
    tracked.erase(std::unique(tracked.begin(), tracked.end()), tracked.end());
    const GEventResult hit = g_event_check(profiles[g], config.eps_g, tracked);
    point.tracked = std::move(tracked);
    point.g_hit = hit.hit;
    point.g_offenders = hit.offenders;
    if (hit.hit) report.any_g_hit = true;
  }

  if (!diverging_slots.empty()) {
    std::vector<std::vector<double>> diverging_a(n_grid);
    for (std::size_t g = 0; g < n_grid; ++g)
      for (std::size_t s : diverging_slots)
        diverging_a[g].push_back(slots[s].a[g]);
    report.ratio = pfa::ratio_condition(diverging_a);
  }

  std::vector<double> fit_m, fit_v, all_m, all_v;
  for (const GridPointReport& point : report.points) {
    all_m.push_back(static_cast<double>(point.m));
    all_v.push_back(point.variance_exact);
    if (!point.g_hit) {
      fit_m.push_back(static_cast<double>(point.m));
      fit_v.push_back(point.variance_exact);
    }
  }
  report.slope = fit_log_slope(fit_m, fit_v);
  report.slope_ok =
      report.slope.defined && report.slope.value <= report.slope_target + 1e-12;
  report.low_confidence = report.slope.points_used < 3;
  if (n_grid >= 3) {
    report.lyons_applicable = true;
    report.lyons = lyons_check(config.m_grid, all_v);
  }
  return report;
}

}  // namespace pfalab::slln
