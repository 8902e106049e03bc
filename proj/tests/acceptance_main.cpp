// Acceptance suite: ten end-to-end checks of the laboratory's headline
// guarantees, printed one [PASS]/[FAIL] line each (details indented
// underneath).  The process exit code is the number of failed criteria,
// so a zero exit means the whole suite holds.
//
// Tolerances are pinned here on purpose; loosening one to make a line
// turn green defeats the point of the suite.

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pfalab/constructions.hpp"
#include "pfalab/gaussian.hpp"
#include "pfalab/io.hpp"
#include "pfalab/matlin.hpp"
#include "pfalab/pfa.hpp"
#include "pfalab/rng.hpp"
#include "pfalab/slln.hpp"

namespace {

namespace fs = std::filesystem;
using namespace pfalab;

constexpr std::uint64_t kSeed = 20250825ULL;

// Indented detail lines accumulated while a criterion runs, printed
// after its verdict line.
struct Notes {
  std::string text;

  void add(const char* fmt, ...) {
    char buf[512];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, args);
    va_end(args);
    text += "        ";
    text += buf;
    text += "\n";
  }
};

// One model audited by the weak-dependence criterion: the residual
// quality theta at the factor count used and the beta = 1 sum.
struct ModelRecord {
  std::string label;
  double theta = 0.0;
  double wd1 = 0.0;
};

std::vector<ModelRecord> g_models;

void record_model(const std::string& label, const pfa::PfaModel& model) {
  g_models.push_back({label, pfa::theta(model.eigenvalues, model.k),
                      pfa::weak_dependence_sum(model, 1.0)});
}

pfa::PfaModel decompose_family(const constructions::FamilyOutput& fam) {
  const auto dec = matlin::eigendecompose(fam.sigma);
  return pfa::from_decomposition(fam.sigma, dec, fam.design_k);
}

// ---------------------------------------------------------------------
// C1: block-diagonal family.  The factor side must be fully explained
// (zero residual variance), the tail side must keep unit residual scale
// (a_i = 1), and the residual quality must sit under m^{-0.4}.
bool c1_block_family(Notes& n) {
  bool pass = true;
  for (const std::size_t m : {8, 64, 256, 512}) {
    const auto plan = constructions::make_spectrum(m);
    Rng rng = Rng::substream(kSeed, StreamKind::kFamilyBlocks, m);
    const auto fam = constructions::build_block_diag_family(plan, rng);
    const auto model = decompose_family(fam);
    record_model("block-diag m=" + std::to_string(m), model);

    double worst_sigma = 0.0;
    for (std::size_t i = 0; i < m / 2; ++i)
      worst_sigma = std::max(worst_sigma, model.sigma_resid[i]);
    double worst_a = 0.0;
    for (std::size_t i = m / 2; i < m; ++i)
      worst_a = std::max(worst_a, std::abs(model.a[i] - 1.0));
    const double th = pfa::theta(model.eigenvalues, m / 2);
    const double bound = std::pow(static_cast<double>(m), -0.4);

    const bool ok =
        worst_sigma <= 1e-12 && worst_a <= 1e-10 && th <= bound;
    pass = pass && ok;
    n.add("m=%-4zu factor-side sigma <= %.2e, tail |a-1| <= %.2e, "
          "theta %.5f vs bound %.5f%s",
          m, worst_sigma, worst_a, th, bound, ok ? "" : "  <- violated");
  }
  return pass;
}

// ---------------------------------------------------------------------
// C2: dense family.  Every design-matrix entry carries coupling, and at
// the design factor count every residual variance is interior: neither
// collapsed to zero nor back at the unit scale.
bool c2_dense_family(Notes& n) {
  bool pass = true;
  for (const std::size_t m : {8, 64, 256}) {
    const auto plan = constructions::make_spectrum(m);
    const auto fam = constructions::build_dense_family(plan);
    const auto model = decompose_family(fam);
    record_model("dense m=" + std::to_string(m), model);

    double min_t = 1e300;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        min_t = std::min(min_t, std::abs(fam.t(i, j)));
    double smin = 1e300, smax = -1e300;
    for (const double s : model.sigma_resid) {
      smin = std::min(smin, s);
      smax = std::max(smax, s);
    }

    const bool ok = min_t > 1e-12 && smin > 1e-6 && smax < 1.0 - 1e-6;
    pass = pass && ok;
    n.add("m=%-4zu min |T_ij| = %.3e, sigma range [%.6f, %.6f]%s", m, min_t,
          smin, smax, ok ? "" : "  <- violated");
  }
  return pass;
}

// ---------------------------------------------------------------------
// C3: bounded-tail family.  The deliberately tiny last profile entry
// u0 = 1e-5 keeps the last index's amplification a_m under the closed
// form 1 / ((1 - 2 u0^2) sqrt(1 - eps_k)) uniformly in m.
bool c3_bounded_tail_family(Notes& n) {
  const double u0 = 1e-5;
  const double cap = constructions::bounded_tail_a_bound(0.4, u0) + 1e-6;
  double worst = 0.0;
  for (const std::size_t m : {8, 16, 32, 64, 128, 256, 512}) {
    const auto plan = constructions::make_spectrum(m);
    const auto fam = constructions::build_bounded_tail_family(plan, u0);
    const auto model = decompose_family(fam);
    record_model("bounded-tail m=" + std::to_string(m), model);
    worst = std::max(worst, model.a[m - 1]);
  }
  const bool pass = worst <= cap;
  n.add("max a_m over m in {8..512}: %.10f, cap %.10f%s", worst, cap,
        pass ? "" : "  <- violated");
  return pass;
}

// ---------------------------------------------------------------------
// C4: mixed family.  The first index's residual variance matches its
// closed form, the last index is exactly degenerate, the first index's
// amplification grows monotonically with m, and the first post-factor
// index stays above its variance lower bound.
bool c4_mixed_family(Notes& n) {
  const double tilde_u0 = 0.1;
  const double sigma_k1_lb =
      constructions::mixed_sigma_k1_lower_bound(0.4, tilde_u0);
  bool pass = true;
  double prev_a0 = 0.0;
  for (const std::size_t m : {8, 32, 128}) {
    const auto plan = constructions::make_spectrum(m);
    const auto fam = constructions::build_mixed_family(plan, tilde_u0);
    const auto model = decompose_family(fam);
    record_model("mixed m=" + std::to_string(m), model);
    const std::size_t k = m / 2;

    const double cf = constructions::mixed_sigma1_closed_form(plan, tilde_u0);
    const double cf_err = std::abs(model.sigma_resid[0] - cf);
    const bool ok = cf_err <= 1e-10 && model.sigma_resid[m - 1] <= 1e-12 &&
                    model.a[0] > prev_a0 &&
                    model.sigma_resid[k] >= sigma_k1_lb - 1e-10;
    pass = pass && ok;
    n.add("m=%-4zu |sigma_1 - closed form| = %.2e, sigma_m = %.2e, "
          "a_1 = %.4f, sigma_{k+1} = %.5f (>= %.5f)%s",
          m, cf_err, model.sigma_resid[m - 1], model.a[0],
          model.sigma_resid[k], sigma_k1_lb, ok ? "" : "  <- violated");
    prev_a0 = model.a[0];
  }
  return pass;
}

// ---------------------------------------------------------------------
// C5: the bivariate survival engine.  At rho = 0 the joint probability
// factorizes exactly; at rho in {0.3, 0.7, 0.95} quadrature agrees with
// a 10^7-draw Monte Carlo on fifty random rectangles within three
// standard errors (standard error taken at the quadrature value).
bool c5_pair_probabilities(Notes& n) {
  bool pass = true;

  Rng rng = Rng::substream(kSeed, StreamKind::kOracle, 300);
  double worst_fact = 0.0;
  for (int r = 0; r < 1000; ++r) {
    double a = 3.0 * std::tanh(rng.normal());
    double b = 3.0 * std::tanh(rng.normal());
    const double c1i = std::max(a, b), c2i = std::min(a, b);
    a = 3.0 * std::tanh(rng.normal());
    b = 3.0 * std::tanh(rng.normal());
    const double c1j = std::max(a, b), c2j = std::min(a, b);
    const double joint = gaussian::joint_survival(0.0, c1i, c2i, c1j, c2j);
    const double prod =
        (gaussian::std_normal_cdf(c1i) - gaussian::std_normal_cdf(c2i)) *
        (gaussian::std_normal_cdf(c1j) - gaussian::std_normal_cdf(c2j));
    worst_fact = std::max(worst_fact, std::abs(joint - prod));
  }
  pass = pass && worst_fact <= 1e-10;
  n.add("rho = 0 factorization over 1000 rectangles: worst |error| = %.2e%s",
        worst_fact, worst_fact <= 1e-10 ? "" : "  <- violated");

  const double rhos[] = {0.3, 0.7, 0.95};
  for (int rc = 0; rc < 3; ++rc) {
    const double rho = rhos[rc];
    Rng rect_rng = Rng::substream(kSeed, StreamKind::kOracle, 100 + rc);
    constexpr int kRects = 50;
    std::vector<double> c1i(kRects), c2i(kRects), c1j(kRects), c2j(kRects),
        exact(kRects);
    for (int r = 0; r < kRects; ++r) {
      double a = 3.0 * std::tanh(rect_rng.normal());
      double b = 3.0 * std::tanh(rect_rng.normal());
      c1i[r] = std::max(a, b);
      c2i[r] = std::min(a, b);
      a = 3.0 * std::tanh(rect_rng.normal());
      b = 3.0 * std::tanh(rect_rng.normal());
      c1j[r] = std::max(a, b);
      c2j[r] = std::min(a, b);
      exact[r] = gaussian::joint_survival(rho, c1i[r], c2i[r], c1j[r], c2j[r]);
    }
    constexpr std::size_t kDraws = 10000000;
    Rng draw = Rng::substream(kSeed, StreamKind::kOracle, 200 + rc);
    std::vector<std::size_t> hits(kRects, 0);
    const double s = std::sqrt(1.0 - rho * rho);
    for (std::size_t d = 0; d < kDraws; ++d) {
      const double z1 = draw.normal();
      const double z2 = draw.normal();
      const double x = z1;
      const double y = rho * z1 + s * z2;
      for (int r = 0; r < kRects; ++r)
        if (x <= c1i[r] && x >= c2i[r] && y <= c1j[r] && y >= c2j[r])
          ++hits[r];
    }
    double worst_z = 0.0;
    for (int r = 0; r < kRects; ++r) {
      const double p = static_cast<double>(hits[r]) / kDraws;
      const double se = std::sqrt(
          std::max(exact[r] * (1.0 - exact[r]), 1e-9) / kDraws);
      worst_z = std::max(worst_z, std::abs(p - exact[r]) / se);
    }
    pass = pass && worst_z <= 3.0;
    n.add("rho = %.2f: 50 rectangles vs 1e7 draws, worst |z| = %.3f%s", rho,
          worst_z, worst_z <= 3.0 ? "" : "  <- violated");
  }
  return pass;
}

// ---------------------------------------------------------------------
// C6: the exact conditional variance of the rejection fraction matches
// a 2e4-replication Monte Carlo (residual redraws under one fixed
// factor draw) within three standard errors of the sample variance.
bool c6_variance_vs_monte_carlo(Notes& n) {
  constexpr std::size_t m = 64, k = 32;
  const auto plan = constructions::make_spectrum(m);
  const auto fam = constructions::build_dense_family(plan);
  const auto dec = matlin::eigendecompose(fam.sigma);
  const auto model = pfa::from_decomposition(fam.sigma, dec, k);
  const auto mu = slln::make_mu(m, {0.1, 3.0});

  Rng factor_rng = Rng::substream(kSeed, StreamKind::kFactorDraw, m);
  std::vector<double> w(k);
  for (auto& x : w) x = factor_rng.normal();
  std::vector<double> shift(m);
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) acc += model.loadings(i, j) * w[j];
    shift[i] = mu[i] + acc;
  }
  matlin::Matrix resid_loadings(m, m - k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = k; j < m; ++j)
      resid_loadings(i, j - k) =
          std::sqrt(dec.eigenvalues[j]) * dec.eigenvectors(i, j);

  bool pass = true;
  for (const double t : {0.05, 0.2}) {
    const auto profile =
        gaussian::build_threshold_profile(t, shift, model.a, model.degenerate);
    slln::VarianceOptions options;
    options.threads = 2;
    const auto exact = slln::conditional_variance_exact(model, profile, options);

    constexpr std::size_t kReps = 20000;
    Rng resid_rng = Rng::substream(kSeed, StreamKind::kResidualDraw, m);
    double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    std::vector<double> wt(m - k), z(m);
    for (std::size_t rep = 0; rep < kReps; ++rep) {
      for (auto& x : wt) x = resid_rng.normal();
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m - k; ++j)
          acc += resid_loadings(i, j) * wt[j];
        z[i] = shift[i] + acc;
      }
      const double f =
          static_cast<double>(slln::rejection_count(z, t)) / m;
      s1 += f;
      s2 += f * f;
      s3 += f * f * f;
      s4 += f * f * f * f;
    }
    const double mean = s1 / kReps;
    const double var = s2 / kReps - mean * mean;
    // standard error of a sample variance via the fourth central moment
    const double m2 = s2 / kReps, m3 = s3 / kReps, m4 = s4 / kReps;
    const double c4 = m4 - 4 * mean * m3 + 6 * mean * mean * m2 -
                      3 * mean * mean * mean * mean;
    const double se = std::sqrt(std::max(0.0, c4 - var * var) / kReps);
    const double zstat = std::abs(exact.variance - var) / se;

    pass = pass && zstat <= 3.0;
    n.add("t = %.2f: exact %.6e vs MC %.6e over 2e4 replications, "
          "|z| = %.3f%s",
          t, exact.variance, var, zstat, zstat <= 3.0 ? "" : "  <- violated");
  }
  return pass;
}

// ---------------------------------------------------------------------
// C7: the reference sweep's conditional variance decays in m with a
// fitted log-log slope at most -delta, and no grid point trips the
// exclusion band around the acceptance thresholds.
bool c7_sweep_decay(Notes& n, const std::optional<slln::SllnReport>& report) {
  if (!report) {
    n.add("reference sweep unavailable");
    return false;
  }
  for (const auto& p : report->points)
    n.add("m=%-5zu variance %.8e, deviation median %.6f%s", p.m,
          p.variance_exact, p.deviation_median,
          p.g_hit ? "  (exclusion-band hit)" : "");
  n.add("fitted slope %.4f, asserted bound %.1f, strong reference %.1f (%s)",
        report->slope.value, report->slope_target, report->slope_strong,
        report->slope.defined && report->slope.value <= report->slope_strong
            ? "also met"
            : "not asserted");
  const bool pass = !report->any_g_hit && report->slope_ok;
  if (report->any_g_hit) n.add("exclusion-band hit disqualifies the fit");
  return pass;
}

// ---------------------------------------------------------------------
// C8: the median absolute deviation of the rejection fraction from its
// conditional mean at least halves from m = 64 to m = 1024, with at
// most one inversion along the grid (Monte Carlo allowance).
bool c8_sweep_medians(Notes& n, const std::optional<slln::SllnReport>& report) {
  if (!report) {
    n.add("reference sweep unavailable");
    return false;
  }
  const auto& pts = report->points;
  std::size_t inversions = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    if (pts[i].deviation_median > pts[i - 1].deviation_median) ++inversions;
  const double front = pts.front().deviation_median;
  const double back = pts.back().deviation_median;
  const double ratio = back > 0.0 ? front / back : 1e300;
  const bool pass = ratio >= 2.0 && inversions <= 1;
  n.add("median(m=%zu) = %.6f, median(m=%zu) = %.6f, ratio %.3f (need >= 2)",
        pts.front().m, front, pts.back().m, back, ratio);
  n.add("median inversions along the grid: %zu (allow <= 1)", inversions);
  return pass;
}

// ---------------------------------------------------------------------
// C9: weak dependence.  Every model generated above, and every sweep
// grid point, keeps the beta = 1 residual sum m^{-2} sum |A_ij| under
// its residual quality theta; the beta = 2 sums across the sweep decay
// with fitted exponent at most -0.7.
bool c9_weak_dependence(Notes& n,
                        const std::optional<slln::SllnReport>& report) {
  bool pass = true;

  double worst_excess = -1e300;
  std::string worst_label = "(none)";
  for (const auto& rec : g_models) {
    const double excess = rec.wd1 - rec.theta;
    if (excess > worst_excess) {
      worst_excess = excess;
      worst_label = rec.label;
    }
  }
  std::size_t audited = g_models.size();

  std::optional<double> beta2_exponent;
  if (report) {
    std::size_t i1 = report->config.beta_grid.size();
    std::size_t i2 = report->config.beta_grid.size();
    for (std::size_t i = 0; i < report->config.beta_grid.size(); ++i) {
      if (report->config.beta_grid[i] == 1.0) i1 = i;
      if (report->config.beta_grid[i] == 2.0) i2 = i;
    }
    std::vector<double> ms, wd2;
    for (const auto& p : report->points) {
      if (i1 < p.weak_dep_sums.size()) {
        const double excess = p.weak_dep_sums[i1] - p.theta;
        ++audited;
        if (excess > worst_excess) {
          worst_excess = excess;
          worst_label = "sweep m=" + std::to_string(p.m);
        }
      }
      if (i2 < p.weak_dep_sums.size()) {
        ms.push_back(static_cast<double>(p.m));
        wd2.push_back(p.weak_dep_sums[i2]);
      }
    }
    const auto fit = slln::fit_log_slope(ms, wd2);
    if (fit.defined) beta2_exponent = fit.value;
  }

  pass = pass && worst_excess <= 1e-10;
  n.add("beta = 1 sums vs theta over %zu models: worst excess %.3e "
        "at %s (need <= 1e-10)",
        audited, worst_excess, worst_label.c_str());

  if (beta2_exponent) {
    pass = pass && *beta2_exponent <= -0.7;
    n.add("beta = 2 sweep sums: fitted exponent %.4f (need <= -0.7)",
          *beta2_exponent);
  } else {
    pass = false;
    n.add("beta = 2 exponent unavailable");
  }
  return pass;
}

// ---------------------------------------------------------------------
// C10: command-line determinism.  Each subcommand rerun with the same
// inputs (and sweep rerun with a different thread count) reproduces its
// artifacts byte for byte.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string(PFALAB_CLI_PATH) + " " + args + " > " + log.string() +
      " 2>&1";
  const int rc = std::system(cmd.c_str());
  if (rc == -1 || !WIFEXITED(rc)) return -1;
  return WEXITSTATUS(rc);
}

bool c10_cli_determinism(Notes& n) {
  const fs::path base = fs::temp_directory_path() / "pfalab_acceptance";
  fs::remove_all(base);
  fs::create_directories(base);
  const fs::path log = base / "cli.log";
  bool pass = true;

  const auto check_stage =
      [&](const std::string& stage, const std::string& args,
          const fs::path& dir, const std::vector<std::string>& artifacts,
          const std::string& rerun_args) {
        if (run_cli(args, log) != 0) {
          pass = false;
          n.add("%s: first run failed", stage.c_str());
          return;
        }
        std::vector<std::string> before;
        for (const auto& name : artifacts)
          before.push_back(io::read_text_file((dir / name).string()));
        if (run_cli(rerun_args, log) != 0) {
          pass = false;
          n.add("%s: rerun failed", stage.c_str());
          return;
        }
        std::size_t identical = 0;
        for (std::size_t i = 0; i < artifacts.size(); ++i) {
          const auto after =
              io::read_text_file((dir / artifacts[i]).string());
          if (after == before[i]) {
            ++identical;
          } else {
            pass = false;
            n.add("%s: %s differs between runs", stage.c_str(),
                  artifacts[i].c_str());
          }
        }
        n.add("%s: %zu/%zu artifacts byte-identical", stage.c_str(),
              identical, artifacts.size());
      };

  const fs::path cdir = base / "construct";
  const std::string cargs = "construct --family block-diag --m 8 --seed 7 --out " +
                            cdir.string();
  check_stage("construct", cargs, cdir,
              {"matrix.txt", "eigenvalues.txt", "construct_report.json"},
              cargs);

  const fs::path pdir = base / "pfa";
  const std::string pargs = "pfa --matrix " + (cdir / "matrix.txt").string() +
                            " --c 1.0 --delta 0.4 --out " + pdir.string();
  check_stage("pfa", pargs, pdir, {"pfa_report.json"}, pargs);

  const fs::path config_path = base / "mini.json";
  io::write_text_file(config_path.string(),
                      "{\n"
                      "  \"family\": \"block-diag\",\n"
                      "  \"m_grid\": [8, 16],\n"
                      "  \"t\": 0.1,\n"
                      "  \"mu\": {\"fraction\": 0.1, \"value\": 3.0},\n"
                      "  \"replications\": 20,\n"
                      "  \"seed\": 42\n"
                      "}\n");
  const fs::path sdir = base / "sweep";
  const std::string sbase = "sweep --config " + config_path.string() +
                            " --out " + sdir.string();
  check_stage("sweep", sbase + " --threads 1", sdir,
              {"sweep_report.json", "decay.txt"}, sbase + " --threads 2");

  return pass;
}

}  // namespace

int main() {
  std::printf("pfalab acceptance suite (seed %llu)\n",
              static_cast<unsigned long long>(kSeed));

  int failures = 0;
  const auto run = [&failures](int id, const char* title,
                               const std::function<bool(Notes&)>& body) {
    Notes notes;
    bool pass = false;
    try {
      pass = body(notes);
    } catch (const std::exception& e) {
      notes.add("unexpected exception: %s", e.what());
      pass = false;
    }
    std::printf("[%s] C%-2d %s\n", pass ? "PASS" : "FAIL", id, title);
    std::fputs(notes.text.c_str(), stdout);
    std::fflush(stdout);
    if (!pass) ++failures;
  };

  run(1, "block-diagonal family: degenerate factor side, unit tail scale, "
         "residual quality in bound",
      c1_block_family);
  run(2, "dense family: no zero couplings, interior residual variances",
      c2_dense_family);
  run(3, "bounded-tail family: last-index amplification under closed-form cap",
      c3_bounded_tail_family);
  run(4, "mixed family: closed-form residuals, divergent first index, "
         "bounded post-factor index",
      c4_mixed_family);
  run(5, "pair survival probabilities: factorization and Monte Carlo "
         "agreement",
      c5_pair_probabilities);
  run(6, "exact conditional variance matches Monte Carlo replication",
      c6_variance_vs_monte_carlo);

  std::printf("--  running the reference sweep "
              "(block-diag, m = 64..1024, 200 replications)...\n");
  std::fflush(stdout);
  std::optional<slln::SllnReport> sweep_report;
  std::string sweep_error;
  try {
    const std::string config_text = io::read_text_file(
        std::string(PFALAB_CONFIG_DIR) + "/reference_sweep.json");
    const auto config = io::parse_config_text(config_text);
    sweep_report = slln::sweep(config, 2);
  } catch (const std::exception& e) {
    sweep_error = e.what();
  }
  if (!sweep_report)
    std::printf("--  reference sweep failed: %s\n", sweep_error.c_str());

  run(7, "reference sweep: variance decay slope within bound, no "
         "exclusion-band hits",
      [&](Notes& n) { return c7_sweep_decay(n, sweep_report); });
  run(8, "reference sweep: deviation medians at least halve from m = 64 "
         "to m = 1024",
      [&](Notes& n) { return c8_sweep_medians(n, sweep_report); });
  run(9, "weak-dependence sums dominated by residual quality; quadratic "
         "sums decay",
      [&](Notes& n) { return c9_weak_dependence(n, sweep_report); });
  run(10, "command-line artifacts byte-identical across reruns and thread "
          "counts",
      c10_cli_determinism);

  std::printf("acceptance: %d/10 criteria passed\n", 10 - failures);
  return failures;
}
