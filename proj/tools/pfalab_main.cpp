#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pfalab/common.hpp"
#include "pfalab/constructions.hpp"
#include "pfalab/io.hpp"
#include "pfalab/matlin.hpp"
#include "pfalab/pfa.hpp"
#include "pfalab/rng.hpp"
#include "pfalab/slln.hpp"

namespace {

namespace io = pfalab::io;
namespace matlin = pfalab::matlin;
namespace constructions = pfalab::constructions;
namespace pfa = pfalab::pfa;
namespace slln = pfalab::slln;
using pfalab::Rng;
using pfalab::StreamKind;

std::string prepare_out_dir(const std::string& out) {
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  if (ec)
    throw std::invalid_argument("cannot create output directory '" + out +
                                "': " + ec.message());
  return out;
}

std::string join(const std::string& dir, const char* name) {
  return dir + "/" + name;
}

constructions::FamilyOutput build_family(const std::string& family,
                                         std::size_t m, std::uint64_t seed,
                                         double u0, double tilde_u0) {
  const constructions::FamilyKind kind = slln::parse_family(family);
  const constructions::EigenSpectrumPlan plan = constructions::make_spectrum(m);
  switch (kind) {
    case constructions::FamilyKind::kBlockDiag: {
      Rng rng = Rng::substream(seed, StreamKind::kFamilyBlocks,
                               static_cast<std::uint64_t>(m));
      return constructions::build_block_diag_family(plan, rng);
    }
    case constructions::FamilyKind::kDense:
      return constructions::build_dense_family(plan);
    case constructions::FamilyKind::kBoundedTail:
      return constructions::build_bounded_tail_family(plan, u0);
    case constructions::FamilyKind::kMixed:
      break;
  }
  return constructions::build_mixed_family(plan, tilde_u0);
}

void add_invariant(io::ConstructReport& report, const std::string& name,
                   bool pass, const std::string& detail) {
  report.invariants.push_back({name, pass, detail});
}

// Family-specific design claims, checked at the family's own factor count.
void check_family_claims(io::ConstructReport& report,
                         const constructions::FamilyOutput& fam,
                         const constructions::EigenSpectrumPlan& plan,
                         const pfa::PfaModel& model, double u0,
                         double tilde_u0) {
  const std::size_t m = model.m;
  const std::size_t k = model.k;
  switch (fam.kind) {
    case constructions::FamilyKind::kBlockDiag: {
      double worst_sigma = 0.0;
      for (std::size_t i = 0; i < k; ++i)
        worst_sigma = std::max(worst_sigma, model.sigma_resid[i]);
      add_invariant(report, "factor-side-degenerate", worst_sigma <= 1e-12,
                    "max residual variance on the factor block = " +
                        io::format_double(worst_sigma));
      double worst_a = 0.0;
      for (std::size_t i = k; i < m; ++i)
        worst_a = std::max(worst_a, std::abs(model.a[i] - 1.0));
      add_invariant(report, "tail-side-unit-scale", worst_a <= 1e-10,
                    "max |a_i - 1| off the factor block = " +
                        io::format_double(worst_a));
      break;
    }
    case constructions::FamilyKind::kDense: {
      double min_entry = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
          min_entry = std::min(min_entry, std::abs(fam.t(i, j)));
      add_invariant(report, "no-zero-couplings", min_entry > 1e-12,
                    "min |T[i,j]| = " + io::format_double(min_entry));
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      for (double s : model.sigma_resid) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
      }
      add_invariant(report, "interior-residuals",
                    lo > 1e-6 && hi < 1.0 - 1e-6,
                    "residual variances span [" + io::format_double(lo) +
                        ", " + io::format_double(hi) + "]");
      break;
    }
    case constructions::FamilyKind::kBoundedTail: {
      const double bound =
          constructions::bounded_tail_a_bound(plan.epsilons.back(), u0);
      add_invariant(report, "last-index-bound",
                    model.a[m - 1] <= bound + 1e-6,
                    "a_m = " + io::format_double(model.a[m - 1]) +
                        " vs bound " + io::format_double(bound));
      break;
    }
    case constructions::FamilyKind::kMixed: {
      const double closed =
          constructions::mixed_sigma1_closed_form(plan, tilde_u0);
      const double diff = std::abs(model.sigma_resid[0] - closed);
      add_invariant(report, "first-index-closed-form", diff <= 1e-10,
                    "|sigma_1 - closed form| = " + io::format_double(diff));
      add_invariant(report, "last-index-degenerate",
                    model.sigma_resid[m - 1] <= 1e-12,
                    "sigma_m = " + io::format_double(model.sigma_resid[m - 1]));
      const double lower = constructions::mixed_sigma_k1_lower_bound(
          plan.epsilons.back(), tilde_u0);
      add_invariant(report, "post-factor-lower-bound",
                    model.sigma_resid[k] >= lower - 1e-12,
                    "sigma_{k+1} = " + io::format_double(model.sigma_resid[k]) +
                        " vs lower bound " + io::format_double(lower));
      break;
    }
  }
}

int run_construct(const std::string& family, std::size_t m, std::uint64_t seed,
                  double u0, double tilde_u0, const std::string& out) {
  const std::string dir = prepare_out_dir(out);
  const constructions::EigenSpectrumPlan plan = constructions::make_spectrum(m);
  const constructions::FamilyOutput fam =
      build_family(family, m, seed, u0, tilde_u0);
  const matlin::SpectralDecomposition dec = matlin::eigendecompose(fam.sigma);
  const pfa::PfaModel model =
      pfa::from_decomposition(fam.sigma, dec, fam.design_k);

  io::ConstructReport report;
  report.family = family;
  report.m = m;
  report.k = fam.design_k;
  report.planned_theta = constructions::planned_theta(fam);
  report.theta = pfa::theta(dec.eigenvalues, fam.design_k);
  report.eigenvalues = dec.eigenvalues;
  report.sigma_resid = model.sigma_resid;
  report.a = model.a;
  report.degenerate = model.degenerate;

  const double defect = matlin::orthogonality_defect(fam.t);
  add_invariant(report, "orthogonal-design", defect <= 1e-10,
                "max |T^T T - I| = " + io::format_double(defect));
  try {
    constructions::verify_spectrum_recovery(fam);
    add_invariant(report, "spectrum-recovery", true,
                  "recovered spectrum matches the plan within 1e-8");
  } catch (const pfalab::VerificationError& err) {
    add_invariant(report, "spectrum-recovery", false, err.what());
  }
  check_family_claims(report, fam, plan, model, u0, tilde_u0);

  io::RunManifest manifest;
  manifest.command = "construct";
  manifest.config_hash = io::fnv1a64(
      io::canonical_construct_params(family, m, seed, u0, tilde_u0));
  manifest.seed = seed;
  manifest.outputs = {{"eigenvalues", join(dir, "eigenvalues.txt")},
                      {"matrix", join(dir, "matrix.txt")},
                      {"report", join(dir, "construct_report.json")}};

  io::write_matrix(join(dir, "matrix.txt"), fam.sigma.entries);
  io::write_vector(join(dir, "eigenvalues.txt"), dec.eigenvalues);
  io::write_text_file(join(dir, "construct_report.json"),
                      io::construct_report_json(report, manifest));

  for (const io::ConstructInvariant& inv : report.invariants)
    std::printf("%s %s: %s\n", inv.pass ? "ok  " : "FAIL", inv.name.c_str(),
                inv.detail.c_str());
  std::printf("family=%s m=%zu k=%zu theta=%s\n", family.c_str(), m,
              fam.design_k, io::format_double(report.theta).c_str());
  std::printf("wrote %s\n", join(dir, "construct_report.json").c_str());
  if (!report.all_pass()) {
    std::fprintf(stderr, "construct: one or more design claims failed\n");
    return 3;
  }
  return 0;
}

int run_pfa(const std::string& matrix_path, double c, double delta, double eps,
            const std::string& out) {
  const std::string dir = prepare_out_dir(out);
  const std::uint64_t matrix_hash =
      io::fnv1a64(io::read_text_file(matrix_path));
  const matlin::Matrix entries = io::read_matrix(matrix_path);
  matlin::CorrelationMatrix sigma{entries.rows(), entries};
  sigma.validate_basic();
  matlin::SpectralDecomposition dec;
  try {
    dec = matlin::eigendecompose(sigma);
  } catch (const pfalab::VerificationError& err) {
    // A matrix that fails to decompose is bad input, not a broken artifact.
    throw std::invalid_argument(std::string("matrix: ") + err.what());
  }

  io::PfaReport report;
  report.m = sigma.dim;
  report.c = c;
  report.delta = delta;
  for (std::size_t k = 0; k <= sigma.dim; ++k)
    report.frontier.push_back(pfa::theta(dec.eigenvalues, k));
  const pfa::KSelection sel = pfa::select_k(dec.eigenvalues, c, delta);
  report.selected_k = sel.k;
  report.selected_bound = sel.bound;
  const pfa::PfaModel model = pfa::from_decomposition(sigma, dec, sel.k);
  report.condition =
      pfa::build_condition_report(model, c, delta, eps, {1.0, 2.0});

  io::RunManifest manifest;
  manifest.command = "pfa";
  manifest.config_hash =
      io::fnv1a64(io::canonical_pfa_params(matrix_hash, c, delta, eps));
  manifest.seed = 0;
  manifest.outputs = {{"report", join(dir, "pfa_report.json")}};
  io::write_text_file(join(dir, "pfa_report.json"),
                      io::pfa_report_json(report, manifest));

  std::printf("m=%zu selected k=%zu theta=%s bound=%s\n", report.m,
              report.selected_k,
              io::format_double(report.frontier[sel.k]).c_str(),
              io::format_double(sel.bound).c_str());
  std::printf("s_eps_count=%zu (eps=%s)\n", report.condition.s_eps_count,
              io::format_double(eps).c_str());
  std::printf("wrote %s\n", join(dir, "pfa_report.json").c_str());
  return 0;
}

int run_sweep(const std::string& config_path, bool seed_overridden,
              std::uint64_t seed, int threads, bool assert_slope,
              const std::string& out) {
  const std::string dir = prepare_out_dir(out);
  slln::ExperimentConfig config =
      io::parse_config_text(io::read_text_file(config_path));
  if (seed_overridden) config.seed = seed;

  const slln::SllnReport report = slln::sweep(config, threads);

  io::RunManifest manifest;
  manifest.command = "sweep";
  manifest.config_hash = io::fnv1a64(io::canonical_config(config));
  manifest.seed = config.seed;
  manifest.outputs = {{"decay", join(dir, "decay.txt")},
                      {"report", join(dir, "sweep_report.json")}};
  io::write_text_file(join(dir, "sweep_report.json"),
                      io::sweep_report_json(report, manifest));
  io::write_decay_table(join(dir, "decay.txt"), report);

  for (const slln::GridPointReport& p : report.points)
    std::printf("m=%zu V=%s median_dev=%s%s\n", p.m,
                io::format_double(p.variance_exact).c_str(),
                io::format_double(p.deviation_median).c_str(),
                p.g_hit ? " [G-event hit]" : "");
  if (report.slope.defined)
    std::printf("slope=%s target=%s strong=%s %s%s\n",
                io::format_double(report.slope.value).c_str(),
                io::format_double(report.slope_target).c_str(),
                io::format_double(report.slope_strong).c_str(),
                report.slope_ok ? "(pass)" : "(violation)",
                report.low_confidence ? " [low confidence]" : "");
  else
    std::printf("slope undefined [low confidence]\n");
  std::printf("wrote %s\n", join(dir, "sweep_report.json").c_str());

  if (assert_slope && !report.slope_ok) {
    std::fprintf(stderr, "sweep: slope criterion violated\n");
    return 3;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical laboratory for factor-based multiple testing "
               "under dependence"};
  app.require_subcommand(1);

  std::string family = "block-diag";
  std::size_t m = 8;
  double u0 = 1e-5;
  double tilde_u0 = 0.1;
  std::uint64_t seed = 0;
  std::string out = ".";
  int threads = 1;
  std::string matrix_path;
  double c = 1.0;
  double delta = 0.4;
  double eps = 0.1;
  std::string config_path;
  bool assert_slope = false;

  CLI::App* construct = app.add_subcommand(
      "construct", "Generate a family instance and verify its design claims");
  construct->add_option("--family", family,
                        "block-diag | dense | bounded-tail | mixed");
  construct->add_option("--m", m, "dimension (even)");
  construct->add_option("--u0", u0, "bounded-tail profile parameter");
  construct->add_option("--tilde-u0", tilde_u0, "mixed profile parameter");
  construct->add_option("--seed", seed, "random seed (block-diag rotations)");
  construct->add_option("--out", out, "output directory");
  construct->add_option("--threads", threads, "worker threads (no-op here)");

  CLI::App* pfa_cmd = app.add_subcommand(
      "pfa", "Factor split of a stored matrix: residual-quality frontier "
             "and side conditions");
  pfa_cmd->add_option("--matrix", matrix_path, "matrix file")->required();
  pfa_cmd->add_option("--c", c, "residual-quality constant");
  pfa_cmd->add_option("--delta", delta, "residual-quality exponent");
  pfa_cmd->add_option("--eps", eps, "near-comonotone pair threshold");
  pfa_cmd->add_option("--out", out, "output directory");
  pfa_cmd->add_option("--threads", threads, "worker threads (no-op here)");

  CLI::App* sweep_cmd = app.add_subcommand(
      "sweep", "Run a variance-decay experiment from a config file");
  sweep_cmd->add_option("--config", config_path, "config file")->required();
  CLI::Option* seed_opt =
      sweep_cmd->add_option("--seed", seed, "override the config seed");
  sweep_cmd->add_option("--out", out, "output directory");
  sweep_cmd->add_option("--threads", threads, "worker threads");
  sweep_cmd->add_flag("--assert-slope", assert_slope,
                      "exit nonzero unless the decay slope meets the target");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (threads < 1) throw std::invalid_argument("--threads must be >= 1");
    if (construct->parsed())
      return run_construct(family, m, seed, u0, tilde_u0, out);
    if (pfa_cmd->parsed()) return run_pfa(matrix_path, c, delta, eps, out);
    return run_sweep(config_path, seed_opt->count() > 0, seed, threads,
                     assert_slope, out);
  } catch (const std::invalid_argument& err) {
    std::fprintf(stderr, "invalid input: %s\n", err.what());
    return 2;
  } catch (const pfalab::ResourceBudgetError& err) {
    std::fprintf(stderr, "budget exceeded: %s\n", err.what());
    return 4;
  } catch (const pfalab::VerificationError& err) {
    std::fprintf(stderr, "verification failure: %s\n", err.what());
    return 3;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 3;
  }
}
