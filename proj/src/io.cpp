#include "pfalab/io.hpp"

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "pfalab/common.hpp"

namespace pfalab::io {

namespace {

using nlohmann::json;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

// Tokenizer over whitespace-separated numeric files.
struct TokenReader {
  const std::string& text;
  std::size_t pos = 0;
  const std::string& path;

  bool next(std::string& out) {
    while (pos < text.size() &&
           std::isspace(static_cast<unsigned char>(text[pos])))
      ++pos;
    if (pos >= text.size()) return false;
    const std::size_t start = pos;
    while (pos < text.size() &&
           !std::isspace(static_cast<unsigned char>(text[pos])))
      ++pos;
    out = text.substr(start, pos - start);
    return true;
  }

  std::size_t next_size(const char* role) {
    std::string tok;
    require(next(tok), path + ": missing " + role);
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(tok.c_str(), &end, 10);
    require(errno == 0 && end == tok.c_str() + tok.size(),
            path + ": bad " + role + " '" + tok + "'");
    require(v >= 1 && v <= 1u << 20, path + ": " + role + " out of range");
    return static_cast<std::size_t>(v);
  }

  double next_double(const char* role) {
    std::string tok;
    require(next(tok), path + ": missing " + role);
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(tok.c_str(), &end);
    require(errno != ERANGE && end == tok.c_str() + tok.size(),
            path + ": bad " + role + " '" + tok + "'");
    require(std::isfinite(v), path + ": non-finite " + role);
    return v;
  }

  void expect_end() {
    std::string tok;
    require(!next(tok), path + ": trailing content '" + tok + "'");
  }
};

json manifest_json(const RunManifest& manifest) {
  json outputs = json::object();
  for (const auto& [role, path] : manifest.outputs) outputs[role] = path;
  return json{{"artifact_version", kArtifactVersion},
              {"command", manifest.command},
              {"config_hash", hash_hex(manifest.config_hash)},
              {"seed", manifest.seed},
              {"outputs", outputs}};
}

json config_json(const slln::ExperimentConfig& config) {
  return json{{"family", config.family},
              {"m_grid", config.m_grid},
              {"t", config.t},
              {"mu", json{{"fraction", config.mu_rule.fraction},
                          {"value", config.mu_rule.value}}},
              {"c", config.c},
              {"delta", config.delta},
              {"eps_g", config.eps_g},
              {"eps_s", config.eps_s},
              {"replications", config.replications},
              {"seed", config.seed},
              {"k_rule", config.k_rule},
              {"max_pairs", config.budget.max_pairs},
              {"beta_grid", config.beta_grid}};
}

// Finalize a document: stable schema stamp first, pretty-printed with
// sorted keys (the json object type orders keys lexicographically).
std::string dump_document(json doc) {
  doc["schema_version"] = kSchemaVersion;
  return doc.dump(2) + "\n";
}

double get_number(const json& j, const std::string& key) {
  require(j.at(key).is_number(), "config: '" + key + "' must be a number");
  return j.at(key).get<double>();
}

std::size_t get_count(const json& j, const std::string& key) {
  require(j.at(key).is_number_integer() && j.at(key).get<long long>() >= 0,
          "config: '" + key + "' must be a nonnegative integer");
  return j.at(key).get<std::size_t>();
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  require(!in.bad(), "read failed for '" + path + "'");
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), "cannot write '" + path + "'");
  out << text;
  out.flush();
  require(out.good(), "write failed for '" + path + "'");
}

void write_matrix(const std::string& path, const matlin::Matrix& a) {
  require(a.rows() == a.cols() && a.rows() > 0,
          "write_matrix: matrix must be square and nonempty");
  std::string text = std::to_string(a.rows()) + "\n";
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      require(std::isfinite(a(i, j)), "write_matrix: non-finite entry");
      if (j > 0) text += ' ';
      text += format_double(a(i, j));
    }
    text += '\n';
  }
  write_text_file(path, text);
}

matlin::Matrix read_matrix(const std::string& path) {
  const std::string text = read_text_file(path);
  TokenReader reader{text, 0, path};
  const std::size_t m = reader.next_size("dimension header");
  matlin::Matrix a(m, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) a(i, j) = reader.next_double("entry");
  reader.expect_end();
  return a;
}

void write_vector(const std::string& path, const std::vector<double>& v) {
  require(!v.empty(), "write_vector: empty vector");
  std::string text = std::to_string(v.size()) + "\n";
  for (double x : v) {
    require(std::isfinite(x), "write_vector: non-finite entry");
    text += format_double(x);
    text += '\n';
  }
  write_text_file(path, text);
}

std::vector<double> read_vector(const std::string& path) {
  const std::string text = read_text_file(path);
  TokenReader reader{text, 0, path};
  const std::size_t n = reader.next_size("length header");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = reader.next_double("entry");
  reader.expect_end();
  return v;
}

slln::ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& err) {
    throw std::invalid_argument(std::string("config: ") + err.what());
  }
  require(j.is_object(), "config: top level must be an object");

  static const char* known[] = {"family", "m_grid", "t",       "mu",
                                "c",      "delta",  "eps_g",   "eps_s",
                                "replications",     "seed",    "k_rule",
                                "max_pairs",        "beta_grid"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    require(ok, "config: unknown key '" + key + "'");
    (void)value;
  }

  slln::ExperimentConfig cfg;
  require(j.contains("family") && j.at("family").is_string(),
          "config: 'family' (string) is required");
  cfg.family = j.at("family").get<std::string>();
  require(j.contains("m_grid") && j.at("m_grid").is_array(),
          "config: 'm_grid' (array) is required");
  cfg.m_grid.clear();
  for (const json& entry : j.at("m_grid")) {
    require(entry.is_number_integer() && entry.get<long long>() >= 1,
            "config: m_grid entries must be positive integers");
    cfg.m_grid.push_back(entry.get<std::size_t>());
  }
  if (j.contains("t")) cfg.t = get_number(j, "t");
  if (j.contains("mu")) {
    const json& mu = j.at("mu");
    require(mu.is_object(), "config: 'mu' must be an object");
    for (const auto& [key, value] : mu.items()) {
      require(key == "fraction" || key == "value",
              "config: unknown key 'mu." + key + "'");
      (void)value;
    }
    if (mu.contains("fraction")) {
      require(mu.at("fraction").is_number(),
              "config: 'mu.fraction' must be a number");
      cfg.mu_rule.fraction = mu.at("fraction").get<double>();
    }
    if (mu.contains("value")) {
      require(mu.at("value").is_number(),
              "config: 'mu.value' must be a number");
      cfg.mu_rule.value = mu.at("value").get<double>();
    }
  }
  if (j.contains("c")) cfg.c = get_number(j, "c");
  if (j.contains("delta")) cfg.delta = get_number(j, "delta");
  if (j.contains("eps_g")) cfg.eps_g = get_number(j, "eps_g");
  if (j.contains("eps_s")) cfg.eps_s = get_number(j, "eps_s");
  if (j.contains("replications"))
    cfg.replications = get_count(j, "replications");
  if (j.contains("seed")) {
    require(j.at("seed").is_number_integer() &&
                j.at("seed").get<long long>() >= 0,
            "config: 'seed' must be a nonnegative integer");
    cfg.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("k_rule")) {
    require(j.at("k_rule").is_string(), "config: 'k_rule' must be a string");
    cfg.k_rule = j.at("k_rule").get<std::string>();
  }
  if (j.contains("max_pairs")) cfg.budget.max_pairs = get_count(j, "max_pairs");
  if (j.contains("beta_grid")) {
    require(j.at("beta_grid").is_array(),
            "config: 'beta_grid' must be an array");
    cfg.beta_grid.clear();
    for (const json& entry : j.at("beta_grid")) {
      require(entry.is_number(),
              "config: beta_grid entries must be numbers");
      cfg.beta_grid.push_back(entry.get<double>());
    }
  }
  cfg.validate();
  return cfg;
}

std::string canonical_config(const slln::ExperimentConfig& config) {
  return config_json(config).dump();
}

std::string canonical_construct_params(const std::string& family,
                                       std::size_t m, std::uint64_t seed,
                                       double u0, double tilde_u0) {
  return json{{"command", "construct"},
              {"family", family},
              {"m", m},
              {"seed", seed},
              {"u0", u0},
              {"tilde_u0", tilde_u0}}
      .dump();
}

std::string canonical_pfa_params(std::uint64_t matrix_hash, double c,
                                 double delta, double eps) {
  return json{{"command", "pfa"},
              {"matrix_fnv1a64", hash_hex(matrix_hash)},
              {"c", c},
              {"delta", delta},
              {"eps", eps}}
      .dump();
}

bool ConstructReport::all_pass() const {
  for (const ConstructInvariant& inv : invariants)
    if (!inv.pass) return false;
  return true;
}

std::string construct_report_json(const ConstructReport& report,
                                  const RunManifest& manifest) {
  json a = json::array();
  for (std::size_t i = 0; i < report.a.size(); ++i) {
    if (report.degenerate.size() > i && report.degenerate[i])
      a.push_back(nullptr);  // infinite scale factor
    else
      a.push_back(report.a[i]);
  }
  json degenerate = json::array();
  for (char d : report.degenerate) degenerate.push_back(d != 0);
  json invariants = json::array();
  for (const ConstructInvariant& inv : report.invariants)
    invariants.push_back(json{
        {"name", inv.name}, {"pass", inv.pass}, {"detail", inv.detail}});
  return dump_document(json{{"kind", "construct-report"},
                            {"manifest", manifest_json(manifest)},
                            {"family", report.family},
                            {"m", report.m},
                            {"k", report.k},
                            {"planned_theta", report.planned_theta},
                            {"theta", report.theta},
                            {"eigenvalues", report.eigenvalues},
                            {"sigma_resid", report.sigma_resid},
                            {"a", a},
                            {"degenerate", degenerate},
                            {"invariants", invariants},
                            {"all_pass", report.all_pass()}});
}

std::string pfa_report_json(const PfaReport& report,
                            const RunManifest& manifest) {
  json frontier = json::array();
  for (std::size_t k = 0; k < report.frontier.size(); ++k)
    frontier.push_back(json{{"k", k}, {"theta", report.frontier[k]}});
  json weak = json::array();
  for (const auto& [beta, value] : report.condition.weak_dep_sums)
    weak.push_back(json{{"beta", beta}, {"value", value}});
  const json condition{
      {"theta_m", report.condition.theta_m},
      {"k_used", report.condition.k_used},
      {"delta", report.condition.delta},
      {"c", report.condition.c},
      {"eps", report.condition.eps},
      {"s_eps_count", report.condition.s_eps_count},
      {"s_eps_normalized", report.condition.s_eps_normalized},
      {"ratio_applicable", report.condition.ratio_applicable},
      {"ratio_q_estimate", report.condition.ratio_q_estimate},
      {"weak_dep_sums", weak}};
  return dump_document(json{{"kind", "pfa-report"},
                            {"manifest", manifest_json(manifest)},
                            {"m", report.m},
                            {"c", report.c},
                            {"delta", report.delta},
                            {"frontier", frontier},
                            {"selected_k", report.selected_k},
                            {"selected_bound", report.selected_bound},
                            {"condition", condition}});
}

std::string sweep_report_json(const slln::SllnReport& report,
                              const RunManifest& manifest) {
  json points = json::array();
  for (const slln::GridPointReport& p : report.points) {
    json weak = json::array();
    for (std::size_t b = 0; b < p.weak_dep_sums.size(); ++b)
      weak.push_back(json{{"beta", report.config.beta_grid[b]},
                          {"value", p.weak_dep_sums[b]}});
    points.push_back(json{{"m", p.m},
                          {"k", p.k},
                          {"theta", p.theta},
                          {"conditional_mean", p.conditional_mean},
                          {"variance_exact", p.variance_exact},
                          {"diag_sum", p.diag_sum},
                          {"pair_sum", p.pair_sum},
                          {"exact_pairs", p.exact_pairs},
                          {"cs_pairs", p.cs_pairs},
                          {"s_eps_count", p.s_eps_count},
                          {"s_eps_normalized", p.s_eps_normalized},
                          {"deviation_mean", p.deviation_mean},
                          {"deviation_median", p.deviation_median},
                          {"deviation_q90", p.deviation_q90},
                          {"g_hit", p.g_hit},
                          {"g_offenders", p.g_offenders},
                          {"tracked", p.tracked},
                          {"weak_dep_sums", weak}});
  }
  json regimes = json::array();
  for (pfa::Regime regime : report.tracked_regimes)
    regimes.push_back(pfa::regime_name(regime));
  const json ratio{{"applicable", report.ratio.applicable},
                   {"stable", report.ratio.stable},
                   {"q_estimate", report.ratio.q_estimate},
                   {"per_m_ratio", report.ratio.per_m_ratio}};
  const json slope{{"defined", report.slope.defined},
                   {"value", report.slope.value},
                   {"points_used", report.slope.points_used}};
  const json lyons{{"applicable", report.lyons_applicable},
                   {"partial_sums", report.lyons.partial_sums},
                   {"exponent_defined", report.lyons.exponent_defined},
                   {"exponent", report.lyons.exponent},
                   {"converges", report.lyons.converges}};
  return dump_document(json{{"kind", "sweep-report"},
                            {"manifest", manifest_json(manifest)},
                            {"config", config_json(report.config)},
                            {"points", points},
                            {"tracked_regimes", regimes},
                            {"ratio", ratio},
                            {"slope", slope},
                            {"slope_target", report.slope_target},
                            {"slope_strong", report.slope_strong},
                            {"slope_ok", report.slope_ok},
                            {"low_confidence", report.low_confidence},
                            {"any_g_hit", report.any_g_hit},
                            {"lyons", lyons}});
}

void write_decay_table(const std::string& path,
                       const slln::SllnReport& report) {
  std::string text = "# m variance_exact\n";
  for (const slln::GridPointReport& p : report.points) {
    text += std::to_string(p.m);
    text += ' ';
    text += format_double(p.variance_exact);
    text += '\n';
  }
  write_text_file(path, text);
}

}  // namespace pfalab::io
