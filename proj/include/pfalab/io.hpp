#ifndef PFALAB_IO_HPP
#define PFALAB_IO_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pfalab/matlin.hpp"
#include "pfalab/pfa.hpp"
#include "pfalab/slln.hpp"

namespace pfalab::io {

// Stamped into every machine-readable document.  Bump the schema version
// whenever a field changes meaning or disappears.
inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kArtifactVersion = "0.1.0";

// Shortest decimal form that reads back to the identical double (17
// significant digits).
std::string format_double(double x);

// FNV-1a over the raw bytes; hash_hex renders the canonical 16-digit form.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hash_hex(std::uint64_t h);

// Whole-file text helpers.  Reading a missing/unreadable file and writing
// to an uncreatable path both throw std::invalid_argument.
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Matrix file: first line the dimension m, then m rows of m space-separated
// values at 17 significant digits.  write/read round-trip bit-exactly.
// read_matrix throws std::invalid_argument on malformed content.
void write_matrix(const std::string& path, const matlin::Matrix& a);
matlin::Matrix read_matrix(const std::string& path);

// Vector file: first line the length, then one value per line.
void write_vector(const std::string& path, const std::vector<double>& v);
std::vector<double> read_vector(const std::string& path);

// Experiment configuration document (key/value text with nesting).  Keys:
//   family (string, required), m_grid (array of even integers, required),
//   t, c, delta, eps_g, eps_s (numbers), mu {fraction, value},
//   replications, seed, max_pairs (integers), k_rule (string),
//   beta_grid (array of numbers).
// Unknown keys are rejected; omitted optional keys keep their defaults.
// The parsed config is validated before being returned.
slln::ExperimentConfig parse_config_text(const std::string& text);

// Canonical form of the effective configuration: sorted keys, normalized
// numbers, no insignificant whitespace.  Equal configs canonicalize to
// equal strings, so fnv1a64(canonical_config(c)) is the config hash.
std::string canonical_config(const slln::ExperimentConfig& config);

// Canonical parameter documents for the commands that are configured by
// flags rather than a config file; hashed the same way.
std::string canonical_construct_params(const std::string& family,
                                       std::size_t m, std::uint64_t seed,
                                       double u0, double tilde_u0);
std::string canonical_pfa_params(std::uint64_t matrix_hash, double c,
                                 double delta, double eps);

// Provenance block embedded in every report.  Deliberately excludes
// wall-clock time and worker count: reports must be byte-identical across
// re-runs and thread counts.
struct RunManifest {
  std::string command;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> outputs;  // (role, path)
};

struct ConstructInvariant {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Everything cmd_construct reports about one generated family instance.
// Infinite scale factors serialize as nulls; the degenerate flags carry
// the same information losslessly.
struct ConstructReport {
  std::string family;
  std::size_t m = 0;
  std::size_t k = 0;
  double planned_theta = 0.0;
  double theta = 0.0;
  std::vector<double> eigenvalues;
  std::vector<double> sigma_resid;
  std::vector<double> a;
  std::vector<char> degenerate;
  std::vector<ConstructInvariant> invariants;

  bool all_pass() const;
};
std::string construct_report_json(const ConstructReport& report,
                                  const RunManifest& manifest);

// Everything cmd_pfa reports: the full residual-quality frontier
// (frontier[k] at factor count k, k = 0..m), the selected minimal k, and
// the side-condition summary at that k.
struct PfaReport {
  std::size_t m = 0;
  double c = 0.0;
  double delta = 0.0;
  std::vector<double> frontier;
  std::size_t selected_k = 0;
  double selected_bound = 0.0;
  pfa::ConditionReport condition;
};
std::string pfa_report_json(const PfaReport& report,
                            const RunManifest& manifest);

// Full sweep report with the effective config echoed back.
std::string sweep_report_json(const slln::SllnReport& report,
                              const RunManifest& manifest);

// Plot-ready decay table: comment header, then one "m variance" row per
// grid point at 17 significant digits.
void write_decay_table(const std::string& path,
                       const slln::SllnReport& report);

}  // namespace pfalab::io

#endif  // PFALAB_IO_HPP
