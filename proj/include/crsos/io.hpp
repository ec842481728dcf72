#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "crsos/kmc.hpp"
#include "crsos/master.hpp"
#include "crsos/mean_field.hpp"
#include "crsos/scaling.hpp"

namespace crsos {

/// Exit statuses of the command-line tool. Library errors map onto them:
/// ConfigError (and malformed JSON) to kExitConfig, ResourceLimitError to
/// kExitResource, integration and domain failures to kExitNumeric.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 2,
  kExitResource = 3,
  kExitNumeric = 4,
};

inline constexpr char kCodeVersion[] = "0.1.0";

// ---------------------------------------------------------------------------
// Rate table serialization
// ---------------------------------------------------------------------------
//
// A rate table document is a flat JSON object. Entries start at the chosen
// preset ("preset": "zeros" by default, or "unit"), then class aliases
// apply, then explicit entries override:
//   "c1".."c4", "d1".."d4"  climb and descend rates
//   "skip"                  all eight skip entries at once
//   "slide" or "span1"      the nearest-neighbour slide rate
//   "span2.d<i>.a<j>"       one explicit entry, i, j in 1..4
// Unknown keys, non-numeric values, or negative rates are ConfigError.

RateTable rate_table_from_json(const nlohmann::json& doc);
RateTable load_rate_table(const std::filesystem::path& file);

/// Explicit 17-entry form; rate_table_from_json inverts it.
nlohmann::json rate_table_to_json(const RateTable& rates);

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

/// Total-variation thresholds enforced by the compare engine. The sampled
/// threshold is a floor; at run time it is widened to three multinomial
/// standard-error envelopes when the replica count makes that larger.
struct CompareTolerances {
  double tv_kmc = 0.01;  // exact vs sampled histogram
  double tv_mf = 0.25;   // exact vs factorized closure

  bool operator==(const CompareTolerances&) const = default;
};

/// One experiment, fully specified. Parsed from a single JSON document;
/// command-line flags override individual fields after parsing.
struct ExperimentConfig {
  std::string engine;  // enumerate | exact | kmc | meanfield | stationary
                       // | selfsim | compare
  int n = 6;
  int K = 6;
  RateTable rates = RateTable::unit();
  /// Provenance when the table came from its own file. Inline rates win;
  /// the path is only read when no inline table is present.
  std::optional<std::string> rates_path;
  /// Sample grid. Empty means the engine default: doubling times up to
  /// t_end for selfsim, otherwise zero followed by a short log-spaced
  /// grid ending at t_end.
  std::vector<double> times;
  /// Final time. Absent means the engine default; resolved_t_end() is the
  /// value engines actually use.
  std::optional<double> t_end;
  std::size_t replicas = 10'000;
  std::uint64_t seed = 1;
  std::string out = "out";
  int k_max = 200;       // mean-field ladder height
  double epsilon = 0.01; // lattice spacing of the continuum description
  /// Stationary engine only: analyze these coefficients directly instead
  /// of deriving them from the rate table.
  std::optional<QuadraticTriple> quadratic;
  CompareTolerances tolerances;

  /// t_end when set, else the last explicit sample time, else 1024 for the
  /// selfsim engine (a long doubling ladder suits the scaling fits) and 1
  /// for everything else.
  double resolved_t_end() const;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses and validates one config document. Relative rates_path entries
/// resolve against base_dir. Unknown keys, malformed values, or violated
/// invariants (positive n, K, replicas; sorted times; referenced files
/// present) raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& doc,
                                  const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& file);

/// Inverse of config_from_json: emits every field, rates inline, so the
/// round trip parse(serialize(c)) == c holds without touching the
/// filesystem.
nlohmann::json config_to_json(const ExperimentConfig& config);

/// Logarithmically spaced grid from t0 to t1 inclusive; 0 < t0 < t1,
/// count >= 2.
std::vector<double> log_time_grid(double t0, double t1, int count);

/// The sampling grid an engine will actually use for this config.
std::vector<double> sample_grid(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------
//
// All CSV output is UTF-8 with a header row, "." as the decimal separator,
// and a fixed column order per schema. Cells containing commas or quotes
// are double-quoted.

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// Shortest decimal form that parses back to exactly the same double.
std::string format_double(double x);

std::string csv_to_string(const CsvTable& table);
void write_csv(const std::filesystem::path& file, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Hashing and manifests
// ---------------------------------------------------------------------------

/// FNV-1a, 64-bit.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);
std::uint64_t hash_file(const std::filesystem::path& file);

/// Everything needed to audit or replay a run: the resolved config, the
/// code version, timing, engine summary numbers, and a content hash per
/// output file. Round-trips losslessly through JSON.
struct RunManifest {
  nlohmann::json config;
  std::string code_version;
  double wall_seconds = 0.0;
  nlohmann::json summary;
  std::map<std::string, std::string> output_hashes;

  bool operator==(const RunManifest&) const = default;
};

nlohmann::json manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Cross-engine comparison
// ---------------------------------------------------------------------------

/// Half the L1 distance between two probability vectors, zero-padding the
/// shorter one.
double total_variation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Three one-site height laws on a common zero-padded support, with their
/// pairwise total-variation distances and the verdicts against the
/// configured tolerances.
struct CompareReport {
  Eigen::VectorXd exact;
  Eigen::VectorXd kmc;
  Eigen::VectorXd mf;
  Eigen::VectorXd kmc_diff;  // kmc - exact, per height
  Eigen::VectorXd mf_diff;   // mf - exact, per height
  double tv_kmc = 0.0;       // exact vs kmc
  double tv_mf = 0.0;        // exact vs mf
  double tv_cross = 0.0;     // kmc vs mf
  CompareTolerances tolerances;
  bool kmc_pass = false;
  bool mf_pass = false;
  bool pass = false;
};

CompareReport compare_report(const HeightDistribution& exact,
                             const HeightDistribution& kmc,
                             const HeightDistribution& mf,
                             const CompareTolerances& tolerances);

nlohmann::json compare_to_json(const CompareReport& report);

// ---------------------------------------------------------------------------
// SVG plots
// ---------------------------------------------------------------------------

struct SvgSeries {
  std::string label;
  std::string color;  // any CSS color
  std::vector<double> x;
  std::vector<double> y;
};

/// Self-contained static SVG: axes, point-marked polylines, a legend, and
/// the full data embedded as comments together with the provenance string,
/// so the file alone identifies what produced it.
void write_svg_plot(const std::filesystem::path& file,
                    const std::string& title, const std::string& x_label,
                    const std::string& y_label,
                    const std::vector<SvgSeries>& series,
                    const std::string& provenance);

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

/// State-space cap: CRSOS_STATE_CAP when set (a positive integer), else
/// the built-in default. Malformed values are ConfigError.
std::size_t state_cap();

/// Runs one experiment end to end: dispatches on config.engine, writes the
/// engine's output files plus manifest.json under config.out, and returns
/// the manifest. Every run with the same config writes byte-identical
/// CSV/JSON/SVG outputs (the manifest differs only in wall_seconds).
RunManifest run_experiment(const ExperimentConfig& config);

}  // namespace crsos
