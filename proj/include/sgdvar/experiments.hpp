#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgdvar/schedule.hpp"

namespace sgdvar::cli {

// Raised for anything wrong with a config: JSON syntax, unknown or missing
// fields, out-of-range values. The message names the offending field and,
// when it can be located in the source text, the line it sits on.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SyntheticConfig {
  int n = 0;
  int p = 0;
  double noise_std = 0.1;
};

// Either a CSV file (csv_path non-empty) or a synthetic draw.
struct DatasetConfig {
  std::string csv_path;
  std::string target_column;
  bool standardize = false;
  bool add_intercept = false;
  SyntheticConfig synthetic;
};

// Which iterations get a polynomial-in-1/b fit, and with what shape.
// degree = 0 means "per-iteration default" (t + 1 for the regression study).
struct FitConfig {
  std::vector<int> ts;
  int degree = 0;
  bool zero_intercept = false;
};

// Full effective configuration of one experiment. Everything that affects the
// outputs lives here; the manifest echoes it back verbatim so a run can be
// reproduced byte-for-byte from its own output directory.
struct ExperimentConfig {
  std::string experiment;  // "regression" | "two_layer" | "moments"
  std::uint64_t master_seed = 1;
  std::string output_dir = ".";
  int threads = 0;  // 0 = leave the OpenMP default alone
  DatasetConfig dataset;
  LearningRateSchedule schedule = LearningRateSchedule::constant(0.1);
  int t_max = 5;
  std::vector<int> batch_sizes;  // empty = experiment-specific default grid
  int runs = 0;  // regression: 0 = exact only; two_layer: replicate count
  int bootstrap_resamples = 1000;
  FitConfig fit;
  int two_layer_p = 8;
  int two_layer_p1 = 16;
  int two_layer_p2 = 8;
  bool assert_monotone = true;
  bool assert_mc_within_ci = false;
};

// Parse + validate. `source_name` only decorates error messages.
ExperimentConfig parse_config(const std::string& json_text,
                              const std::string& source_name = "config");
ExperimentConfig load_config_file(const std::string& path);

// Canonical JSON echo of the effective config (defaults materialized);
// parse_config(config_echo_json(c)) reproduces c exactly.
std::string config_echo_json(const ExperimentConfig& config);

struct AssertionRecord {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ExperimentResult {
  int exit_code = 0;  // 0 = all assertions passed, 1 = some failed
  std::vector<AssertionRecord> assertions;
  std::vector<std::string> outputs;  // file names written under output_dir
};

// Runs the configured study and writes its tables, plot CSVs, and
// manifest.json under config.output_dir. Throws ConfigError for problems a
// validate pass should have caught; assertion failures are reported in the
// result, not thrown.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Fast built-in oracle checks (toy-dataset enumeration, Gaussian-moment
// closed forms, engine-vs-tree agreement); prints one line per check.
// Returns 0 iff everything passed.
int run_selfcheck(std::ostream& out);

}  // namespace sgdvar::cli
