#include "sgdvar/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgdvar/batch_enum.hpp"
#include "sgdvar/dataset.hpp"
#include "sgdvar/mc_stats.hpp"
#include "sgdvar/regression.hpp"
#include "sgdvar/rng.hpp"
#include "sgdvar/term_tree.hpp"
#include "sgdvar/two_layer.hpp"
#include "sgdvar/two_layer_sweep.hpp"
#include "sgdvar/version.hpp"
#include "sgdvar/wick.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace sgdvar::cli {

namespace {

constexpr std::uint64_t kDataTag = 0xDA7Aull << 48;
constexpr std::uint64_t kInitTag = 0x1217ull << 48;
constexpr std::uint64_t kSeedTag = 0x5eedull << 48;
constexpr std::uint64_t kCheckTag = 0xC4ECull << 48;

// ---------------------------------------------------------------------------
// formatting

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Plot columns hold log10 of a variance; empirical estimates can be exactly
// zero (all replicates identical), which we print as a literal "-inf".
std::string fmt_log10(double v) {
  if (!(v > 0.0)) return "-inf";
  return fmt_double(std::log10(v));
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

void write_csv(const fs::path& path, const CsvTable& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < table.header.size(); ++i)
    out << (i ? "," : "") << table.header[i];
  out << "\n";
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << "\n";
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// ---------------------------------------------------------------------------
// config parsing

// Best-effort line lookup: first occurrence of the quoted key in the source
// text. Good enough to point a human at the right place.
int line_of_key(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(),
                                         text.begin() + static_cast<long>(pos), '\n'));
}

struct ParseCtx {
  const std::string& text;
  const std::string& source;

  [[noreturn]] void fail(const std::string& field, const std::string& message) const {
    const std::string leaf = field.substr(field.find_last_of('.') + 1);
    std::ostringstream os;
    os << source;
    if (const int line = line_of_key(text, leaf); line > 0) os << ":" << line;
    os << ": field '" << field << "': " << message;
    throw ConfigError(os.str());
  }

  void check_keys(const json& obj, const std::string& path,
                  std::initializer_list<const char*> allowed) const {
    for (const auto& item : obj.items()) {
      if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
            return item.key() == k;
          }) == allowed.end())
        fail(path.empty() ? item.key() : path + "." + item.key(), "unknown field");
    }
  }

  const json* find(const json& obj, const char* key) const {
    const auto it = obj.find(key);
    return it == obj.end() ? nullptr : &*it;
  }

  std::string get_string(const json& obj, const std::string& path, const char* key,
                         const std::string& fallback, bool required = false) const {
    const json* v = find(obj, key);
    if (!v) {
      if (required) fail(join(path, key), "required field is missing");
      return fallback;
    }
    if (!v->is_string()) fail(join(path, key), "expected a string");
    return v->get<std::string>();
  }

  long long get_int(const json& obj, const std::string& path, const char* key,
                    long long fallback, bool required = false) const {
    const json* v = find(obj, key);
    if (!v) {
      if (required) fail(join(path, key), "required field is missing");
      return fallback;
    }
    if (!v->is_number_integer()) fail(join(path, key), "expected an integer");
    return v->get<long long>();
  }

  std::uint64_t get_u64(const json& obj, const std::string& path, const char* key,
                        std::uint64_t fallback) const {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!(v->is_number_unsigned() || (v->is_number_integer() && v->get<long long>() >= 0)))
      fail(join(path, key), "expected a non-negative integer");
    return v->get<std::uint64_t>();
  }

  double get_double(const json& obj, const std::string& path, const char* key,
                    double fallback) const {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_number()) fail(join(path, key), "expected a number");
    return v->get<double>();
  }

  bool get_bool(const json& obj, const std::string& path, const char* key,
                bool fallback) const {
    const json* v = find(obj, key);
    if (!v) return fallback;
    if (!v->is_boolean()) fail(join(path, key), "expected true or false");
    return v->get<bool>();
  }

  std::vector<int> get_int_array(const json& obj, const std::string& path,
                                 const char* key) const {
    const json* v = find(obj, key);
    if (!v) return {};
    if (!v->is_array()) fail(join(path, key), "expected an array of integers");
    std::vector<int> out;
    for (const auto& e : *v) {
      if (!e.is_number_integer()) fail(join(path, key), "expected an array of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  static std::string join(const std::string& path, const char* key) {
    return path.empty() ? key : path + "." + key;
  }
};

}  // namespace

ExperimentConfig parse_config(const std::string& json_text,
                              const std::string& source_name) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source_name + ": " + e.what());
  }
  const ParseCtx ctx{json_text, source_name};
  if (!root.is_object()) ctx.fail("(root)", "config must be a JSON object");

  ctx.check_keys(root, "",
                 {"experiment", "master_seed", "output_dir", "threads", "dataset",
                  "schedule", "t_max", "batch_sizes", "runs", "bootstrap_resamples",
                  "fit", "two_layer", "assert_monotone", "assert_mc_within_ci"});

  ExperimentConfig cfg;
  cfg.experiment = ctx.get_string(root, "", "experiment", "", /*required=*/true);
  if (cfg.experiment != "regression" && cfg.experiment != "two_layer" &&
      cfg.experiment != "moments")
    ctx.fail("experiment", "must be one of \"regression\", \"two_layer\", \"moments\"");

  cfg.master_seed = ctx.get_u64(root, "", "master_seed", 1);
  cfg.output_dir = ctx.get_string(root, "", "output_dir", ".");
  cfg.threads = static_cast<int>(ctx.get_int(root, "", "threads", 0));
  if (cfg.threads < 0) ctx.fail("threads", "must be >= 0");

  if (const json* sch = ctx.find(root, "schedule")) {
    if (!sch->is_object()) ctx.fail("schedule", "expected an object");
    ctx.check_keys(*sch, "schedule", {"kind", "scale"});
    const std::string kind = ctx.get_string(*sch, "schedule", "kind", "constant");
    const double scale = ctx.get_double(*sch, "schedule", "scale", 0.1);
    if (!(scale > 0.0)) ctx.fail("schedule.scale", "must be positive");
    if (kind == "constant")
      cfg.schedule = LearningRateSchedule::constant(scale);
    else if (kind == "inverse_iteration")
      cfg.schedule = LearningRateSchedule::inverse_iteration(scale);
    else
      ctx.fail("schedule.kind", "must be \"constant\" or \"inverse_iteration\"");
  }

  cfg.t_max = static_cast<int>(ctx.get_int(root, "", "t_max", 5));
  if (cfg.t_max < 0) ctx.fail("t_max", "must be >= 0");

  cfg.batch_sizes = ctx.get_int_array(root, "", "batch_sizes");
  {
    std::set<int> seen;
    for (int b : cfg.batch_sizes) {
      if (b < 1) ctx.fail("batch_sizes", "batch sizes must be >= 1");
      if (!seen.insert(b).second) ctx.fail("batch_sizes", "values must be distinct");
    }
  }

  cfg.runs = static_cast<int>(
      ctx.get_int(root, "", "runs", cfg.experiment == "two_layer" ? 1000 : 0));
  if (cfg.experiment == "regression" && cfg.runs != 0 && cfg.runs < 2)
    ctx.fail("runs", "must be 0 (exact only) or >= 2");
  if (cfg.experiment == "two_layer" && cfg.runs < 100)
    ctx.fail("runs", "two_layer study needs runs >= 100");

  cfg.bootstrap_resamples =
      static_cast<int>(ctx.get_int(root, "", "bootstrap_resamples", 1000));
  if (cfg.bootstrap_resamples < 1) ctx.fail("bootstrap_resamples", "must be >= 1");

  if (const json* ds = ctx.find(root, "dataset")) {
    if (!ds->is_object()) ctx.fail("dataset", "expected an object");
    ctx.check_keys(*ds, "dataset",
                   {"csv_path", "target_column", "standardize", "add_intercept",
                    "synthetic"});
    cfg.dataset.csv_path = ctx.get_string(*ds, "dataset", "csv_path", "");
    cfg.dataset.target_column = ctx.get_string(*ds, "dataset", "target_column", "");
    cfg.dataset.standardize = ctx.get_bool(*ds, "dataset", "standardize", false);
    cfg.dataset.add_intercept = ctx.get_bool(*ds, "dataset", "add_intercept", false);
    const json* syn = ctx.find(*ds, "synthetic");
    if (syn) {
      if (!syn->is_object()) ctx.fail("dataset.synthetic", "expected an object");
      ctx.check_keys(*syn, "dataset.synthetic", {"n", "p", "noise_std"});
      cfg.dataset.synthetic.n =
          static_cast<int>(ctx.get_int(*syn, "dataset.synthetic", "n", 0, true));
      cfg.dataset.synthetic.p =
          static_cast<int>(ctx.get_int(*syn, "dataset.synthetic", "p", 0, true));
      cfg.dataset.synthetic.noise_std =
          ctx.get_double(*syn, "dataset.synthetic", "noise_std", 0.1);
      if (cfg.dataset.synthetic.n < 2) ctx.fail("dataset.synthetic.n", "must be >= 2");
      if (cfg.dataset.synthetic.p < 1) ctx.fail("dataset.synthetic.p", "must be >= 1");
      if (cfg.dataset.synthetic.noise_std < 0.0)
        ctx.fail("dataset.synthetic.noise_std", "must be >= 0");
    }
    if (!cfg.dataset.csv_path.empty() && syn)
      ctx.fail("dataset", "specify either csv_path or synthetic, not both");
    if (!cfg.dataset.csv_path.empty() && cfg.dataset.target_column.empty())
      ctx.fail("dataset.target_column", "required when csv_path is set");
  }
  if (cfg.experiment == "regression" && cfg.dataset.csv_path.empty() &&
      cfg.dataset.synthetic.n == 0)
    ctx.fail("dataset", "regression study needs csv_path or synthetic dims");

  if (const json* fit = ctx.find(root, "fit")) {
    if (!fit->is_object()) ctx.fail("fit", "expected an object");
    ctx.check_keys(*fit, "fit", {"ts", "degree", "zero_intercept"});
    cfg.fit.ts = ctx.get_int_array(*fit, "fit", "ts");
    for (int t : cfg.fit.ts)
      if (t < 0 || t > cfg.t_max) ctx.fail("fit.ts", "iterations must lie in [0, t_max]");
    cfg.fit.degree = static_cast<int>(ctx.get_int(*fit, "fit", "degree", 0));
    if (cfg.fit.degree < 0) ctx.fail("fit.degree", "must be >= 0");
    cfg.fit.zero_intercept = ctx.get_bool(*fit, "fit", "zero_intercept", false);
  }

  if (const json* tl = ctx.find(root, "two_layer")) {
    if (!tl->is_object()) ctx.fail("two_layer", "expected an object");
    ctx.check_keys(*tl, "two_layer", {"p", "p1", "p2"});
    cfg.two_layer_p = static_cast<int>(ctx.get_int(*tl, "two_layer", "p", 8));
    cfg.two_layer_p1 = static_cast<int>(ctx.get_int(*tl, "two_layer", "p1", 16));
    cfg.two_layer_p2 = static_cast<int>(ctx.get_int(*tl, "two_layer", "p2", 8));
    if (cfg.two_layer_p < 1 || cfg.two_layer_p1 < 1 || cfg.two_layer_p2 < 1)
      ctx.fail("two_layer", "dimensions must be >= 1");
  }

  cfg.assert_monotone = ctx.get_bool(root, "", "assert_monotone", true);
  cfg.assert_mc_within_ci = ctx.get_bool(root, "", "assert_mc_within_ci", false);

  if (cfg.experiment == "two_layer" && cfg.batch_sizes.empty())
    cfg.batch_sizes = {4, 8, 16, 32};

  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string config_echo_json(const ExperimentConfig& c) {
  ordered_json j;
  j["experiment"] = c.experiment;
  j["master_seed"] = c.master_seed;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  if (c.experiment == "regression") {
    ordered_json ds;
    if (!c.dataset.csv_path.empty()) {
      ds["csv_path"] = c.dataset.csv_path;
      ds["target_column"] = c.dataset.target_column;
      ds["standardize"] = c.dataset.standardize;
      ds["add_intercept"] = c.dataset.add_intercept;
    } else {
      ds["synthetic"] = {{"n", c.dataset.synthetic.n},
                         {"p", c.dataset.synthetic.p},
                         {"noise_std", c.dataset.synthetic.noise_std}};
    }
    j["dataset"] = ds;
  }
  j["schedule"] = {
      {"kind", c.schedule.kind == LearningRateSchedule::Kind::Constant
                   ? "constant"
                   : "inverse_iteration"},
      {"scale", c.schedule.scale}};
  j["t_max"] = c.t_max;
  j["batch_sizes"] = c.batch_sizes;
  j["runs"] = c.runs;
  j["bootstrap_resamples"] = c.bootstrap_resamples;
  j["fit"] = {{"ts", c.fit.ts},
              {"degree", c.fit.degree},
              {"zero_intercept", c.fit.zero_intercept}};
  if (c.experiment == "two_layer")
    j["two_layer"] = {
        {"p", c.two_layer_p}, {"p1", c.two_layer_p1}, {"p2", c.two_layer_p2}};
  j["assert_monotone"] = c.assert_monotone;
  j["assert_mc_within_ci"] = c.assert_mc_within_ci;
  return j.dump(2) + "\n";
}

namespace {

// ---------------------------------------------------------------------------
// study runners

struct StudyOutput {
  std::vector<AssertionRecord> assertions;
  std::vector<std::string> outputs;
  std::vector<std::string> notes;
};

void record(StudyOutput& out, const std::string& name, bool passed,
            const std::string& detail) {
  out.assertions.push_back({name, passed, detail});
}

ordered_json polyfit_json(const mc::PolyFit& fit) {
  ordered_json j;
  j["degree"] = fit.degree;
  j["zero_intercept"] = fit.zero_intercept;
  std::vector<double> coeffs(fit.coefficients.data(),
                             fit.coefficients.data() + fit.coefficients.size());
  j["coefficients"] = coeffs;
  j["residual"] = fit.residual_rms;
  j["condition"] = fit.condition;
  return j;
}

StudyOutput run_regression_study(const ExperimentConfig& cfg, const fs::path& dir) {
  StudyOutput out;

  Dataset ds = [&] {
    if (!cfg.dataset.csv_path.empty())
      return load_csv_dataset(cfg.dataset.csv_path, cfg.dataset.target_column,
                              cfg.dataset.standardize, cfg.dataset.add_intercept);
    RngStream data_stream(cfg.master_seed, kDataTag);
    return synthetic_regression_dataset(data_stream, cfg.dataset.synthetic.n,
                                        cfg.dataset.synthetic.p,
                                        cfg.dataset.synthetic.noise_std);
  }();

  std::vector<int> grid = cfg.batch_sizes.empty() ? mc::sweep_batch_grid(ds.n())
                                                  : cfg.batch_sizes;
  for (int b : grid)
    if (b < 1 || b > ds.n())
      throw ConfigError("field 'batch_sizes': batch size " + std::to_string(b) +
                        " outside [1, n=" + std::to_string(ds.n()) + "]");

  RngStream init_stream(cfg.master_seed, kInitTag);
  const Eigen::VectorXd w0 = gaussian_matrix(init_stream, ds.p(), 1).col(0);

  const std::vector<regression::MomentState> states =
      regression::propagate_moments(ds, w0, cfg.schedule, cfg.t_max);

  // Exact variance tables straight from the moment engine.
  CsvTable exact{{"t", "b", "var_g", "var_fullgrad"}, {}};
  CsvTable plot_iter{{"t", "b", "log10_var_g", "log10_var_fullgrad"}, {}};
  for (int t = 0; t <= cfg.t_max; ++t)
    for (int b : grid) {
      const double vg = regression::variance_stochastic_gradient(
          states[static_cast<std::size_t>(t)], ds, b);
      const double vf = regression::variance_full_gradient(
          states[static_cast<std::size_t>(t)], ds, b);
      exact.rows.push_back({std::to_string(t), std::to_string(b), fmt_double(vg),
                            fmt_double(vf)});
      plot_iter.rows.push_back(
          {std::to_string(t), std::to_string(b), fmt_log10(vg), fmt_log10(vf)});
    }
  write_csv(dir / "exact_variances.csv", exact);
  out.outputs.push_back("exact_variances.csv");
  write_csv(dir / "plot_variance_vs_iteration.csv", plot_iter);
  out.outputs.push_back("plot_variance_vs_iteration.csv");

  // Monotonicity verdicts over the full b = 1..n range.
  CsvTable mono{{"t", "var_g_non_increasing", "var_fullgrad_non_increasing",
                 "min_gap_var_g", "min_gap_var_fullgrad"},
                {}};
  bool all_monotone = true;
  std::string first_violation;
  for (int t = 0; t <= cfg.t_max; ++t) {
    const regression::MonotonicityTable table =
        regression::monotonicity_table(states, ds, t);
    mono.rows.push_back({std::to_string(t), fmt_bool(table.var_g_non_increasing),
                         fmt_bool(table.var_full_non_increasing),
                         fmt_double(table.min_gap_var_g),
                         fmt_double(table.min_gap_var_full)});
    if (!(table.var_g_non_increasing && table.var_full_non_increasing)) {
      all_monotone = false;
      if (first_violation.empty()) first_violation = "t=" + std::to_string(t);
    }
  }
  write_csv(dir / "monotonicity.csv", mono);
  out.outputs.push_back("monotonicity.csv");
  if (cfg.assert_monotone)
    record(out, "exact_variance_monotone_in_b", all_monotone,
           all_monotone ? "non-increasing over b=1..n at every t"
                        : "violated at " + first_violation);

  // Polynomial fits of the exact variance in 1/b.
  ordered_json fits = ordered_json::array();
  CsvTable plot_fit{{"t", "b", "log10_var_g", "log10_fit"}, {}};
  for (int t : cfg.fit.ts) {
    const int degree = cfg.fit.degree > 0 ? cfg.fit.degree : t + 1;
    if (static_cast<int>(grid.size()) < degree + 1)
      throw ConfigError("field 'fit.degree': needs at least degree+1 batch sizes (" +
                        std::to_string(degree + 1) + " > " +
                        std::to_string(grid.size()) + ")");
    std::vector<std::pair<double, double>> points;
    for (int b : grid)
      points.emplace_back(static_cast<double>(b),
                          regression::variance_stochastic_gradient(
                              states[static_cast<std::size_t>(t)], ds, b));
    const mc::PolyFit fit =
        mc::fit_inverse_b_poly(points, degree, cfg.fit.zero_intercept);
    ordered_json one = polyfit_json(fit);
    one["t"] = t;
    fits.push_back(one);
    for (const auto& [b, v] : points)
      plot_fit.rows.push_back({std::to_string(t),
                               std::to_string(static_cast<int>(b)), fmt_log10(v),
                               fmt_log10(mc::polyfit_eval(fit, b))});
  }
  write_text(dir / "polyfit.json", fits.dump(2) + "\n");
  out.outputs.push_back("polyfit.json");
  write_csv(dir / "plot_variance_fit_vs_b.csv", plot_fit);
  out.outputs.push_back("plot_variance_fit_vs_b.csv");

  // Replicated-run Monte Carlo column (header-only file when runs = 0).
  CsvTable mc_table{{"b", "t", "var", "ci"}, {}};
  if (cfg.runs >= 2) {
    // CI containment gets a numerical-noise floor of 1e-9 of the largest
    // exact variance at the same t: at b = n the trajectory is deterministic,
    // so the bootstrap CI collapses to [0,0] while the engine value carries
    // last-digit cancellation residue.
    std::vector<double> scale(static_cast<std::size_t>(cfg.t_max + 1), 0.0);
    for (int t = 0; t <= cfg.t_max; ++t)
      for (int b : grid)
        scale[static_cast<std::size_t>(t)] =
            std::max(scale[static_cast<std::size_t>(t)],
                     std::abs(regression::variance_stochastic_gradient(
                         states[static_cast<std::size_t>(t)], ds, b)));

    RngStream seed_stream(cfg.master_seed, kSeedTag);
    bool all_inside = true;
    std::string first_outside;
    for (int b : grid) {
      const std::uint64_t seed_b = seed_stream.next_u64();
      const mc::RunEnsemble ens = mc::run_regression_ensemble(
          ds, w0, cfg.schedule, b, cfg.runs, cfg.t_max, seed_b);
      for (int t = 0; t <= cfg.t_max; ++t) {
        const mc::VarianceEstimate est =
            mc::empirical_variance(ens, t, 1, cfg.bootstrap_resamples);
        mc_table.rows.push_back({std::to_string(b), std::to_string(t),
                                 fmt_double(est.variance),
                                 fmt_double(est.ci_halfwidth())});
        const double exact_v = regression::variance_stochastic_gradient(
            states[static_cast<std::size_t>(t)], ds, b);
        const double floor = 1e-9 * scale[static_cast<std::size_t>(t)];
        if (!est.contains(exact_v) && std::abs(exact_v - est.variance) > floor) {
          all_inside = false;
          if (first_outside.empty())
            first_outside = "t=" + std::to_string(t) + ", b=" + std::to_string(b);
        }
      }
    }
    if (cfg.assert_mc_within_ci)
      record(out, "exact_value_within_mc_ci", all_inside,
             all_inside ? "exact variance inside every 99% bootstrap CI"
                        : "outside CI at " + first_outside);
  }
  write_csv(dir / "mc_variances.csv", mc_table);
  out.outputs.push_back("mc_variances.csv");

  return out;
}

StudyOutput run_two_layer_study(const ExperimentConfig& cfg, const fs::path& dir) {
  StudyOutput out;

  twolayer::SweepConfig sc;
  sc.p = cfg.two_layer_p;
  sc.p1 = cfg.two_layer_p1;
  sc.p2 = cfg.two_layer_p2;
  sc.master_seed = cfg.master_seed;
  sc.schedule = cfg.schedule;
  sc.batch_sizes = cfg.batch_sizes;
  sc.t_max = cfg.t_max;
  sc.runs = cfg.runs;
  sc.bootstrap_resamples = cfg.bootstrap_resamples;

  const twolayer::SweepResult sweep = twolayer::variance_sweep(sc);

  CsvTable table{{"t", "b", "var_g1", "var_g1_ci", "var_g2", "var_g2_ci",
                  "cond_var_g1_mean", "cond_var_g2_mean"},
                 {}};
  CsvTable plot_g1{{"t", "b", "log10_var_g1", "ci"}, {}};
  CsvTable plot_g2{{"t", "b", "log10_var_g2", "ci"}, {}};
  for (const auto& row : sweep.rows) {
    const double ci1 = 0.5 * (row.var_g1_ci_hi - row.var_g1_ci_lo);
    const double ci2 = 0.5 * (row.var_g2_ci_hi - row.var_g2_ci_lo);
    table.rows.push_back({std::to_string(row.t), std::to_string(row.b),
                          fmt_double(row.var_g1), fmt_double(ci1),
                          fmt_double(row.var_g2), fmt_double(ci2),
                          fmt_double(row.cond_var_g1_mean),
                          fmt_double(row.cond_var_g2_mean)});
    plot_g1.rows.push_back({std::to_string(row.t), std::to_string(row.b),
                            fmt_log10(row.var_g1), fmt_double(ci1)});
    plot_g2.rows.push_back({std::to_string(row.t), std::to_string(row.b),
                            fmt_log10(row.var_g2), fmt_double(ci2)});
  }
  write_csv(dir / "two_layer_sweep.csv", table);
  out.outputs.push_back("two_layer_sweep.csv");
  write_csv(dir / "plot_two_layer_g1.csv", plot_g1);
  out.outputs.push_back("plot_two_layer_g1.csv");
  write_csv(dir / "plot_two_layer_g2.csv", plot_g2);
  out.outputs.push_back("plot_two_layer_g2.csv");

  out.notes.push_back(std::string("mean gap norm non-increasing in t: ") +
                      fmt_bool(sweep.gap_norm_nonincreasing));

  if (cfg.assert_monotone) {
    // Check the empirical variances against ascending batch size at each t.
    std::vector<int> sorted_b = cfg.batch_sizes;
    std::sort(sorted_b.begin(), sorted_b.end());
    std::map<std::pair<int, int>, const twolayer::SweepRow*> by_cell;
    for (const auto& row : sweep.rows) by_cell[{row.t, row.b}] = &row;
    bool ok = true;
    std::string first;
    for (int t = 0; t <= cfg.t_max && ok; ++t)
      for (std::size_t i = 1; i < sorted_b.size(); ++i) {
        const auto* lo = by_cell[{t, sorted_b[i - 1]}];
        const auto* hi = by_cell[{t, sorted_b[i]}];
        if (hi->var_g1 > lo->var_g1 || hi->var_g2 > lo->var_g2) {
          ok = false;
          first = "t=" + std::to_string(t) + ", b=" + std::to_string(sorted_b[i]);
          break;
        }
      }
    record(out, "empirical_variance_monotone_in_b", ok,
           ok ? "non-increasing across the batch grid at every t"
              : "violated at " + first);
  }

  // Free-form fits of the empirical variances in 1/b at requested iterations.
  ordered_json fits = ordered_json::array();
  for (int t : cfg.fit.ts) {
    for (int estimator = 1; estimator <= 2; ++estimator) {
      std::vector<std::pair<double, double>> points;
      for (const auto& row : sweep.rows)
        if (row.t == t)
          points.emplace_back(static_cast<double>(row.b),
                              estimator == 1 ? row.var_g1 : row.var_g2);
      const int degree =
          cfg.fit.degree > 0
              ? cfg.fit.degree
              : std::max(1, std::min<int>(2, static_cast<int>(points.size()) - 1));
      if (static_cast<int>(points.size()) < degree + 1)
        throw ConfigError("field 'fit.degree': needs at least degree+1 batch sizes");
      const mc::PolyFit fit =
          mc::fit_inverse_b_poly(points, degree, cfg.fit.zero_intercept);
      ordered_json one = polyfit_json(fit);
      one["t"] = t;
      one["estimator"] = estimator == 1 ? "g1" : "g2";
      fits.push_back(one);
    }
  }
  write_text(dir / "polyfit.json", fits.dump(2) + "\n");
  out.outputs.push_back("polyfit.json");

  return out;
}

StudyOutput run_moments_study(const ExperimentConfig& cfg, const fs::path& dir) {
  StudyOutput out;
  CsvTable table{{"check", "value", "tolerance", "passed"}, {}};
  RngStream stream(cfg.master_seed, kCheckTag);

  const auto check = [&](const std::string& name, double value, double tol) {
    const bool passed = value <= tol;
    table.rows.push_back({name, fmt_double(value), fmt_double(tol), fmt_bool(passed)});
    record(out, name, passed,
           "max error " + fmt_double(value) + " vs tolerance " + fmt_double(tol));
  };

  const int p = 3;
  const Eigen::MatrixXd A = gaussian_matrix(stream, p, p);

  // E[x x' A x x'] = A + A' + tr(A) I, evaluated through the pairing engine.
  {
    term::SymbolTable tab;
    const int a = tab.add_constant("A", p, p);
    wick::MomentPattern pattern{p, {a}, {0, 0, 0, 0}};
    const term::TraceProductSum sum = wick_expectation(tab, pattern);
    const Eigen::MatrixXd lhs = term::evaluate(tab, sum, {{a, A}});
    const Eigen::MatrixXd rhs =
        A + A.transpose() + A.trace() * Eigen::MatrixXd::Identity(p, p);
    check("quartic_closed_form", (lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
    check("trace_identity",
          std::abs(wick::trace_of_quartic(A) - (p + 2) * A.trace()), 1e-12);
  }

  // Odd slot counts annihilate the expectation exactly.
  {
    term::SymbolTable tab;
    const int a = tab.add_constant("A", p, p);
    wick::MomentPattern pattern{p, {a}, {0, 0, 0, 1}};
    const term::TraceProductSum sum = wick_expectation(tab, pattern);
    const Eigen::MatrixXd val = term::evaluate(tab, sum, {{a, A}});
    check("odd_parity_zero", val.cwiseAbs().maxCoeff(), 0.0);
  }

  // Pairing engine versus Monte Carlo on a two-sample pattern.
  {
    term::SymbolTable tab;
    const int a = tab.add_constant("A", p, p);
    const int bsym = tab.add_constant("B", p, p);
    const Eigen::MatrixXd B = gaussian_matrix(stream, p, p);
    wick::MomentPattern pattern{p, {a, bsym}, {0, 0, 1, 1, 0, 0}};
    const term::TraceProductSum sum = wick_expectation(tab, pattern);
    const Eigen::MatrixXd exact = term::evaluate(tab, sum, {{a, A}, {bsym, B}});
    const wick::McMoment mc_est = wick::mc_moment_estimate(
        tab, pattern, {{a, A}, {bsym, B}}, 200000, stream.substream(1));
    const double max_dev =
        ((mc_est.mean - exact).cwiseAbs().array() /
         (5.0 * mc_est.stderr_mean.array() + 1e-300))
            .maxCoeff();
    check("pairing_vs_mc_5se", max_dev, 1.0);
  }

  write_csv(dir / "moment_checks.csv", table);
  out.outputs.push_back("moment_checks.csv");
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const fs::path dir(cfg.output_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec && !fs::is_directory(dir))
    throw ConfigError("field 'output_dir': cannot create directory " + dir.string());

  StudyOutput study;
  if (cfg.experiment == "regression")
    study = run_regression_study(cfg, dir);
  else if (cfg.experiment == "two_layer")
    study = run_two_layer_study(cfg, dir);
  else
    study = run_moments_study(cfg, dir);

  ExperimentResult result;
  result.assertions = study.assertions;
  result.outputs = study.outputs;
  for (const auto& a : result.assertions)
    if (!a.passed) result.exit_code = 1;

  ordered_json manifest;
  manifest["version"] = kVersion;
  manifest["experiment"] = cfg.experiment;
  manifest["config"] = ordered_json::parse(config_echo_json(cfg));
  ordered_json asserts = ordered_json::array();
  for (const auto& a : result.assertions)
    asserts.push_back(
        {{"name", a.name}, {"passed", a.passed}, {"detail", a.detail}});
  manifest["assertions"] = asserts;
  manifest["notes"] = study.notes;
  result.outputs.push_back("manifest.json");
  manifest["outputs"] = result.outputs;
  manifest["exit_code"] = result.exit_code;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  return result;
}

int run_selfcheck(std::ostream& out) {
  int failures = 0;
  const auto report = [&](const std::string& name, bool passed,
                          const std::string& detail) {
    out << (passed ? "PASS" : "FAIL") << "  " << name;
    if (!detail.empty()) out << "  (" << detail << ")";
    out << "\n";
    if (!passed) ++failures;
  };

  // Two-point toy dataset: gradients at w0 = 0 are -y_i = -(+1,-1), so the
  // single-sample stochastic gradient has variance exactly 1.
  {
    Eigen::MatrixXd X(2, 1);
    X << 1, 1;
    Eigen::VectorXd y(2);
    y << 1, -1;
    const Dataset ds = Dataset::from_arrays(X, y);
    const Eigen::VectorXd w0 = Eigen::VectorXd::Zero(1);
    const auto states =
        regression::propagate_moments(ds, w0, LearningRateSchedule::constant(0.1), 0);
    const double v = regression::variance_stochastic_gradient(states[0], ds, 1);
    report("toy_exact_variance", std::abs(v - 1.0) <= 1e-12,
           "Var(g_0, b=1) = " + fmt_double(v));
  }

  RngStream stream(20260816, 0);

  // Full-batch enumeration versus the closed form, every b.
  {
    RngStream ds_stream = stream.substream(1);
    const Dataset ds = synthetic_regression_dataset(ds_stream, 7, 3, 0.5);
    const Eigen::VectorXd w = gaussian_matrix(ds_stream, 3, 1).col(0);
    const Eigen::MatrixXd A = Eigen::MatrixXd::Identity(3, 3);
    double worst = 0.0;
    for (int b = 1; b <= ds.n(); ++b) {
      const double lhs = regression::second_moment_enumerated(ds, w, b, A);
      const double rhs = regression::second_moment_closed_form(ds, w, b, A);
      worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(rhs)));
    }
    report("enumeration_vs_closed_form", worst <= 1e-10,
           "max rel err " + fmt_double(worst));
  }

  // Moment engine versus the recursion-tree oracle.
  {
    RngStream ds_stream = stream.substream(2);
    const Dataset ds = synthetic_regression_dataset(ds_stream, 3, 2, 0.5);
    const Eigen::VectorXd w0 = gaussian_matrix(ds_stream, 2, 1).col(0);
    const auto schedule = LearningRateSchedule::constant(0.05);
    regression::LinearCombTerm seed;
    for (int i = 0; i < ds.n(); ++i)
      seed.coefficient_matrices[i] = Eigen::MatrixXd::Identity(2, 2) /
                                     static_cast<double>(ds.n());
    const int t = 2, b = 2;
    const double tree = regression::term_tree_expectation(ds, w0, schedule, t, seed, b);
    const auto states = regression::propagate_moments(ds, w0, schedule, t);
    const double engine =
        regression::linear_comb_second_moment(ds, states[t], seed, b);
    const double rel = std::abs(tree - engine) / std::max(1.0, std::abs(engine));
    report("engine_vs_tree", rel <= 1e-9, "rel err " + fmt_double(rel));
  }

  // Gaussian quartic closed form and its trace identity.
  {
    RngStream a_stream = stream.substream(3);
    const int p = 4;
    const Eigen::MatrixXd A = gaussian_matrix(a_stream, p, p);
    term::SymbolTable tab;
    const int a = tab.add_constant("A", p, p);
    const wick::MomentPattern pattern{p, {a}, {0, 0, 0, 0}};
    const Eigen::MatrixXd lhs =
        term::evaluate(tab, wick_expectation(tab, pattern), {{a, A}});
    const Eigen::MatrixXd rhs =
        A + A.transpose() + A.trace() * Eigen::MatrixXd::Identity(p, p);
    report("quartic_closed_form", (lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12, "");
    report("trace_identity",
           std::abs(wick::trace_of_quartic(A) - (p + 2) * A.trace()) <= 1e-12, "");
  }

  // Scalar two-layer conditional variances, hand-derived values.
  {
    const auto one = [](double v) -> Eigen::MatrixXd {
      return Eigen::MatrixXd::Constant(1, 1, v);
    };
    const auto state =
        twolayer::TwoLayerState::make(one(2), one(1), one(0), one(0));
    const double v1 = twolayer::conditional_variance_g1(state, 1);
    const double v2 = twolayer::conditional_variance_g2(state, 1);
    report("two_layer_scalar_variances",
           std::abs(v1 - 8.0) <= 1e-12 && std::abs(v2 - 32.0) <= 1e-12,
           "Var(g1) = " + fmt_double(v1) + ", Var(g2) = " + fmt_double(v2));
  }

  out << (failures == 0 ? "selfcheck: all checks passed\n"
                        : "selfcheck: " + std::to_string(failures) + " check(s) failed\n");
  return failures == 0 ? 0 : 1;
}

}  // namespace sgdvar::cli
