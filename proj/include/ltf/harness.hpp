// Experiment orchestration: config files, sweep presets, resumable runs and
// result tables.
//
// A config is one JSON object. `"include": "other.json"` (or a list) pulls in
// other files first; keys in the including file win, objects merge
// recursively and arrays are replaced.
//
//   {
//     "data": {"synthetic": {...}} | {"files": "graph_dir"},
//     "strategies": ["joint", "finetune", "er", "icarl", "ltf"],
//     "ablations": ["err_only", ...],          // expands ltf
//     "sweeps": {"alpha": [...], "p": [...]},  // ltf only
//     "sweep_mode": "one_at_a_time" | "grid",
//     "sel": {...}, "train": {...},
//     "seeds": [0, 1, 2],
//     "output_dir": "results"
//   }

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltf/graph.hpp"
#include "ltf/selector.hpp"
#include "ltf/trainer.hpp"

namespace ltf {

/// Invalid configuration; the message starts with the offending field path.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Variant {
  Strategy strategy = Strategy::kLtf;
  std::string name;  // "" for the plain strategy, e.g. "alpha=0.5" otherwise
  SelectionConfig sel;
  TrainConfig train;

  std::string label() const;  // "ltf" or "ltf[alpha=0.5]"
};

struct ExperimentConfig {
  std::optional<SynthConfig> synthetic;
  std::filesystem::path graph_dir;  // used when `synthetic` is unset
  std::vector<Strategy> strategies;
  std::vector<Ablation> ablations;
  nlohmann::json sweeps = nlohmann::json::object();
  bool grid = false;
  SelectionConfig sel;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::filesystem::path output_dir = "results";

  /// Relative paths resolve against `base_dir`.
  static ExperimentConfig from_json(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = {});
  nlohmann::json to_json() const;

  /// All runs per seed, Joint first. Joint is added when any other strategy
  /// is present since AF needs it.
  std::vector<Variant> variants() const;
};

/// Reads a config file and resolves includes.
nlohmann::json load_config_json(const std::filesystem::path& file);

std::vector<std::string> preset_names();
/// Replaces strategies/ablations/sweeps with the named preset's.
void apply_preset(ExperimentConfig& cfg, const std::string& name);

/// Seeds from TGCL_SEED, if set.
std::optional<std::vector<std::uint64_t>> seed_override();

/// Fully resolved config of one run; its hash tags every output row.
nlohmann::json run_config(const ExperimentConfig& cfg, const Variant& v, std::uint64_t seed);
std::string config_hash(const nlohmann::json& j);

/// The graph a run with `seed` trains on.
TemporalGraph experiment_graph(const ExperimentConfig& cfg, std::uint64_t seed);

struct ResultRow {
  std::string strategy;
  std::string variant;
  std::uint64_t seed = 0;
  int period = 0;
  double ap = 0.0;
  std::optional<double> af;
  std::string config_hash;
};

struct TimingRow {
  std::string strategy;
  std::string variant;
  std::uint64_t seed = 0;
  int period = 0;
  double time_ms = 0.0;
  double selection_ms = 0.0;
};

void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);
void write_timings_csv(const std::filesystem::path& path, const std::vector<TimingRow>& rows);
std::vector<TimingRow> read_timings_csv(const std::filesystem::path& path);

/// Means and sample standard deviations over seeds, per variant and period.
nlohmann::json summarize(const std::vector<ResultRow>& results, const std::vector<TimingRow>& timings);
/// Final-period comparison table: AP (higher is better), AF and Time (lower).
std::string summary_table(const nlohmann::json& summary);

struct RunOptions {
  std::filesystem::path out;
  int jobs = 1;
  bool resume = false;
  std::ostream* log = nullptr;
};

struct ExperimentResult {
  std::vector<ResultRow> results;
  std::vector<TimingRow> timings;
  nlohmann::json summary;
  int failed = 0;
  int skipped = 0;  // already complete on resume
};

/// Runs every (variant, seed) pair and writes results.csv, timings.csv,
/// summary.json and summary.txt under `opts.out`, plus runs/<label>_seed<s>/.
/// Failed runs are reported and counted; completed ones are kept.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts);

/// Re-renders the summary table from the CSVs in `dir`.
std::string report(const std::filesystem::path& dir);

}  // namespace ltf
