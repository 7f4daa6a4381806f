// tgcl: command-line driver for experiments, data generation and selection.

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ltf/harness.hpp"
#include "ltf/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ltf::ExperimentConfig load_experiment(const fs::path& file) {
  const json j = ltf::load_config_json(file);
  ltf::ExperimentConfig cfg = ltf::ExperimentConfig::from_json(j, file.parent_path());
  if (auto seeds = ltf::seed_override()) cfg.seeds = *seeds;
  return cfg;
}

int cmd_run(const fs::path& config, const std::string& preset, const fs::path& out, int jobs, bool resume) {
  ltf::ExperimentConfig cfg = load_experiment(config);
  if (!preset.empty()) ltf::apply_preset(cfg, preset);
  ltf::RunOptions opts;
  opts.out = out.empty() ? cfg.output_dir : out;
  opts.jobs = jobs;
  opts.resume = resume;
  opts.log = &std::cerr;
  const auto res = ltf::run_experiment(cfg, opts);
  std::cout << ltf::summary_table(res.summary);
  if (res.skipped) std::cerr << res.skipped << " run(s) already complete, reused\n";
  if (res.failed) {
    std::cerr << res.failed << " run(s) failed; see error.txt in their run directories\n";
    return 1;
  }
  return 0;
}

int cmd_gen(const fs::path& synth_file, const fs::path& out) {
  const json j = ltf::load_config_json(synth_file);
  // either a bare generator config or an experiment config with data.synthetic
  json s = j;
  if (j.contains("data")) {
    if (!j.at("data").contains("synthetic")) throw ltf::ConfigError("data.synthetic: missing");
    s = j.at("data").at("synthetic");
  }
  ltf::SynthConfig cfg = ltf::SynthConfig::from_json(s);
  if (auto seeds = ltf::seed_override()) cfg.seed = seeds->front();
  cfg.validate();
  fs::create_directories(out);
  const auto graph = ltf::generate_synthetic(cfg);
  ltf::save_graph(graph, ltf::GraphFiles::in_dir(out));
  std::cerr << "wrote " << graph.nodes().size() << " nodes, " << graph.events().size() << " events, "
            << graph.num_periods() << " periods to " << out.string() << "\n";
  return 0;
}

int cmd_select(const fs::path& config, int period, std::uint64_t seed, bool seed_set, const std::string& method,
               const fs::path& snapshot_in, const fs::path& snapshot_out, const fs::path& out) {
  ltf::ExperimentConfig cfg = load_experiment(config);
  if (!seed_set) seed = cfg.seeds.front();
  const ltf::TemporalGraph graph = ltf::experiment_graph(cfg, seed);
  if (period < 2 || period > graph.num_periods())
    throw ltf::ConfigError("--period: must lie in [2, " + std::to_string(graph.num_periods()) + "]");

  ltf::TrainConfig train = cfg.train;
  train.seed = seed;
  ltf::SelectionConfig sel = cfg.sel;
  sel.seed = seed;
  ltf::Snapshot prev;
  if (!snapshot_in.empty()) {
    prev = ltf::Snapshot::load(snapshot_in);
  } else {
    std::cerr << "training through period " << period - 1 << " for the selection snapshot\n";
    prev = ltf::run_strategy(graph, ltf::Strategy::kLtf, sel, train, seed, period - 1).snapshots.back();
  }
  if (!snapshot_out.empty()) prev.save(snapshot_out);

  const ltf::PeriodView view = ltf::split_period(graph, period, seed);
  const ltf::InputTable table = ltf::build_inputs(graph, view, prev.model().neighbors());
  const std::uint64_t sel_seed = ltf::derive_seed({seed, static_cast<std::uint64_t>(period)});
  json doc;
  if (method == "ltf") {
    ltf::SelectionConfig c = ltf::apply_ablation(sel, train.ablation);
    c.seed = sel_seed;
    const auto rep = ltf::select(view, table, prev, c);
    for (const auto& w : rep.warnings) std::cerr << "warning: " << w << "\n";
    std::cerr << "selected " << rep.buffer.sub.size() << " + " << rep.buffer.sim.size() << " nodes from "
              << rep.parts << " part(s) in " << ltf::format_fixed(rep.total_ms, 1) << " ms\n";
    doc = rep.buffer.to_json();
  } else {
    const auto kind = method == "er" ? ltf::BaselineKind::kRandom : ltf::BaselineKind::kHerding;
    doc = ltf::baseline_select(kind, view, table, prev, sel.m, sel_seed).to_json();
  }
  const std::string text = doc.dump(2) + "\n";
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out.string());
    f << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective replay for temporal graph continual learning"};
  app.require_subcommand(1);

  std::string run_config, preset, run_out;
  int jobs = 1;
  bool resume = false;
  auto* run = app.add_subcommand("run", "Run an experiment and write result tables");
  run->add_option("config", run_config, "Experiment config (JSON)")->required();
  run->add_option("--preset", preset, "main | ablation | sensitivity | partition");
  run->add_option("--out", run_out, "Output directory (default: config output_dir)");
  run->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  run->add_flag("--resume", resume, "Reuse runs that already have a completion marker");

  std::string gen_config, gen_out;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic graph and write its files");
  gen->add_option("config", gen_config, "Generator config (JSON)")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();

  std::string sel_config, sel_method = "ltf", snap_in, snap_out, sel_out;
  int sel_period = 2;
  std::uint64_t sel_seed = 0;
  auto* sel = app.add_subcommand("select", "Run replay selection for one period and dump the buffer");
  sel->add_option("config", sel_config, "Experiment config (JSON)")->required();
  sel->add_option("--period", sel_period, "Period whose old-class data is selected from")->required();
  auto* seed_opt = sel->add_option("--seed", sel_seed, "Run seed (default: first config seed)");
  sel->add_option("--method", sel_method, "ltf | er | icarl")
      ->check(CLI::IsMember({"ltf", "er", "icarl"}));
  sel->add_option("--snapshot", snap_in, "Load the previous-period model instead of training it");
  sel->add_option("--save-snapshot", snap_out, "Save the previous-period model");
  sel->add_option("--out", sel_out, "Buffer JSON path (default: stdout)");

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "Re-render the summary table from result CSVs");
  rep->add_option("dir", report_dir, "Experiment output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(run_config, preset, run_out, jobs, resume);
    if (*gen) return cmd_gen(gen_config, gen_out);
    if (*sel) return cmd_select(sel_config, sel_period, sel_seed, seed_opt->count() > 0, sel_method, snap_in,
                                snap_out, sel_out);
    if (*rep) {
      std::cout << ltf::report(report_dir);
      return 0;
    }
  } catch (const ltf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
