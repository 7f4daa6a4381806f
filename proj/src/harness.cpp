#include "ltf/harness.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "ltf/util.hpp"

namespace ltf {
namespace fs = std::filesystem;
using nlohmann::json;

std::string Variant::label() const {
  std::string s = to_string(strategy);
  if (!name.empty()) s += "[" + name + "]";
  return s;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

const char* type_word(const json& v) {
  if (v.is_boolean()) return "a boolean";
  if (v.is_number()) return "a number";
  if (v.is_string()) return "a string";
  if (v.is_array()) return "an array";
  if (v.is_object()) return "an object";
  return "null";
}

/// Rejects unknown keys and values whose JSON type differs from the default's.
void check_section(const json& j, const json& defaults, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    const std::string at = path + "." + key;
    if (!defaults.contains(key)) throw ConfigError(at + ": unknown field");
    const json& d = defaults.at(key);
    if (d.is_null()) {
      if (!value.is_null() && !value.is_number()) throw ConfigError(at + ": expected a number or null");
    } else if (d.is_number_integer()) {
      if (!value.is_number_integer()) throw ConfigError(at + ": expected an integer");
      if (d.is_number_unsigned() && value.get<std::int64_t>() < 0)
        throw ConfigError(at + ": expected a non-negative integer");
    } else if (d.is_number()) {
      if (!value.is_number()) throw ConfigError(at + ": expected a number, got " + type_word(value));
    } else if (std::string(type_word(d)) != type_word(value)) {
      throw ConfigError(at + ": expected " + type_word(d) + ", got " + type_word(value));
    }
  }
}

template <typename F>
auto with_path(const std::string& path, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    const std::string msg = e.what();
    // messages from validate() already name their field
    if (msg.rfind(path, 0) == 0) throw ConfigError(msg);
    throw ConfigError(path + ": " + msg);
  }
}

json merge(json base, const json& over) {
  base.merge_patch(over);
  return base;
}

json load_with_includes(const fs::path& file, std::vector<fs::path>& stack) {
  const fs::path canon = fs::weakly_canonical(file);
  if (std::find(stack.begin(), stack.end(), canon) != stack.end())
    throw ConfigError("include: cycle through " + file.string());
  std::ifstream in(file);
  if (!in) throw ConfigError("include: cannot open " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(file.string() + ": top level must be an object");
  if (!j.contains("include")) return j;

  json inc = j.at("include");
  j.erase("include");
  if (inc.is_string()) inc = json::array({inc});
  if (!inc.is_array()) throw ConfigError("include: expected a path or a list of paths");
  stack.push_back(canon);
  json base = json::object();
  for (const auto& p : inc) {
    if (!p.is_string()) throw ConfigError("include: expected a path or a list of paths");
    fs::path target = p.get<std::string>();
    if (target.is_relative()) target = file.parent_path() / target;
    base = merge(base, load_with_includes(target, stack));
  }
  stack.pop_back();
  return merge(base, j);
}

}  // namespace

json load_config_json(const fs::path& file) {
  std::vector<fs::path> stack;
  return load_with_includes(file, stack);
}

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base_dir) {
  static const std::set<std::string> known = {"data",  "strategies", "ablations", "sweeps", "sweep_mode",
                                              "sel",   "train",      "seeds",     "output_dir"};
  if (!j.is_object()) throw ConfigError("config: expected an object");
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError(key + ": unknown field");

  ExperimentConfig c;
  if (!j.contains("data")) throw ConfigError("data: missing");
  const json& data = j.at("data");
  if (!data.is_object() || data.size() != 1 || !(data.contains("synthetic") || data.contains("files")))
    throw ConfigError("data: expected exactly one of {\"synthetic\": {...}} or {\"files\": path}");
  if (data.contains("synthetic")) {
    c.synthetic = with_path("data.synthetic", [&] {
      SynthConfig s = SynthConfig::from_json(data.at("synthetic"));
      s.validate();
      return s;
    });
  } else {
    if (!data.at("files").is_string()) throw ConfigError("data.files: expected a path");
    c.graph_dir = data.at("files").get<std::string>();
    if (c.graph_dir.is_relative()) c.graph_dir = base_dir / c.graph_dir;
  }

  if (!j.contains("strategies")) throw ConfigError("strategies: missing");
  if (!j.at("strategies").is_array() || j.at("strategies").empty())
    throw ConfigError("strategies: expected a non-empty list");
  for (std::size_t i = 0; i < j.at("strategies").size(); ++i) {
    const std::string at = "strategies[" + std::to_string(i) + "]";
    const json& s = j.at("strategies")[i];
    if (!s.is_string()) throw ConfigError(at + ": expected a string");
    c.strategies.push_back(with_path(at, [&] { return parse_strategy(s.get<std::string>()); }));
  }

  if (j.contains("ablations")) {
    if (!j.at("ablations").is_array()) throw ConfigError("ablations: expected a list");
    for (std::size_t i = 0; i < j.at("ablations").size(); ++i) {
      const std::string at = "ablations[" + std::to_string(i) + "]";
      const json& a = j.at("ablations")[i];
      if (!a.is_string()) throw ConfigError(at + ": expected a string");
      c.ablations.push_back(with_path(at, [&] { return parse_ablation(a.get<std::string>()); }));
    }
  }

  if (j.contains("sweeps")) {
    static const std::set<std::string> axes = {"alpha", "beta", "m", "m_prime", "p", "partitioner"};
    const json& sw = j.at("sweeps");
    if (!sw.is_object()) throw ConfigError("sweeps: expected an object");
    for (const auto& [key, values] : sw.items()) {
      const std::string at = "sweeps." + key;
      if (!axes.count(key)) throw ConfigError(at + ": unknown sweep axis");
      if (!values.is_array() || values.empty()) throw ConfigError(at + ": expected a non-empty list");
      for (const auto& v : values) {
        if (key == "partitioner") {
          if (!v.is_string()) throw ConfigError(at + ": expected partitioner names");
          with_path(at, [&] { return parse_partitioner(v.get<std::string>()); });
        } else if (!v.is_number()) {
          throw ConfigError(at + ": expected numbers");
        } else if ((key == "m" || key == "m_prime" || key == "p") && !v.is_number_integer()) {
          throw ConfigError(at + ": expected integers");
        }
      }
    }
    c.sweeps = sw;
  }
  if (j.contains("sweep_mode")) {
    const json& mode = j.at("sweep_mode");
    if (mode == "grid") c.grid = true;
    else if (mode != "one_at_a_time") throw ConfigError("sweep_mode: expected \"one_at_a_time\" or \"grid\"");
  }

  if (j.contains("sel")) {
    check_section(j.at("sel"), SelectionConfig{}.to_json(), "sel");
    c.sel = with_path("sel", [&] { return SelectionConfig::from_json(j.at("sel")); });
  }
  with_path("sel", [&] { c.sel.validate(); });
  if (j.contains("train")) {
    check_section(j.at("train"), TrainConfig{}.to_json(), "train");
    c.train = with_path("train", [&] { return TrainConfig::from_json(j.at("train")); });
  }
  with_path("train", [&] { c.train.validate(); });

  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    if (!s.is_array() || s.empty()) throw ConfigError("seeds: expected a non-empty list");
    c.seeds.clear();
    for (const auto& v : s) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw ConfigError("seeds: expected non-negative integers");
      c.seeds.push_back(v.get<std::uint64_t>());
    }
  }
  if (j.contains("output_dir")) {
    if (!j.at("output_dir").is_string()) throw ConfigError("output_dir: expected a path");
    c.output_dir = j.at("output_dir").get<std::string>();
  }

  // every variant must validate, so sweep points are checked up front
  for (const auto& v : c.variants()) {
    with_path("sweeps", [&] {
      v.sel.validate();
      v.train.validate();
    });
  }
  return c;
}

json ExperimentConfig::to_json() const {
  json j;
  if (synthetic) j["data"] = {{"synthetic", synthetic->to_json()}};
  else j["data"] = {{"files", graph_dir.string()}};
  j["strategies"] = json::array();
  for (auto s : strategies) j["strategies"].push_back(to_string(s));
  j["ablations"] = json::array();
  for (auto a : ablations) j["ablations"].push_back(to_string(a));
  j["sweeps"] = sweeps;
  j["sweep_mode"] = grid ? "grid" : "one_at_a_time";
  j["sel"] = sel.to_json();
  j["train"] = train.to_json();
  j["seeds"] = seeds;
  j["output_dir"] = output_dir.string();
  return j;
}

namespace {

std::string point_name(const std::string& key, const json& v) {
  return key + "=" + (v.is_string() ? v.get<std::string>() : format_double(v.get<double>()));
}

void apply_point(Variant& v, const std::string& key, const json& value) {
  if (key == "alpha") v.sel.alpha = value.get<double>();
  else if (key == "beta") v.train.beta = value.get<double>();
  else if (key == "m") v.sel.m = value.get<int>();
  else if (key == "m_prime") v.sel.m_prime = value.get<int>();
  else if (key == "p") v.sel.partition_size = value.get<int>();
  else if (key == "partitioner") v.sel.partitioner = parse_partitioner(value.get<std::string>());
}

std::string join_name(const std::string& a, const std::string& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  return a + "," + b;
}

}  // namespace

std::vector<Variant> ExperimentConfig::variants() const {
  Variant base;
  base.sel = sel;
  base.train = train;

  // sweep points as (name, assignments) pairs
  using Point = std::pair<std::string, std::vector<std::pair<std::string, json>>>;
  std::vector<Point> points;
  if (sweeps.empty()) {
    points.push_back({"", {}});
  } else if (grid) {
    points.push_back({"", {}});
    for (const auto& [key, values] : sweeps.items()) {
      std::vector<Point> next;
      for (const auto& p : points)
        for (const auto& v : values) {
          Point q = p;
          q.first = join_name(q.first, point_name(key, v));
          q.second.emplace_back(key, v);
          next.push_back(std::move(q));
        }
      points = std::move(next);
    }
  } else {
    for (const auto& [key, values] : sweeps.items())
      for (const auto& v : values) points.push_back({point_name(key, v), {{key, v}}});
  }

  std::vector<Variant> out;
  bool has_joint = false, needs_joint = false;
  for (auto s : strategies) (s == Strategy::kJoint ? has_joint : needs_joint) = true;
  if (has_joint || needs_joint) {
    Variant j = base;
    j.strategy = Strategy::kJoint;
    out.push_back(j);
  }
  std::set<std::string> seen{"joint"};
  for (auto s : strategies) {
    if (s == Strategy::kJoint) continue;
    std::vector<Variant> expanded;
    if (s == Strategy::kLtf) {
      std::vector<std::optional<Ablation>> abls;
      if (ablations.empty()) abls.push_back(std::nullopt);
      for (auto a : ablations) abls.push_back(a);
      for (const auto& a : abls)
        for (const auto& p : points) {
          Variant v = base;
          v.strategy = s;
          if (a) v.train.ablation = *a;
          v.name = join_name(a ? to_string(*a) : "", p.first);
          for (const auto& [key, value] : p.second) apply_point(v, key, value);
          expanded.push_back(std::move(v));
        }
    } else {
      Variant v = base;
      v.strategy = s;
      expanded.push_back(std::move(v));
    }
    for (auto& v : expanded)
      if (seen.insert(v.label()).second) out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Presets

std::vector<std::string> preset_names() { return {"main", "ablation", "sensitivity", "partition"}; }

void apply_preset(ExperimentConfig& cfg, const std::string& name) {
  cfg.ablations.clear();
  cfg.sweeps = json::object();
  cfg.grid = false;
  if (name == "main") {
    cfg.strategies = {Strategy::kJoint, Strategy::kFinetune, Strategy::kEr, Strategy::kIcarl, Strategy::kLtf};
  } else if (name == "ablation") {
    cfg.strategies = {Strategy::kLtf};
    cfg.ablations = {Ablation::kErrOnly, Ablation::kDistOnly, Ablation::kBoth, Ablation::kBothPlusLdst};
  } else if (name == "sensitivity") {
    cfg.strategies = {Strategy::kLtf};
    const json grid = {0.25, 0.5, 1.0, 2.0, 4.0};
    auto scaled = [](int base) {
      json out = json::array();
      for (double f : {0.5, 1.0, 1.5}) out.push_back(std::max(1, static_cast<int>(std::lround(f * base))));
      return out;
    };
    cfg.sweeps = {{"alpha", grid}, {"beta", grid}, {"m", scaled(cfg.sel.m)}, {"m_prime", scaled(cfg.sel.m_prime)}};
  } else if (name == "partition") {
    cfg.strategies = {Strategy::kLtf};
    json ps = json::array();
    for (double f : {0.5, 1.0, 2.0})
      ps.push_back(std::max(cfg.sel.m + 1, static_cast<int>(std::lround(f * cfg.sel.partition_size))));
    cfg.sweeps = {{"partitioner", {"random", "kmeans", "hierarchical"}}, {"p", ps}};
    cfg.grid = true;
  } else {
    std::string known;
    for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("preset: unknown preset '" + name + "' (known: " + known + ")");
  }
}

std::optional<std::vector<std::uint64_t>> seed_override() {
  const char* env = std::getenv("TGCL_SEED");
  if (!env || !*env) return std::nullopt;
  std::vector<std::uint64_t> out;
  for (auto part : split_csv(env)) {
    std::uint64_t s = 0;
    if (!parse_number(part, s)) throw ConfigError("TGCL_SEED: expected comma-separated integers");
    out.push_back(s);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runs

json run_config(const ExperimentConfig& cfg, const Variant& v, std::uint64_t seed) {
  json data;
  if (cfg.synthetic) {
    SynthConfig s = *cfg.synthetic;
    s.seed = seed;
    data = {{"synthetic", s.to_json()}};
  } else {
    data = {{"files", cfg.graph_dir.string()}};
  }
  TrainConfig t = v.train;
  t.seed = seed;
  t.strategy = v.strategy;
  SelectionConfig s = v.sel;
  s.seed = seed;
  return {{"data", data},     {"strategy", to_string(v.strategy)}, {"variant", v.name},
          {"seed", seed},     {"sel", s.to_json()},                {"train", t.to_json()}};
}

std::string config_hash(const json& j) { return hex64(fnv1a(j.dump())); }

TemporalGraph experiment_graph(const ExperimentConfig& cfg, std::uint64_t seed) {
  if (cfg.synthetic) {
    SynthConfig s = *cfg.synthetic;
    s.seed = seed;
    return generate_synthetic(s);
  }
  return load_graph(GraphFiles::in_dir(cfg.graph_dir));
}

namespace {

std::string dir_name(const Variant& v, std::uint64_t seed) {
  std::string s = v.label();
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')) c = '_';
  return s + "_seed" + std::to_string(seed);
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Task {
  Variant variant;
  std::uint64_t seed;
  json config;
  std::string hash;
  fs::path dir;
};

RunRecord execute(const Task& t, const TemporalGraph& graph) {
  TrainConfig train = t.variant.train;
  train.seed = t.seed;
  SelectionConfig sel = t.variant.sel;
  sel.seed = t.seed;
  RunResult res = run_strategy(graph, t.variant.strategy, sel, train, t.seed);
  res.record.variant = t.variant.name;
  res.record.config = t.config;

  fs::create_directories(t.dir);
  std::string epochs;
  for (const auto& e : res.epochs) epochs += e.to_json().dump() + "\n";
  write_text(t.dir / "epochs.jsonl", epochs);
  json buffers = json::array();
  for (const auto& b : res.buffers) buffers.push_back(b.to_json());
  write_text(t.dir / "buffers.json", buffers.dump(2) + "\n");
  write_text(t.dir / "record.json", res.record.to_json().dump(2) + "\n");
  write_text(t.dir / "done", t.hash + "\n");
  return res.record;
}

std::optional<RunRecord> completed(const Task& t) {
  const fs::path marker = t.dir / "done";
  if (!fs::exists(marker)) return std::nullopt;
  const std::string text = read_text(marker);
  if (trim(text) != t.hash) return std::nullopt;
  return RunRecord::from_json(json::parse(read_text(t.dir / "record.json")));
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
  const fs::path out = opts.out.empty() ? cfg.output_dir : opts.out;
  fs::create_directories(out / "runs");
  write_text(out / "config.resolved.json", cfg.to_json().dump(2) + "\n");

  const std::vector<Variant> variants = cfg.variants();
  std::vector<Task> tasks;
  for (std::uint64_t seed : cfg.seeds)
    for (const auto& v : variants) {
      Task t{v, seed, run_config(cfg, v, seed), "", out / "runs" / dir_name(v, seed)};
      t.hash = config_hash(t.config);
      tasks.push_back(std::move(t));
    }

  std::mutex mu;  // guards log output and the caches below
  std::map<std::uint64_t, std::shared_ptr<const TemporalGraph>> graphs;
  auto graph_for = [&](std::uint64_t seed) {
    const std::uint64_t key = cfg.synthetic ? seed : 0;
    {
      std::lock_guard<std::mutex> lock(mu);
      auto it = graphs.find(key);
      if (it != graphs.end()) return it->second;
    }
    auto g = std::make_shared<const TemporalGraph>(experiment_graph(cfg, seed));
    std::lock_guard<std::mutex> lock(mu);
    return graphs.emplace(key, g).first->second;
  };

  std::vector<std::optional<RunRecord>> records(tasks.size());
  ExperimentResult result;
  std::atomic<std::size_t> next{0};
  std::atomic<int> done_count{0};
  auto log = [&](const std::string& line) {
    if (!opts.log) return;
    std::lock_guard<std::mutex> lock(mu);
    *opts.log << line << std::endl;
  };

  auto worker = [&] {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& t = tasks[i];
      const std::string tag = t.variant.label() + " seed " + std::to_string(t.seed);
      try {
        bool cached = false;
        if (opts.resume) {
          if (auto r = completed(t)) {
            records[i] = std::move(r);
            cached = true;
            std::lock_guard<std::mutex> lock(mu);
            ++result.skipped;
          }
        }
        if (!records[i]) {
          fs::remove(t.dir / "done");
          records[i] = execute(t, *graph_for(t.seed));
        }
        const int k = ++done_count;
        log("[" + std::to_string(k) + "/" + std::to_string(tasks.size()) + "] " + tag + ": AP " +
            format_fixed(records[i]->periods.back().ap, 4) + (cached ? " (resumed)" : ""));
      } catch (const std::exception& e) {
        ++done_count;
        log("FAILED " + tag + ": " + e.what());
        try {
          fs::create_directories(t.dir);
          write_text(t.dir / "error.txt", std::string(e.what()) + "\n");
        } catch (...) {
        }
        std::lock_guard<std::mutex> lock(mu);
        ++result.failed;
      }
    }
  };
  const int jobs = std::max(1, std::min<int>(opts.jobs, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  for (int k = 1; k < jobs; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  // AF against the Joint run of the same seed
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!records[i]) continue;
    const RunRecord* joint = nullptr;
    for (std::size_t k = 0; k < tasks.size(); ++k)
      if (records[k] && tasks[k].seed == tasks[i].seed && tasks[k].variant.strategy == Strategy::kJoint)
        joint = &*records[k];
    RunRecord r = *records[i];
    if (joint) r.attach_joint(*joint);
    for (const auto& p : r.periods) {
      result.results.push_back({r.strategy, r.variant, tasks[i].seed, p.period, p.ap, p.af, tasks[i].hash});
      result.timings.push_back({r.strategy, r.variant, tasks[i].seed, p.period, p.time_ms, p.selection_ms});
    }
  }

  write_results_csv(out / "results.csv", result.results);
  write_timings_csv(out / "timings.csv", result.timings);
  result.summary = summarize(result.results, result.timings);
  write_text(out / "summary.json", result.summary.dump(2) + "\n");
  write_text(out / "summary.txt", summary_table(result.summary));
  return result;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

const char* kResultsHeader = "strategy,variant,seed,period,ap,af,config_hash";
const char* kTimingsHeader = "strategy,variant,seed,period,time_ms,selection_ms";

/// Variant names may contain commas; they are written with ';' instead.
std::string csv_field(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  return s;
}

std::string csv_unfield(std::string_view s) {
  std::string out(s);
  std::replace(out.begin(), out.end(), ';', ',');
  return out;
}

std::vector<std::vector<std::string_view>> read_rows(const std::string& text, const fs::path& path,
                                                     const char* header, std::size_t cols) {
  std::vector<std::vector<std::string_view>> rows;
  std::string_view rest(text);
  int line = 0;
  while (!rest.empty()) {
    const auto nl = rest.find('\n');
    std::string_view row = trim(rest.substr(0, nl));
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line;
    if (line == 1) {
      if (row != header) throw std::runtime_error(path.string() + ":1: unexpected header");
      continue;
    }
    if (row.empty()) continue;
    auto fields = split_csv(row);
    if (fields.size() != cols)
      throw std::runtime_error(path.string() + ":" + std::to_string(line) + ": expected " +
                               std::to_string(cols) + " fields");
    rows.push_back(std::move(fields));
  }
  if (line == 0) throw std::runtime_error(path.string() + ": empty file");
  return rows;
}

template <typename T>
T field_number(std::string_view s, const fs::path& path) {
  T v{};
  if (!parse_number(s, v)) throw std::runtime_error(path.string() + ": bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace

void write_results_csv(const fs::path& path, const std::vector<ResultRow>& rows) {
  std::string s = std::string(kResultsHeader) + "\n";
  for (const auto& r : rows)
    s += r.strategy + "," + csv_field(r.variant) + "," + std::to_string(r.seed) + "," +
         std::to_string(r.period) + "," + format_double(r.ap) + "," + (r.af ? format_double(*r.af) : "") +
         "," + r.config_hash + "\n";
  write_text(path, s);
}

std::vector<ResultRow> read_results_csv(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<ResultRow> out;
  for (const auto& f : read_rows(text, path, kResultsHeader, 7)) {
    ResultRow r;
    r.strategy = std::string(f[0]);
    r.variant = csv_unfield(f[1]);
    r.seed = field_number<std::uint64_t>(f[2], path);
    r.period = field_number<int>(f[3], path);
    r.ap = field_number<double>(f[4], path);
    if (!trim(f[5]).empty()) r.af = field_number<double>(f[5], path);
    r.config_hash = std::string(trim(f[6]));
    out.push_back(std::move(r));
  }
  return out;
}

void write_timings_csv(const fs::path& path, const std::vector<TimingRow>& rows) {
  std::string s = std::string(kTimingsHeader) + "\n";
  for (const auto& r : rows)
    s += r.strategy + "," + csv_field(r.variant) + "," + std::to_string(r.seed) + "," +
         std::to_string(r.period) + "," + format_double(r.time_ms) + "," + format_double(r.selection_ms) + "\n";
  write_text(path, s);
}

std::vector<TimingRow> read_timings_csv(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<TimingRow> out;
  for (const auto& f : read_rows(text, path, kTimingsHeader, 6)) {
    TimingRow r;
    r.strategy = std::string(f[0]);
    r.variant = csv_unfield(f[1]);
    r.seed = field_number<std::uint64_t>(f[2], path);
    r.period = field_number<int>(f[3], path);
    r.time_ms = field_number<double>(f[4], path);
    r.selection_ms = field_number<double>(f[5], path);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Summary

namespace {

json stats(const std::vector<double>& xs) {
  if (xs.empty()) return {{"mean", nullptr}, {"std", nullptr}, {"n", 0}};
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sd = xs.size() > 1 ? std::sqrt(var / static_cast<double>(xs.size() - 1)) : 0.0;
  return {{"mean", mean}, {"std", sd}, {"n", xs.size()}};
}

std::string label_of(const std::string& strategy, const std::string& variant) {
  return variant.empty() ? strategy : strategy + "[" + variant + "]";
}

}  // namespace

json summarize(const std::vector<ResultRow>& results, const std::vector<TimingRow>& timings) {
  std::vector<std::string> order;
  std::map<std::string, std::map<int, std::vector<const ResultRow*>>> res;
  std::map<std::string, std::map<int, std::vector<const TimingRow*>>> tim;
  for (const auto& r : results) {
    const std::string l = label_of(r.strategy, r.variant);
    if (!res.count(l)) order.push_back(l);
    res[l][r.period].push_back(&r);
  }
  for (const auto& t : timings) tim[label_of(t.strategy, t.variant)][t.period].push_back(&t);

  json out = json::array();
  for (const auto& l : order) {
    const auto& by_period = res.at(l);
    json entry;
    const ResultRow& any = *by_period.begin()->second.front();
    entry["label"] = l;
    entry["strategy"] = any.strategy;
    entry["variant"] = any.variant;
    json periods = json::array();
    for (const auto& [period, rows] : by_period) {
      std::vector<double> aps, afs, times, sels;
      std::set<std::uint64_t> seeds;
      for (const auto* r : rows) {
        aps.push_back(r->ap);
        if (r->af) afs.push_back(*r->af);
        seeds.insert(r->seed);
      }
      if (tim.count(l) && tim.at(l).count(period))
        for (const auto* t : tim.at(l).at(period)) {
          times.push_back(t->time_ms);
          sels.push_back(t->selection_ms);
        }
      periods.push_back({{"period", period},
                         {"seeds", seeds},
                         {"ap", stats(aps)},
                         {"af", stats(afs)},
                         {"time_ms", stats(times)},
                         {"selection_ms", stats(sels)}});
    }
    entry["periods"] = periods;
    entry["final"] = periods.back();
    out.push_back(entry);
  }
  return {{"variants", out}};
}

std::string summary_table(const json& summary) {
  auto cell = [](const json& s, int digits) -> std::string {
    if (s.at("mean").is_null()) return "-";
    return format_fixed(s.at("mean").get<double>(), digits) + " ± " + format_fixed(s.at("std").get<double>(), digits);
  };
  std::vector<std::array<std::string, 5>> rows;
  rows.push_back({"Method", "AP ↑", "AF ↓", "Time (ms) ↓", "Selection (ms)"});
  for (const auto& v : summary.at("variants")) {
    const json& f = v.at("final");
    rows.push_back({v.at("label").get<std::string>(), cell(f.at("ap"), 4), cell(f.at("af"), 4),
                    cell(f.at("time_ms"), 2), cell(f.at("selection_ms"), 2)});
  }
  // display width, counting UTF-8 code points
  auto width = [](const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
  };
  std::array<std::size_t, 5> w{};
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], width(r[i]));
  std::string out;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t i = 0; i < rows[k].size(); ++i) {
      out += rows[k][i] + std::string(w[i] - width(rows[k][i]), ' ');
      out += i + 1 < rows[k].size() ? "  " : "\n";
    }
    if (k == 0) {
      std::size_t total = 0;
      for (auto x : w) total += x + 2;
      out += std::string(total - 2, '-') + "\n";
    }
  }
  return out;
}

std::string report(const fs::path& dir) {
  const auto results = read_results_csv(dir / "results.csv");
  std::vector<TimingRow> timings;
  if (fs::exists(dir / "timings.csv")) timings = read_timings_csv(dir / "timings.csv");
  return summary_table(summarize(results, timings));
}

}  // namespace ltf
