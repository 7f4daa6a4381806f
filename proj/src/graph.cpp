#include "ltf/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ltf/util.hpp"

namespace ltf {

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

namespace {

bool event_less(const Event& a, const Event& b) {
  if (a.t != b.t) return a.t < b.t;
  if (a.src != b.src) return a.src < b.src;
  return a.dst < b.dst;
}

void validate_periods(const std::vector<PeriodSpec>& periods) {
  std::set<ClassId> seen;
  for (std::size_t i = 0; i < periods.size(); ++i) {
    const auto& p = periods[i];
    if (p.index != static_cast<int>(i) + 1)
      throw GraphError("period indices must be 1..N in order; got " + std::to_string(p.index) +
                       " at position " + std::to_string(i + 1));
    if (!(p.t_end > p.t_start))
      throw GraphError("period " + std::to_string(p.index) + " has empty time span");
    if (i > 0 && periods[i - 1].t_end != p.t_start)
      throw GraphError("periods " + std::to_string(i) + " and " + std::to_string(i + 1) +
                       " are not contiguous");
    for (ClassId c : p.classes) {
      if (!seen.insert(c).second)
        throw GraphError("class " + std::to_string(c) + " appears in more than one period");
    }
  }
}

}  // namespace

TemporalGraph::TemporalGraph(std::vector<NodeRecord> nodes, std::vector<Event> events,
                             std::vector<PeriodSpec> periods)
    : nodes_(std::move(nodes)), events_(std::move(events)), periods_(std::move(periods)) {
  std::sort(nodes_.begin(), nodes_.end(),
            [](const NodeRecord& a, const NodeRecord& b) { return a.id < b.id; });
  std::stable_sort(events_.begin(), events_.end(), event_less);
  feature_dim_ = nodes_.empty() ? 0 : static_cast<int>(nodes_.front().feature.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!index_.emplace(nodes_[i].id, i).second)
      throw GraphError("duplicate node id " + std::to_string(nodes_[i].id));
  }
  for (const auto& p : periods_)
    for (ClassId c : p.classes) class_period_.emplace(c, p.index);
  validate();
  incident_.resize(nodes_.size());
  for (std::size_t e = 0; e < events_.size(); ++e) {
    incident_[index_.at(events_[e].src)].push_back(e);
    incident_[index_.at(events_[e].dst)].push_back(e);
  }
}

void TemporalGraph::validate() const {
  validate_periods(periods_);
  for (const auto& n : nodes_) {
    if (static_cast<int>(n.feature.size()) != feature_dim_)
      throw GraphError("node " + std::to_string(n.id) + " has feature dimension " +
                       std::to_string(n.feature.size()) + ", expected " +
                       std::to_string(feature_dim_));
    auto it = class_period_.find(n.class_id);
    if (it == class_period_.end() || it->second != n.birth_period)
      throw GraphError("node " + std::to_string(n.id) + " has class " +
                       std::to_string(n.class_id) + " not in the class set of period " +
                       std::to_string(n.birth_period));
    if (!n.feature.allFinite())
      throw GraphError("node " + std::to_string(n.id) + " has non-finite features");
  }
  for (const auto& e : events_) {
    if (e.src == e.dst) throw GraphError("self-loop event on node " + std::to_string(e.src));
    if (!has_node(e.src) || !has_node(e.dst))
      throw GraphError("event references unknown node " +
                       std::to_string(has_node(e.src) ? e.dst : e.src));
    bool inside = std::any_of(periods_.begin(), periods_.end(),
                              [&](const PeriodSpec& p) { return p.contains(e.t); });
    if (!inside) throw GraphError("event timestamp " + format_double(e.t) + " outside all periods");
  }
}

const PeriodSpec& TemporalGraph::period(int n) const {
  if (n < 1 || n > num_periods())
    throw std::out_of_range("unknown period index " + std::to_string(n));
  return periods_[static_cast<std::size_t>(n - 1)];
}

const NodeRecord& TemporalGraph::node(NodeId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("unknown node id " + std::to_string(id));
  return nodes_[it->second];
}

std::optional<int> TemporalGraph::class_period(ClassId c) const {
  auto it = class_period_.find(c);
  if (it == class_period_.end()) return std::nullopt;
  return it->second;
}

std::vector<ClassId> TemporalGraph::classes_up_to(int n) const {
  std::vector<ClassId> out;
  for (int i = 1; i <= std::min(n, num_periods()); ++i) {
    const auto& cs = period(i).classes;
    out.insert(out.end(), cs.begin(), cs.end());
  }
  return out;
}

const std::vector<std::size_t>& TemporalGraph::incident(NodeId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::out_of_range("unknown node id " + std::to_string(id));
  return incident_[it->second];
}

// ---------------------------------------------------------------------------
// PeriodView

std::vector<NodeId> PeriodView::filter(const std::vector<NodeId>& nodes, Split s) const {
  std::vector<NodeId> out;
  for (NodeId id : nodes) {
    auto it = splits.find(id);
    if (it != splits.end() && it->second == s) out.push_back(id);
  }
  return out;
}

std::vector<NodeId> PeriodView::all_in(Split s) const {
  auto out = old_in(s);
  auto fresh = new_in(s);
  out.insert(out.end(), fresh.begin(), fresh.end());
  std::sort(out.begin(), out.end());
  return out;
}

PeriodView split_period(const TemporalGraph& graph, int n, std::uint64_t split_seed) {
  const PeriodSpec& spec = graph.period(n);
  PeriodView view;
  view.period_index = n;
  view.old_classes = graph.classes_up_to(n - 1);
  view.new_classes = spec.classes;

  std::set<NodeId> active;
  std::vector<std::size_t> in_span;
  for (std::size_t e = 0; e < graph.events().size(); ++e) {
    const Event& ev = graph.events()[e];
    if (!spec.contains(ev.t)) continue;
    in_span.push_back(e);
    active.insert(ev.src);
    active.insert(ev.dst);
  }
  if (in_span.empty()) throw GraphError("period " + std::to_string(n) + " has no events");

  auto is_old = [&](NodeId id) {
    auto p = graph.class_period(graph.node(id).class_id);
    return p && *p < n;
  };
  auto is_new = [&](NodeId id) {
    auto p = graph.class_period(graph.node(id).class_id);
    return p && *p == n;
  };

  // Nodes of future classes cannot appear in T_n on a valid graph, but a
  // loaded graph may contain them; they belong to neither side.
  for (NodeId id : active) {
    if (is_old(id)) view.old_nodes.push_back(id);
    else if (is_new(id)) view.new_nodes.push_back(id);
  }
  for (std::size_t e : in_span) {
    const Event& ev = graph.events()[e];
    if (is_old(ev.src) || is_old(ev.dst)) view.events_old.push_back(e);
    if (is_new(ev.src) || is_new(ev.dst)) view.events_new.push_back(e);
  }

  std::map<ClassId, std::vector<NodeId>> by_class;
  for (NodeId id : view.old_nodes) by_class[graph.node(id).class_id].push_back(id);
  for (NodeId id : view.new_nodes) by_class[graph.node(id).class_id].push_back(id);
  for (auto& [cls, ids] : by_class) {
    std::mt19937_64 rng(derive_seed({split_seed, static_cast<std::uint64_t>(n),
                                     static_cast<std::uint64_t>(cls)}));
    std::shuffle(ids.begin(), ids.end(), rng);
    const std::size_t c = ids.size();
    std::size_t n_train = static_cast<std::size_t>(std::floor(0.8 * static_cast<double>(c) + 0.5));
    std::size_t n_val = static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(c) + 0.5));
    n_train = std::min(n_train, c);
    n_val = std::min(n_val, c - n_train);
    for (std::size_t i = 0; i < c; ++i) {
      Split s = i < n_train ? Split::kTrain : (i < n_train + n_val ? Split::kVal : Split::kTest);
      view.splits.emplace(ids[i], s);
    }
  }
  return view;
}

// ---------------------------------------------------------------------------
// Synthetic generator

void SynthConfig::validate() const {
  if (num_periods < 1) throw std::invalid_argument("synthetic: num_periods must be >= 1");
  if (classes_per_period < 1 || nodes_per_class_per_period < 1)
    throw std::invalid_argument("synthetic: zero nodes requested");
  if (feature_dim < 1) throw std::invalid_argument("synthetic: feature_dim must be >= 1");
  if (drift_step < 0) throw std::invalid_argument("synthetic: drift_step must be >= 0");
  if (!(noise_sigma > 0)) throw std::invalid_argument("synthetic: noise_sigma must be > 0");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(intra_class_edge_prob) || !prob(inter_class_edge_prob))
    throw std::invalid_argument("synthetic: edge probabilities must lie in [0,1]");
  if (intra_class_edge_prob + inter_class_edge_prob <= 0)
    throw std::invalid_argument("synthetic: at least one edge probability must be positive");
  if (events_per_node < 1) throw std::invalid_argument("synthetic: events_per_node must be >= 1");
  if (!(period_length > 0)) throw std::invalid_argument("synthetic: period_length must be > 0");
  if (!(label_noise >= 0.0 && label_noise <= 1.0))
    throw std::invalid_argument("synthetic: label_noise must lie in [0,1]");
}

nlohmann::json SynthConfig::to_json() const {
  return {{"num_periods", num_periods},
          {"classes_per_period", classes_per_period},
          {"nodes_per_class_per_period", nodes_per_class_per_period},
          {"feature_dim", feature_dim},
          {"class_center_scale", class_center_scale},
          {"drift_step", drift_step},
          {"noise_sigma", noise_sigma},
          {"intra_class_edge_prob", intra_class_edge_prob},
          {"inter_class_edge_prob", inter_class_edge_prob},
          {"events_per_node", events_per_node},
          {"period_length", period_length},
          {"label_noise", label_noise},
          {"seed", seed}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("synthetic: expected an object");
  SynthConfig c;
  const nlohmann::json known = c.to_json();
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("synthetic." + key + ": unknown field");
  c.num_periods = j.value("num_periods", c.num_periods);
  c.classes_per_period = j.value("classes_per_period", c.classes_per_period);
  c.nodes_per_class_per_period = j.value("nodes_per_class_per_period", c.nodes_per_class_per_period);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.class_center_scale = j.value("class_center_scale", c.class_center_scale);
  c.drift_step = j.value("drift_step", c.drift_step);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.intra_class_edge_prob = j.value("intra_class_edge_prob", c.intra_class_edge_prob);
  c.inter_class_edge_prob = j.value("inter_class_edge_prob", c.inter_class_edge_prob);
  c.events_per_node = j.value("events_per_node", c.events_per_node);
  c.period_length = j.value("period_length", c.period_length);
  c.label_noise = j.value("label_noise", c.label_noise);
  c.seed = j.value("seed", c.seed);
  return c;
}

SynthCenters synth_centers(const SynthConfig& cfg) {
  cfg.validate();
  const int total = cfg.num_periods * cfg.classes_per_period;
  std::mt19937_64 rng(derive_seed({cfg.seed, 0xC3}));
  std::normal_distribution<double> normal(0.0, 1.0);
  SynthCenters out;
  for (int c = 0; c < total; ++c) {
    Eigen::VectorXd base(cfg.feature_dim), dir(cfg.feature_dim);
    for (int d = 0; d < cfg.feature_dim; ++d) base[d] = cfg.class_center_scale * normal(rng);
    for (int d = 0; d < cfg.feature_dim; ++d) dir[d] = normal(rng);
    dir /= dir.norm();
    out.base.push_back(std::move(base));
    out.direction.push_back(std::move(dir));
  }
  return out;
}

TemporalGraph generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const SynthCenters centers = synth_centers(cfg);
  const int C = cfg.classes_per_period;

  std::vector<PeriodSpec> periods;
  for (int n = 1; n <= cfg.num_periods; ++n) {
    PeriodSpec p;
    p.index = n;
    p.t_start = (n - 1) * cfg.period_length;
    p.t_end = n * cfg.period_length;
    for (int k = 0; k < C; ++k) p.classes.push_back((n - 1) * C + k);
    periods.push_back(std::move(p));
  }

  std::mt19937_64 rng(derive_seed({cfg.seed, 0xE5}));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double same_class = cfg.intra_class_edge_prob /
                            (cfg.intra_class_edge_prob + cfg.inter_class_edge_prob);

  std::vector<NodeRecord> nodes;
  std::vector<Event> events;
  NodeId next_id = 0;
  for (int n = 1; n <= cfg.num_periods; ++n) {
    const int live_classes = n * C;
    // resident[k] holds the ids of class k's nodes sampled for this period.
    std::vector<std::vector<NodeId>> resident(static_cast<std::size_t>(live_classes));
    for (int cls = 0; cls < live_classes; ++cls) {
      const int birth = cls / C + 1;
      Eigen::VectorXd center =
          centers.base[cls] + (n - birth) * cfg.drift_step * centers.direction[cls];
      for (int i = 0; i < cfg.nodes_per_class_per_period; ++i) {
        NodeRecord rec;
        rec.id = next_id++;
        rec.class_id = cls;
        rec.birth_period = birth;
        rec.feature.resize(cfg.feature_dim);
        for (int d = 0; d < cfg.feature_dim; ++d)
          rec.feature[d] = center[d] + cfg.noise_sigma * normal(rng);
        resident[static_cast<std::size_t>(cls)].push_back(rec.id);
        nodes.push_back(std::move(rec));
      }
    }
    const PeriodSpec& span = periods[static_cast<std::size_t>(n - 1)];
    std::uniform_real_distribution<double> when(span.t_start, span.t_end);
    for (int cls = 0; cls < live_classes; ++cls) {
      for (NodeId u : resident[static_cast<std::size_t>(cls)]) {
        for (int e = 0; e < cfg.events_per_node; ++e) {
          int partner_cls = cls;
          if (live_classes > 1 && unit(rng) >= same_class) {
            std::uniform_int_distribution<int> other(0, live_classes - 2);
            partner_cls = other(rng);
            if (partner_cls >= cls) ++partner_cls;
          }
          const auto& pool = resident[static_cast<std::size_t>(partner_cls)];
          if (pool.size() < 2 && partner_cls == cls) continue;
          std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
          NodeId v = pool[pick(rng)];
          while (v == u) v = pool[pick(rng)];
          events.push_back(Event{u, v, when(rng)});
        }
      }
    }
  }
  if (cfg.label_noise > 0 && C > 1) {
    // features and edges follow the generating class; only the label flips
    std::mt19937_64 flip(derive_seed({cfg.seed, 0x1A}));
    std::uniform_int_distribution<int> other(0, C - 2);
    for (auto& rec : nodes) {
      if (unit(flip) >= cfg.label_noise) continue;
      const int first = (rec.birth_period - 1) * C;
      int k = other(flip);
      if (k >= rec.class_id - first) ++k;
      rec.class_id = first + k;
    }
  }
  return TemporalGraph(std::move(nodes), std::move(events), std::move(periods));
}

// ---------------------------------------------------------------------------
// File IO

GraphFiles GraphFiles::in_dir(const std::filesystem::path& dir) {
  return GraphFiles{dir / "nodes.csv", dir / "events.csv", dir / "periods.json"};
}

void save_graph(const TemporalGraph& graph, const GraphFiles& files) {
  for (const auto& p : {files.nodes, files.events, files.periods})
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());

  std::ofstream nodes(files.nodes);
  if (!nodes) throw std::runtime_error("cannot write " + files.nodes.string());
  nodes << "id,class,period";
  for (int d = 0; d < graph.feature_dim(); ++d) nodes << ",f" << d;
  nodes << '\n';
  for (const auto& n : graph.nodes()) {
    nodes << n.id << ',' << n.class_id << ',' << n.birth_period;
    for (Eigen::Index d = 0; d < n.feature.size(); ++d) nodes << ',' << format_double(n.feature[d]);
    nodes << '\n';
  }

  std::ofstream events(files.events);
  if (!events) throw std::runtime_error("cannot write " + files.events.string());
  events << "src,dst,t\n";
  for (const auto& e : graph.events())
    events << e.src << ',' << e.dst << ',' << format_double(e.t) << '\n';

  nlohmann::json periods = nlohmann::json::array();
  for (const auto& p : graph.periods())
    periods.push_back({{"index", p.index},
                       {"t_start", p.t_start},
                       {"t_end", p.t_end},
                       {"classes", p.classes}});
  std::ofstream pf(files.periods);
  if (!pf) throw std::runtime_error("cannot write " + files.periods.string());
  pf << periods.dump(2) << '\n';
}

namespace {

std::vector<PeriodSpec> read_periods(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GraphError("cannot open period file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw GraphError("period file " + path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw GraphError("period file must hold a JSON array");
  std::vector<PeriodSpec> out;
  for (const auto& item : doc) {
    try {
      PeriodSpec p;
      p.index = item.at("index").get<int>();
      p.t_start = item.at("t_start").get<double>();
      p.t_end = item.at("t_end").get<double>();
      p.classes = item.at("classes").get<std::vector<ClassId>>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw GraphError("period file " + path.string() + ": " + e.what());
    }
  }
  std::sort(out.begin(), out.end(),
            [](const PeriodSpec& a, const PeriodSpec& b) { return a.index < b.index; });
  validate_periods(out);
  return out;
}

}  // namespace

TemporalGraph load_graph(const GraphFiles& files) {
  std::vector<PeriodSpec> periods = read_periods(files.periods);
  std::map<ClassId, int> class_period;
  for (const auto& p : periods)
    for (ClassId c : p.classes) class_period[c] = p.index;

  std::ifstream nin(files.nodes);
  if (!nin) throw GraphError("cannot open node file " + files.nodes.string());
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(nin, line)) throw GraphError("node file is empty", 1);
  ++lineno;
  {
    auto head = split_csv(line);
    if (head.size() < 3 || trim(head[0]) != "id" || trim(head[1]) != "class" ||
        trim(head[2]) != "period")
      throw GraphError("node file header must start with id,class,period", lineno);
  }
  std::vector<NodeRecord> nodes;
  std::set<NodeId> ids;
  long dim = -1;
  while (std::getline(nin, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() < 3) throw GraphError("malformed node row", lineno);
    NodeRecord rec;
    if (!parse_number(cells[0], rec.id) || !parse_number(cells[1], rec.class_id) ||
        !parse_number(cells[2], rec.birth_period))
      throw GraphError("malformed node row", lineno);
    const long f = static_cast<long>(cells.size()) - 3;
    if (dim < 0) dim = f;
    if (f != dim)
      throw GraphError("feature dimension mismatch: row has " + std::to_string(f) +
                           " features, expected " + std::to_string(dim),
                       lineno);
    rec.feature.resize(f);
    for (long d = 0; d < f; ++d) {
      if (!parse_number(cells[static_cast<std::size_t>(d + 3)], rec.feature[d]) ||
          !std::isfinite(rec.feature[d]))
        throw GraphError("malformed feature value in column f" + std::to_string(d), lineno);
    }
    if (!ids.insert(rec.id).second)
      throw GraphError("duplicate node id " + std::to_string(rec.id), lineno);
    auto cp = class_period.find(rec.class_id);
    if (cp == class_period.end() || cp->second != rec.birth_period)
      throw GraphError("class " + std::to_string(rec.class_id) +
                           " is not in the class set of period " + std::to_string(rec.birth_period),
                       lineno);
    nodes.push_back(std::move(rec));
  }

  std::ifstream ein(files.events);
  if (!ein) throw GraphError("cannot open event file " + files.events.string());
  std::vector<Event> events;
  lineno = 0;
  if (std::getline(ein, line)) {
    ++lineno;
    auto head = split_csv(line);
    if (head.size() != 3 || trim(head[0]) != "src" || trim(head[1]) != "dst" || trim(head[2]) != "t")
      throw GraphError("event file header must be src,dst,t", lineno);
  }
  while (std::getline(ein, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    Event ev;
    if (cells.size() != 3 || !parse_number(cells[0], ev.src) || !parse_number(cells[1], ev.dst) ||
        !parse_number(cells[2], ev.t))
      throw GraphError("malformed event row", lineno);
    if (!ids.count(ev.src) || !ids.count(ev.dst))
      throw GraphError("event references unknown node " +
                           std::to_string(ids.count(ev.src) ? ev.dst : ev.src),
                       lineno);
    if (ev.src == ev.dst) throw GraphError("self-loop event", lineno);
    bool inside = std::any_of(periods.begin(), periods.end(),
                              [&](const PeriodSpec& p) { return p.contains(ev.t); });
    if (!inside)
      throw GraphError("event timestamp " + format_double(ev.t) + " outside all periods", lineno);
    events.push_back(ev);
  }
  return TemporalGraph(std::move(nodes), std::move(events), std::move(periods));
}

}  // namespace ltf
