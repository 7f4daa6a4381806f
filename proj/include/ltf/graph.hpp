// Event-based temporal graph: node records, time-stamped events, periods
// with disjoint class sets, and the old/new split of a single period.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

namespace ltf {

using NodeId = std::int64_t;
using ClassId = std::int32_t;

struct Event {
  NodeId src = 0;
  NodeId dst = 0;
  double t = 0.0;

  friend bool operator==(const Event&, const Event&) = default;
};

struct NodeRecord {
  NodeId id = 0;
  ClassId class_id = 0;
  int birth_period = 1;  // period whose class set contains class_id
  Eigen::VectorXd feature;

  friend bool operator==(const NodeRecord& a, const NodeRecord& b) {
    return a.id == b.id && a.class_id == b.class_id &&
           a.birth_period == b.birth_period && a.feature == b.feature;
  }
};

/// Period n covers the half-open span [t_start, t_end) and introduces `classes`.
struct PeriodSpec {
  int index = 1;
  double t_start = 0.0;
  double t_end = 0.0;
  std::vector<ClassId> classes;

  bool contains(double t) const { return t >= t_start && t < t_end; }
  friend bool operator==(const PeriodSpec&, const PeriodSpec&) = default;
};

/// Raised for any violation of the TemporalGraph invariants. `line` is the
/// 1-based line of the offending input row when the graph came from a file.
class GraphError : public std::runtime_error {
 public:
  explicit GraphError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(line ? what + " (line " + std::to_string(line) + ")" : what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Immutable after construction. Events are kept sorted by (t, src, dst).
class TemporalGraph {
 public:
  TemporalGraph() = default;
  TemporalGraph(std::vector<NodeRecord> nodes, std::vector<Event> events,
                std::vector<PeriodSpec> periods);

  const std::vector<NodeRecord>& nodes() const { return nodes_; }
  const std::vector<Event>& events() const { return events_; }
  const std::vector<PeriodSpec>& periods() const { return periods_; }

  int num_periods() const { return static_cast<int>(periods_.size()); }
  int feature_dim() const { return feature_dim_; }
  const PeriodSpec& period(int n) const;

  bool has_node(NodeId id) const { return index_.count(id) != 0; }
  const NodeRecord& node(NodeId id) const;

  /// Period index whose class set holds `c`, or nullopt.
  std::optional<int> class_period(ClassId c) const;
  /// Union of the class sets of periods 1..n, ordered by period then listing.
  std::vector<ClassId> classes_up_to(int n) const;

  /// Indices into events() of events incident to `id`, in time order.
  const std::vector<std::size_t>& incident(NodeId id) const;

  friend bool operator==(const TemporalGraph& a, const TemporalGraph& b) {
    return a.nodes_ == b.nodes_ && a.events_ == b.events_ && a.periods_ == b.periods_;
  }

 private:
  void validate() const;

  std::vector<NodeRecord> nodes_;
  std::vector<Event> events_;
  std::vector<PeriodSpec> periods_;
  int feature_dim_ = 0;
  std::unordered_map<NodeId, std::size_t> index_;
  std::unordered_map<ClassId, int> class_period_;
  std::vector<std::vector<std::size_t>> incident_;
};

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

const char* to_string(Split s);

/// Old/new decomposition of one period. Node lists are sorted by id.
struct PeriodView {
  int period_index = 0;
  std::vector<ClassId> old_classes;
  std::vector<ClassId> new_classes;
  std::vector<NodeId> old_nodes;
  std::vector<NodeId> new_nodes;
  std::vector<std::size_t> events_old;  // indices into graph.events()
  std::vector<std::size_t> events_new;
  std::unordered_map<NodeId, Split> splits;

  /// Nodes of `nodes` assigned to split `s`, in input order.
  std::vector<NodeId> filter(const std::vector<NodeId>& nodes, Split s) const;
  std::vector<NodeId> old_in(Split s) const { return filter(old_nodes, s); }
  std::vector<NodeId> new_in(Split s) const { return filter(new_nodes, s); }
  std::vector<NodeId> all_in(Split s) const;
};

/// Old/new view of period n. Nodes are "present" in period n iff incident to
/// at least one event with t in T_n. Splits are 80/10/10 per class, seeded.
PeriodView split_period(const TemporalGraph& graph, int n, std::uint64_t split_seed = 0);

struct SynthConfig {
  int num_periods = 3;
  int classes_per_period = 3;
  int nodes_per_class_per_period = 200;
  int feature_dim = 16;
  double class_center_scale = 3.0;
  double drift_step = 1.0;
  double noise_sigma = 1.0;
  double intra_class_edge_prob = 0.8;
  double inter_class_edge_prob = 0.2;
  int events_per_node = 5;
  double period_length = 1000.0;
  /// Fraction of nodes whose label is replaced by another class of the same
  /// period's class set (features and edges keep the true class).
  double label_noise = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  /// Missing keys keep their defaults; unknown keys are rejected.
  static SynthConfig from_json(const nlohmann::json& j);
};

/// Gaussian class clusters. Every period re-samples fresh nodes for all
/// classes seen so far; an old class's center moves by drift_step along a
/// fixed random unit direction per elapsed period. Events join nodes resident
/// in the same period only.
TemporalGraph generate_synthetic(const SynthConfig& cfg);

/// Per-class base centers and unit drift directions used by the generator.
/// Class c born in period b sits at base[c] + (n - b) * drift_step * direction[c]
/// in period n.
struct SynthCenters {
  std::vector<Eigen::VectorXd> base;
  std::vector<Eigen::VectorXd> direction;
};
SynthCenters synth_centers(const SynthConfig& cfg);

struct GraphFiles {
  std::filesystem::path nodes;
  std::filesystem::path events;
  std::filesystem::path periods;

  static GraphFiles in_dir(const std::filesystem::path& dir);
};

void save_graph(const TemporalGraph& graph, const GraphFiles& files);
TemporalGraph load_graph(const GraphFiles& files);

}  // namespace ltf
