// Budgeted replay selection from the current period's old-class data.
//
// G_sub minimises  alpha * mean_{v in S} j_cls(v) + mmd_sq(part, S)
// G_sim minimises  mmd_sq(part, S)
// both by greedy argmin of a per-candidate score, one partition at a time,
// with candidates embedded and scored by the previous period's snapshot.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ltf/backbone.hpp"
#include "ltf/graph.hpp"
#include "ltf/kernels.hpp"

namespace ltf {

enum class Partitioner { kRandom, kKMeans, kHierarchical };
enum class ScoringMode { kWitness, kExactMarginal };

const char* to_string(Partitioner p);
const char* to_string(ScoringMode m);
Partitioner parse_partitioner(const std::string& s);
ScoringMode parse_scoring_mode(const std::string& s);

struct SelectionConfig {
  double alpha = 1.0;
  int m = 60;
  int m_prime = 60;
  int partition_size = 500;
  Partitioner partitioner = Partitioner::kRandom;
  ScoringMode scoring = ScoringMode::kWitness;
  std::uint64_t seed = 0;
  /// Ablation switches for G_sub scoring: error term and MMD term.
  bool use_error = true;
  bool use_distribution = true;
  bool squared_distance = false;
  /// Split the budgets evenly over old classes and partition each class's
  /// nodes separately instead of the pooled old-class data.
  bool per_class = false;
  /// Fixed kernel bandwidth; the median heuristic is used when unset.
  std::optional<double> gamma;

  void validate() const;
  nlohmann::json to_json() const;
  static SelectionConfig from_json(const nlohmann::json& j);
  static SelectionConfig from_json(const nlohmann::json& j, const SelectionConfig& defaults);
};

/// Selection candidates: embeddings and j_cls under the previous snapshot.
/// Columns of `emb` line up with `ids`, `labels` and `jcls`.
struct CandidatePool {
  std::vector<NodeId> ids;
  std::vector<ClassId> labels;
  Eigen::MatrixXd emb;
  std::vector<double> jcls;

  std::size_t size() const { return ids.size(); }
  CandidatePool subset(const std::vector<std::size_t>& idx) const;
};

/// Cross-entropy of `prev` on v's true label.
double j_cls(const Snapshot& prev, const NodeContext& v);

CandidatePool score_candidates(const Snapshot& prev, const InputTable& table,
                               const std::vector<NodeId>& nodes);

/// Indices (into the pool) of the greedy picks, in pick order, and the score
/// each pick achieved.
struct GreedyTrace {
  std::vector<std::size_t> picks;
  std::vector<double> scores;
};

/// Core greedy loop. `alpha` weights j_cls; `use_distribution` toggles the
/// MMD part. Witness mode scores alpha * j_cls + j_mmd; exact-marginal mode
/// scores the full objective of S + {v}. Ties go to the smallest node id.
GreedyTrace greedy_select(const CandidatePool& part, int budget, double alpha,
                          bool use_distribution, const KernelParams& kernel, ScoringMode mode);

GreedyTrace greedy_select_sub(const CandidatePool& part, int budget, const SelectionConfig& cfg,
                              const KernelParams& kernel);
GreedyTrace greedy_select_sim(const CandidatePool& part, int budget, const SelectionConfig& cfg,
                              const KernelParams& kernel);

/// alpha * mean j_cls(S) + mmd_sq(part, S), computed directly.
double selection_objective(const CandidatePool& part, const std::vector<std::size_t>& subset,
                           double alpha, const KernelParams& kernel);

struct BruteForceResult {
  std::vector<std::size_t> subset;
  double objective = 0.0;
  std::size_t evaluated = 0;
};

/// Exhaustive minimiser of selection_objective over all subsets of exactly
/// `budget` candidates. Limited to 16 candidates and budget 5.
BruteForceResult brute_force_select(const CandidatePool& part, int budget, double alpha,
                                    const KernelParams& kernel);

/// Splits pool indices into W = ceil(n / p) parts of size <= p.
std::vector<std::vector<std::size_t>> partition(const CandidatePool& pool, int partition_size,
                                                Partitioner kind, std::uint64_t seed);

/// floor(total / parts) each, +1 for the first (total mod parts) parts, then
/// capped at each part's capacity with the excess handed to later parts.
std::vector<int> part_quotas(int total, const std::vector<std::size_t>& capacities);

struct BufferEntry {
  NodeId id = 0;
  ClassId label = 0;
  double jcls = 0.0;

  friend bool operator==(const BufferEntry&, const BufferEntry&) = default;
};

struct ReplayBuffer {
  int period = 0;
  std::vector<BufferEntry> sub;
  std::vector<NodeId> sim;
  nlohmann::json config = nlohmann::json::object();

  std::vector<NodeId> sub_ids() const;
  nlohmann::json to_json() const;
  static ReplayBuffer from_json(const nlohmann::json& j);

  friend bool operator==(const ReplayBuffer& a, const ReplayBuffer& b) {
    return a.period == b.period && a.sub == b.sub && a.sim == b.sim;
  }
};

struct SelectionReport {
  ReplayBuffer buffer;
  KernelParams kernel;
  int parts = 0;
  std::vector<double> part_ms;  // wall time of each partition's selection
  double total_ms = 0.0;
  double error_term = 0.0;  // mean j_cls over sub
  double mmd_term = 0.0;    // mean over parts of mmd_sq(part, part's sub)
  std::vector<std::string> warnings;
};

/// Selects G_sub and G_sim from the old-class training nodes of `view`.
SelectionReport select(const PeriodView& view, const InputTable& table, const Snapshot& prev,
                       const SelectionConfig& cfg);

enum class BaselineKind { kRandom, kHerding };

/// ER (class-balanced uniform sample) or iCaRL herding over the old-class
/// training nodes of `view`. Only `sub` is filled.
ReplayBuffer baseline_select(BaselineKind kind, const PeriodView& view, const InputTable& table,
                             const Snapshot& prev, int m, std::uint64_t seed);

/// Per-class herding picks (indices into `emb` columns) in pick order.
std::vector<std::size_t> herding_order(const Eigen::MatrixXd& emb, int count);

}  // namespace ltf
