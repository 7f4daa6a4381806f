// Per-period continual update and strategy orchestration.
//
// Each training step takes one batch of new-class data and, for replay
// strategies, one batch of G_sub (cycled, since G_sub is much smaller):
//   l_tot = CE(new batch) + CE(sub batch) + beta * l_dst(sub batch, sim)
// where the G_sim embeddings are refreshed from the live model at the start
// of every epoch and held constant within it.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltf/backbone.hpp"
#include "ltf/graph.hpp"
#include "ltf/kernels.hpp"
#include "ltf/metrics.hpp"
#include "ltf/selector.hpp"

namespace ltf {

enum class Strategy { kJoint, kFinetune, kEr, kIcarl, kLtf };
enum class Ablation { kErrOnly, kDistOnly, kBoth, kBothPlusLdst };

const char* to_string(Strategy s);
const char* to_string(Ablation a);
Strategy parse_strategy(const std::string& s);
Ablation parse_ablation(const std::string& s);

struct TrainConfig {
  double beta = 1.0;
  double lr = 1e-3;
  int epochs = 100;
  int batch_size = 600;
  int patience = 20;
  std::uint64_t seed = 0;
  Strategy strategy = Strategy::kLtf;
  Ablation ablation = Ablation::kBothPlusLdst;
  int hidden_dim = 64;
  int neighbors = kDefaultNeighbors;
  double head_init_scale = 0.1;
  /// Recompute the G_sim targets before every step instead of every epoch.
  bool refresh_sim_per_step = false;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig from_json(const nlohmann::json& j, const TrainConfig& defaults);
};

struct DstValue {
  double value = 0.0;
  Eigen::MatrixXd grad;  // d l_dst / d sub embeddings (H x |sub|)
};

/// l_dst = -(2 / (|sub| |sim|)) sum_{v in sub, u in sim} k(v, u), with `sim`
/// treated as constants.
DstValue l_dst(const Eigen::MatrixXd& sub_emb, const Eigen::MatrixXd& sim_emb,
               const KernelParams& kernel);

struct BatchLog {
  double ce_new = 0.0;
  double ce_sub = 0.0;
  double l_dst = 0.0;
  double total = 0.0;
};

struct EpochLog {
  int period = 0;
  int epoch = 0;
  double loss_new = 0.0;  // batch means
  double loss_sub = 0.0;
  double l_dst = 0.0;
  double loss_total = 0.0;
  double val_ap = 0.0;
  double wall_ms = 0.0;  // training steps only
  std::vector<BatchLog> batches;

  nlohmann::json to_json() const;  // without per-batch detail
};

struct TrainResult {
  std::vector<EpochLog> epochs;
  int best_epoch = 0;
  double best_val_ap = 0.0;
};

/// Trains `model` on one period and leaves it at the best-validation-AP
/// parameters. `buffer` must come from the same period when given.
TrainResult train_period(Backbone& model, const TemporalGraph& graph, const PeriodView& view,
                         const InputTable& table, const ReplayBuffer* buffer,
                         const TrainConfig& cfg, const KernelParams& dst_kernel = {});

struct RunResult {
  RunRecord record;
  std::vector<Snapshot> snapshots;  // one per period, after training
  std::vector<ReplayBuffer> buffers;  // one per period >= 2 for replay strategies
  std::vector<EpochLog> epochs;
  std::vector<SelectionReport> selections;
};

/// Selection config with the ablation's error/distribution switches applied.
SelectionConfig apply_ablation(SelectionConfig sel, Ablation ablation);

/// Runs periods 1..last_period (all when 0). Replay buffers are always drawn
/// from the current period's old-class data, scored by the snapshot taken
/// after period n-1.
RunResult run_strategy(const TemporalGraph& graph, Strategy strategy, const SelectionConfig& sel,
                       const TrainConfig& train, std::uint64_t split_seed, int last_period = 0);

}  // namespace ltf
