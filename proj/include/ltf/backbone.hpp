// Minimal time-aware node classifier.
//
// A node is encoded as [own feature; mean feature of its K most recent
// neighbours; mean log(1 + dt) over the K slots], with empty slots padded by
// zero features and dt = 0. Two rectified layers produce the embedding, and a
// class-incremental linear head (one row per class seen so far) produces the
// logits.
//
// Batches are matrices with one sample per column.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ltf/graph.hpp"
#include "ltf/kernels.hpp"

namespace ltf {

inline constexpr int kDefaultNeighbors = 10;

struct NeighborSlot {
  Eigen::VectorXd feature;
  double dt = 0.0;
};

struct NodeContext {
  NodeId node = 0;
  ClassId label = 0;
  Eigen::VectorXd feature;
  std::vector<NeighborSlot> neighbors;  // most recent first, at most K
};

/// Context of `id` at `eval_time`: the K most recent incident events with
/// t <= eval_time.
NodeContext make_context(const TemporalGraph& graph, NodeId id, double eval_time,
                         int k = kDefaultNeighbors);

/// Time of the last event incident to `id` inside period `n`.
double last_activity(const TemporalGraph& graph, NodeId id, int n);

/// Flat model input for a context (dimension 2F + 1).
Eigen::VectorXd encode_context(const NodeContext& ctx, int k = kDefaultNeighbors);

/// Encoded inputs of every node present in a period, evaluated at each
/// node's last activity in that period.
struct InputTable {
  std::vector<NodeId> ids;
  std::vector<ClassId> labels;
  Eigen::MatrixXd inputs;  // (2F + 1) x ids.size()
  std::unordered_map<NodeId, Eigen::Index> column;

  Eigen::MatrixXd gather(const std::vector<NodeId>& nodes) const;
  std::vector<ClassId> labels_of(const std::vector<NodeId>& nodes) const;
};

InputTable build_inputs(const TemporalGraph& graph, const PeriodView& view,
                        int k = kDefaultNeighbors);

/// All trainable tensors. Also used as the gradient container.
struct Params {
  Eigen::MatrixXd w1;  // H x D
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // H x H
  Eigen::VectorXd b2;
  Eigen::MatrixXd head_w;  // C x H
  Eigen::VectorXd head_b;

  Params zeros_like() const;
  bool all_finite() const;
  /// Calls fn(name, Eigen::Map<VectorXd>) for every tensor, in a fixed order.
  template <typename Fn>
  void for_each(Fn&& fn);
  template <typename Fn>
  void for_each(Fn&& fn) const;
};

/// Optional distribution-alignment term added to a batch loss:
///   weight * l_dst, l_dst = -(2 / (B * M)) sum_{v in batch} sum_{u in targets} k(z_v, u)
/// Targets are constants; gradients flow only through the batch embeddings.
struct DistributionTerm {
  const Eigen::MatrixXd* targets = nullptr;  // H x M frozen embeddings
  KernelParams kernel;
  double weight = 1.0;
};

struct LossResult {
  double loss = 0.0;  // ce + weight * dst
  double ce = 0.0;
  double dst = 0.0;  // unweighted l_dst, 0 when no term
  Params grads;
};

class Backbone {
 public:
  Backbone() = default;
  Backbone(int input_dim, int hidden_dim, std::uint64_t seed, double head_init_scale = 0.1,
           int neighbors = kDefaultNeighbors);

  int input_dim() const { return static_cast<int>(params_.w1.cols()); }
  int hidden_dim() const { return static_cast<int>(params_.w1.rows()); }
  int neighbors() const { return neighbors_; }
  int num_classes() const { return static_cast<int>(classes_.size()); }
  const std::vector<ClassId>& classes() const { return classes_; }
  std::optional<int> class_index(ClassId c) const;

  const Params& params() const { return params_; }
  Params& mutable_params() { return params_; }

  /// Appends one head row per class, drawn from the model's seeded init
  /// stream. Existing rows are left untouched.
  void grow_head(const std::vector<ClassId>& new_classes);

  Eigen::MatrixXd embed(const Eigen::MatrixXd& inputs) const;
  Eigen::VectorXd embed(const NodeContext& ctx) const;
  Eigen::MatrixXd logits(const Eigen::MatrixXd& inputs) const;
  /// Column-wise softmax over the head.
  Eigen::MatrixXd classify(const Eigen::MatrixXd& inputs) const;
  Eigen::VectorXd classify(const NodeContext& ctx) const;
  /// Per-sample cross-entropy; labels are head indices.
  Eigen::VectorXd cross_entropy(const Eigen::MatrixXd& inputs, const std::vector<int>& labels) const;

  /// Mean cross-entropy over the batch plus the optional distribution term,
  /// with exact gradients for every parameter.
  LossResult loss_and_grads(const Eigen::MatrixXd& inputs, const std::vector<int>& labels,
                            const std::optional<DistributionTerm>& aux = std::nullopt) const;

  /// params -= lr * grads. Throws if any parameter becomes non-finite.
  void apply(const Params& grads, double lr);

  nlohmann::json to_json() const;
  static Backbone from_json(const nlohmann::json& doc);

 private:
  void check_input(const Eigen::MatrixXd& inputs) const;

  Params params_;
  std::vector<ClassId> classes_;
  double head_init_scale_ = 0.1;
  int neighbors_ = kDefaultNeighbors;
  std::mt19937_64 init_rng_;
};

/// Immutable copy of a Backbone.
class Snapshot {
 public:
  Snapshot() = default;
  explicit Snapshot(const Backbone& model) : model_(std::make_shared<const Backbone>(model)) {}

  bool empty() const { return !model_; }
  const Backbone& model() const { return *model_; }
  const std::vector<ClassId>& classes() const { return model_->classes(); }

  Eigen::MatrixXd embed(const Eigen::MatrixXd& inputs) const { return model_->embed(inputs); }
  Eigen::VectorXd embed(const NodeContext& ctx) const { return model_->embed(ctx); }
  Eigen::MatrixXd classify(const Eigen::MatrixXd& inputs) const { return model_->classify(inputs); }
  Eigen::VectorXd classify(const NodeContext& ctx) const { return model_->classify(ctx); }

  void save(const std::filesystem::path& path) const;
  static Snapshot load(const std::filesystem::path& path);

 private:
  std::shared_ptr<const Backbone> model_;
};

inline Snapshot snapshot(const Backbone& model) { return Snapshot(model); }

// ---------------------------------------------------------------------------

template <typename Fn>
void Params::for_each(Fn&& fn) {
  fn("w1", Eigen::Map<Eigen::VectorXd>(w1.data(), w1.size()));
  fn("b1", Eigen::Map<Eigen::VectorXd>(b1.data(), b1.size()));
  fn("w2", Eigen::Map<Eigen::VectorXd>(w2.data(), w2.size()));
  fn("b2", Eigen::Map<Eigen::VectorXd>(b2.data(), b2.size()));
  fn("head_w", Eigen::Map<Eigen::VectorXd>(head_w.data(), head_w.size()));
  fn("head_b", Eigen::Map<Eigen::VectorXd>(head_b.data(), head_b.size()));
}

template <typename Fn>
void Params::for_each(Fn&& fn) const {
  fn("w1", Eigen::Map<const Eigen::VectorXd>(w1.data(), w1.size()));
  fn("b1", Eigen::Map<const Eigen::VectorXd>(b1.data(), b1.size()));
  fn("w2", Eigen::Map<const Eigen::VectorXd>(w2.data(), w2.size()));
  fn("b2", Eigen::Map<const Eigen::VectorXd>(b2.data(), b2.size()));
  fn("head_w", Eigen::Map<const Eigen::VectorXd>(head_w.data(), head_w.size()));
  fn("head_b", Eigen::Map<const Eigen::VectorXd>(head_b.data(), head_b.size()));
}

}  // namespace ltf
