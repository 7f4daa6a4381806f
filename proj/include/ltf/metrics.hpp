// Class-incremental evaluation: per-class-set precision, average precision
// (AP), average forgetting against the Joint reference (AF), and epoch time.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ltf/backbone.hpp"
#include "ltf/graph.hpp"

namespace ltf {

/// Fraction of `true_heads` matched by `predicted_heads`; nullopt when empty.
std::optional<double> precision_from(const std::vector<int>& predicted_heads,
                                     const std::vector<int>& true_heads);

/// Argmax over all known classes for each input column.
std::vector<int> predict(const Backbone& model, const Eigen::MatrixXd& inputs);

/// Precision on the `split` nodes of `view` whose class lies in `class_set`.
/// nullopt when there are no such nodes.
std::optional<double> precision_per_set(const Backbone& model, const InputTable& table,
                                        const PeriodView& view, const std::vector<ClassId>& class_set,
                                        Split split = Split::kTest);

/// P_{n,i} for i = 1..n, where set i is period i's class set.
std::vector<std::optional<double>> precisions_by_period(const Backbone& model,
                                                        const TemporalGraph& graph,
                                                        const InputTable& table,
                                                        const PeriodView& view,
                                                        Split split = Split::kTest);

/// AP_n = mean of the n per-set precisions. Undefined sets are skipped (and
/// reported through `skipped`); it is an error if the list does not have
/// exactly n entries or none is defined.
double ap(int n, const std::vector<std::optional<double>>& precisions, int* skipped = nullptr);

/// AF_n = mean over i < n of (P^jnt_{n,i} - P_{n,i}). No clamping.
double af(int n, const std::vector<std::optional<double>>& method,
          const std::vector<std::optional<double>>* joint);

/// Mean of the epoch wall times.
double time_per_epoch(const std::vector<double>& epoch_ms);

struct PeriodMetrics {
  int period = 0;
  std::vector<std::optional<double>> precision;
  double ap = 0.0;
  std::optional<double> af;
  std::vector<double> epoch_ms;
  double time_ms = 0.0;
  double selection_ms = 0.0;
};

struct RunRecord {
  std::string strategy;
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<PeriodMetrics> periods;
  nlohmann::json config = nlohmann::json::object();

  /// Fills AF for every period n >= 2 from a Joint run on the same graph.
  void attach_joint(const RunRecord& joint);
  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

}  // namespace ltf
