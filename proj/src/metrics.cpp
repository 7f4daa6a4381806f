#include "ltf/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ltf {

std::optional<double> precision_from(const std::vector<int>& predicted_heads,
                                     const std::vector<int>& true_heads) {
  if (predicted_heads.size() != true_heads.size())
    throw std::invalid_argument("precision_from: prediction/label count mismatch");
  if (true_heads.empty()) return std::nullopt;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < true_heads.size(); ++i) hit += predicted_heads[i] == true_heads[i];
  return static_cast<double>(hit) / static_cast<double>(true_heads.size());
}

std::vector<int> predict(const Backbone& model, const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd l = model.logits(inputs);
  std::vector<int> out(static_cast<std::size_t>(l.cols()));
  for (Eigen::Index j = 0; j < l.cols(); ++j) {
    Eigen::Index best = 0;
    l.col(j).maxCoeff(&best);
    out[static_cast<std::size_t>(j)] = static_cast<int>(best);
  }
  return out;
}

std::optional<double> precision_per_set(const Backbone& model, const InputTable& table,
                                        const PeriodView& view, const std::vector<ClassId>& class_set,
                                        Split split) {
  std::vector<NodeId> nodes;
  for (NodeId id : view.all_in(split)) {
    const ClassId c = table.labels[static_cast<std::size_t>(table.column.at(id))];
    if (std::find(class_set.begin(), class_set.end(), c) != class_set.end()) nodes.push_back(id);
  }
  if (nodes.empty()) return std::nullopt;
  std::vector<int> truth;
  for (ClassId c : table.labels_of(nodes)) {
    auto idx = model.class_index(c);
    // a class the head has never seen can never be predicted
    truth.push_back(idx ? *idx : -1);
  }
  return precision_from(predict(model, table.gather(nodes)), truth);
}

std::vector<std::optional<double>> precisions_by_period(const Backbone& model,
                                                        const TemporalGraph& graph,
                                                        const InputTable& table,
                                                        const PeriodView& view, Split split) {
  std::vector<std::optional<double>> out;
  for (int i = 1; i <= view.period_index; ++i)
    out.push_back(precision_per_set(model, table, view, graph.period(i).classes, split));
  return out;
}

double ap(int n, const std::vector<std::optional<double>>& precisions, int* skipped) {
  if (n < 1 || static_cast<int>(precisions.size()) != n)
    throw std::invalid_argument("ap: expected " + std::to_string(n) + " class-set precisions, got " +
                                std::to_string(precisions.size()));
  double sum = 0.0;
  int defined = 0;
  for (const auto& p : precisions)
    if (p) {
      sum += *p;
      ++defined;
    }
  if (skipped) *skipped = n - defined;
  if (defined == 0) throw std::invalid_argument("ap: no class set has test nodes");
  return sum / defined;
}

double af(int n, const std::vector<std::optional<double>>& method,
          const std::vector<std::optional<double>>* joint) {
  if (!joint) throw std::invalid_argument("af: missing Joint reference");
  if (n < 2) throw std::invalid_argument("af: defined only for n >= 2");
  if (static_cast<int>(method.size()) < n - 1 || static_cast<int>(joint->size()) < n - 1)
    throw std::invalid_argument("af: missing class-set precisions");
  double sum = 0.0;
  int defined = 0;
  for (int i = 0; i < n - 1; ++i) {
    const auto& pj = (*joint)[static_cast<std::size_t>(i)];
    const auto& pm = method[static_cast<std::size_t>(i)];
    if (!pj || !pm) continue;
    sum += *pj - *pm;
    ++defined;
  }
  if (defined == 0) throw std::invalid_argument("af: no old class set has test nodes");
  return sum / defined;
}

double time_per_epoch(const std::vector<double>& epoch_ms) {
  if (epoch_ms.empty()) throw std::invalid_argument("time_per_epoch: empty epoch log");
  return std::accumulate(epoch_ms.begin(), epoch_ms.end(), 0.0) /
         static_cast<double>(epoch_ms.size());
}

void RunRecord::attach_joint(const RunRecord& joint) {
  for (auto& p : periods) {
    if (p.period < 2) continue;
    auto it = std::find_if(joint.periods.begin(), joint.periods.end(),
                           [&](const PeriodMetrics& q) { return q.period == p.period; });
    if (it == joint.periods.end())
      throw std::invalid_argument("Joint reference lacks period " + std::to_string(p.period));
    p.af = af(p.period, p.precision, &it->precision);
  }
}

namespace {

nlohmann::json opt(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> opt_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

nlohmann::json RunRecord::to_json() const {
  nlohmann::json ps = nlohmann::json::array();
  for (const auto& p : periods) {
    nlohmann::json prec = nlohmann::json::array();
    for (const auto& v : p.precision) prec.push_back(opt(v));
    ps.push_back({{"period", p.period},
                  {"precision", prec},
                  {"ap", p.ap},
                  {"af", opt(p.af)},
                  {"epoch_ms", p.epoch_ms},
                  {"time_ms", p.time_ms},
                  {"selection_ms", p.selection_ms}});
  }
  return {{"strategy", strategy}, {"variant", variant}, {"seed", seed},
          {"periods", ps},        {"config", config}};
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
  RunRecord r;
  r.strategy = j.at("strategy").get<std::string>();
  r.variant = j.value("variant", "");
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config = j.value("config", nlohmann::json::object());
  for (const auto& p : j.at("periods")) {
    PeriodMetrics m;
    m.period = p.at("period").get<int>();
    for (const auto& v : p.at("precision")) m.precision.push_back(opt_from(v));
    m.ap = p.at("ap").get<double>();
    m.af = opt_from(p.at("af"));
    m.epoch_ms = p.value("epoch_ms", std::vector<double>{});
    m.time_ms = p.value("time_ms", 0.0);
    m.selection_ms = p.value("selection_ms", 0.0);
    r.periods.push_back(std::move(m));
  }
  return r;
}

}  // namespace ltf
