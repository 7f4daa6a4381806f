#include "ltf/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ltf {

// ---------------------------------------------------------------------------
// Contexts

NodeContext make_context(const TemporalGraph& graph, NodeId id, double eval_time, int k) {
  const NodeRecord& rec = graph.node(id);
  NodeContext ctx;
  ctx.node = id;
  ctx.label = rec.class_id;
  ctx.feature = rec.feature;
  const auto& inc = graph.incident(id);
  // incident() is time-ordered; walk backwards from the newest eligible event.
  for (auto it = inc.rbegin(); it != inc.rend() && static_cast<int>(ctx.neighbors.size()) < k; ++it) {
    const Event& ev = graph.events()[*it];
    if (ev.t > eval_time) continue;
    const NodeId other = ev.src == id ? ev.dst : ev.src;
    ctx.neighbors.push_back(NeighborSlot{graph.node(other).feature, eval_time - ev.t});
  }
  return ctx;
}

double last_activity(const TemporalGraph& graph, NodeId id, int n) {
  const PeriodSpec& span = graph.period(n);
  const auto& inc = graph.incident(id);
  for (auto it = inc.rbegin(); it != inc.rend(); ++it) {
    const double t = graph.events()[*it].t;
    if (span.contains(t)) return t;
  }
  throw std::invalid_argument("node " + std::to_string(id) + " has no activity in period " +
                              std::to_string(n));
}

Eigen::VectorXd encode_context(const NodeContext& ctx, int k) {
  const Eigen::Index f = ctx.feature.size();
  if (static_cast<int>(ctx.neighbors.size()) > k)
    throw std::invalid_argument("context holds more than K neighbours");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(2 * f + 1);
  out.head(f) = ctx.feature;
  for (const auto& slot : ctx.neighbors) {
    if (slot.feature.size() != f) throw std::invalid_argument("neighbour feature dimension mismatch");
    out.segment(f, f) += slot.feature;
    out[2 * f] += std::log1p(slot.dt);
  }
  out.tail(f + 1) /= static_cast<double>(k);
  return out;
}

Eigen::MatrixXd InputTable::gather(const std::vector<NodeId>& nodes) const {
  Eigen::MatrixXd out(inputs.rows(), static_cast<Eigen::Index>(nodes.size()));
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    auto it = column.find(nodes[i]);
    if (it == column.end())
      throw std::out_of_range("node " + std::to_string(nodes[i]) + " not in input table");
    out.col(static_cast<Eigen::Index>(i)) = inputs.col(it->second);
  }
  return out;
}

std::vector<ClassId> InputTable::labels_of(const std::vector<NodeId>& nodes) const {
  std::vector<ClassId> out;
  out.reserve(nodes.size());
  for (NodeId id : nodes) out.push_back(labels[static_cast<std::size_t>(column.at(id))]);
  return out;
}

InputTable build_inputs(const TemporalGraph& graph, const PeriodView& view, int k) {
  InputTable table;
  table.ids = view.old_nodes;
  table.ids.insert(table.ids.end(), view.new_nodes.begin(), view.new_nodes.end());
  std::sort(table.ids.begin(), table.ids.end());
  table.inputs.resize(2 * graph.feature_dim() + 1, static_cast<Eigen::Index>(table.ids.size()));
  for (std::size_t i = 0; i < table.ids.size(); ++i) {
    const NodeId id = table.ids[i];
    auto ctx = make_context(graph, id, last_activity(graph, id, view.period_index), k);
    table.inputs.col(static_cast<Eigen::Index>(i)) = encode_context(ctx, k);
    table.labels.push_back(ctx.label);
    table.column.emplace(id, static_cast<Eigen::Index>(i));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Params

Params Params::zeros_like() const {
  Params z;
  z.w1 = Eigen::MatrixXd::Zero(w1.rows(), w1.cols());
  z.b1 = Eigen::VectorXd::Zero(b1.size());
  z.w2 = Eigen::MatrixXd::Zero(w2.rows(), w2.cols());
  z.b2 = Eigen::VectorXd::Zero(b2.size());
  z.head_w = Eigen::MatrixXd::Zero(head_w.rows(), head_w.cols());
  z.head_b = Eigen::VectorXd::Zero(head_b.size());
  return z;
}

bool Params::all_finite() const {
  bool ok = true;
  for_each([&](const char*, const auto& t) { ok = ok && t.allFinite(); });
  return ok;
}

// ---------------------------------------------------------------------------
// Backbone

Backbone::Backbone(int input_dim, int hidden_dim, std::uint64_t seed, double head_init_scale,
                   int neighbors)
    : head_init_scale_(head_init_scale), neighbors_(neighbors), init_rng_(seed) {
  if (input_dim < 1 || hidden_dim < 1) throw std::invalid_argument("backbone dims must be positive");
  if (neighbors < 1) throw std::invalid_argument("backbone needs at least one neighbour slot");
  auto init = [&](Eigen::MatrixXd& m, int rows, int cols) {
    std::uniform_real_distribution<double> u(-1.0 / std::sqrt(cols), 1.0 / std::sqrt(cols));
    m.resize(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = u(init_rng_);
  };
  init(params_.w1, hidden_dim, input_dim);
  params_.b1 = Eigen::VectorXd::Zero(hidden_dim);
  init(params_.w2, hidden_dim, hidden_dim);
  params_.b2 = Eigen::VectorXd::Zero(hidden_dim);
  params_.head_w.resize(0, hidden_dim);
  params_.head_b.resize(0);
}

std::optional<int> Backbone::class_index(ClassId c) const {
  auto it = std::find(classes_.begin(), classes_.end(), c);
  if (it == classes_.end()) return std::nullopt;
  return static_cast<int>(it - classes_.begin());
}

void Backbone::grow_head(const std::vector<ClassId>& new_classes) {
  for (std::size_t i = 0; i < new_classes.size(); ++i) {
    if (class_index(new_classes[i]) ||
        std::find(new_classes.begin(), new_classes.begin() + static_cast<std::ptrdiff_t>(i),
                  new_classes[i]) != new_classes.begin() + static_cast<std::ptrdiff_t>(i))
      throw std::invalid_argument("grow_head: duplicate class " + std::to_string(new_classes[i]));
  }
  if (new_classes.empty()) return;
  const Eigen::Index old_rows = params_.head_w.rows();
  const Eigen::Index rows = old_rows + static_cast<Eigen::Index>(new_classes.size());
  Eigen::MatrixXd w(rows, hidden_dim());
  Eigen::VectorXd b = Eigen::VectorXd::Zero(rows);
  w.topRows(old_rows) = params_.head_w;
  b.head(old_rows) = params_.head_b;
  std::uniform_real_distribution<double> u(-head_init_scale_, head_init_scale_);
  for (Eigen::Index r = old_rows; r < rows; ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(init_rng_);
  params_.head_w = std::move(w);
  params_.head_b = std::move(b);
  classes_.insert(classes_.end(), new_classes.begin(), new_classes.end());
}

void Backbone::check_input(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != input_dim())
    throw std::invalid_argument("input dimension " + std::to_string(inputs.rows()) +
                                " does not match model input " + std::to_string(input_dim()));
}

Eigen::MatrixXd Backbone::embed(const Eigen::MatrixXd& inputs) const {
  check_input(inputs);
  Eigen::MatrixXd h1 = ((params_.w1 * inputs).colwise() + params_.b1).cwiseMax(0.0);
  return ((params_.w2 * h1).colwise() + params_.b2).cwiseMax(0.0);
}

Eigen::VectorXd Backbone::embed(const NodeContext& ctx) const {
  return embed(Eigen::MatrixXd(encode_context(ctx, neighbors_)));
}

Eigen::MatrixXd Backbone::logits(const Eigen::MatrixXd& inputs) const {
  return (params_.head_w * embed(inputs)).colwise() + params_.head_b;
}

namespace {

Eigen::MatrixXd softmax_cols(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double mx = logits.col(j).maxCoeff();
    p.col(j) = (logits.col(j).array() - mx).exp();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& v) {
  const double mx = v.maxCoeff();
  return mx + std::log((v.array() - mx).exp().sum());
}

}  // namespace

Eigen::MatrixXd Backbone::classify(const Eigen::MatrixXd& inputs) const {
  if (classes_.empty()) throw std::logic_error("classify: empty head");
  return softmax_cols(logits(inputs));
}

Eigen::VectorXd Backbone::classify(const NodeContext& ctx) const {
  return classify(Eigen::MatrixXd(encode_context(ctx, neighbors_)));
}

Eigen::VectorXd Backbone::cross_entropy(const Eigen::MatrixXd& inputs,
                                        const std::vector<int>& labels) const {
  if (classes_.empty()) throw std::logic_error("cross_entropy: empty head");
  if (static_cast<Eigen::Index>(labels.size()) != inputs.cols())
    throw std::invalid_argument("cross_entropy: label count does not match batch");
  Eigen::MatrixXd l = logits(inputs);
  Eigen::VectorXd out(l.cols());
  for (Eigen::Index j = 0; j < l.cols(); ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    if (y < 0 || y >= num_classes()) throw std::out_of_range("label outside head range");
    out[j] = log_sum_exp(l.col(j)) - l(y, j);
  }
  return out;
}

LossResult Backbone::loss_and_grads(const Eigen::MatrixXd& inputs, const std::vector<int>& labels,
                                    const std::optional<DistributionTerm>& aux) const {
  check_input(inputs);
  if (static_cast<Eigen::Index>(labels.size()) != inputs.cols())
    throw std::invalid_argument("loss_and_grads: label count does not match batch");
  for (int y : labels)
    if (y < 0 || y >= num_classes()) throw std::out_of_range("label outside head range");

  LossResult out;
  out.grads = params_.zeros_like();
  const Eigen::Index batch = inputs.cols();
  if (batch == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(batch);

  const Eigen::MatrixXd a1 = (params_.w1 * inputs).colwise() + params_.b1;
  const Eigen::MatrixXd h1 = a1.cwiseMax(0.0);
  const Eigen::MatrixXd a2 = (params_.w2 * h1).colwise() + params_.b2;
  const Eigen::MatrixXd z = a2.cwiseMax(0.0);
  const Eigen::MatrixXd logit = (params_.head_w * z).colwise() + params_.head_b;

  // d(mean CE)/d logits = (softmax - onehot) / B
  Eigen::MatrixXd g_logit = softmax_cols(logit);
  for (Eigen::Index j = 0; j < batch; ++j) {
    const int y = labels[static_cast<std::size_t>(j)];
    out.ce += log_sum_exp(logit.col(j)) - logit(y, j);
    g_logit(y, j) -= 1.0;
  }
  out.ce *= inv_b;
  g_logit *= inv_b;

  out.grads.head_w = g_logit * z.transpose();
  out.grads.head_b = g_logit.rowwise().sum();
  Eigen::MatrixXd g_z = params_.head_w.transpose() * g_logit;

  if (aux && aux->targets && aux->targets->cols() > 0) {
    const Eigen::MatrixXd& tgt = *aux->targets;
    if (tgt.rows() != z.rows())
      throw std::invalid_argument("distribution targets have wrong embedding dimension");
    const double s = 2.0 / (static_cast<double>(batch) * static_cast<double>(tgt.cols()));
    Eigen::MatrixXd g_k;
    const double sum = cross_kernel_sum(z, tgt, aux->kernel, &g_k);
    g_z -= (aux->weight * s) * g_k;
    out.dst = -s * sum;
  }
  out.loss = out.ce + (aux && aux->targets ? aux->weight * out.dst : 0.0);

  const Eigen::MatrixXd g_a2 = g_z.cwiseProduct((a2.array() > 0.0).cast<double>().matrix());
  out.grads.w2 = g_a2 * h1.transpose();
  out.grads.b2 = g_a2.rowwise().sum();
  const Eigen::MatrixXd g_h1 = params_.w2.transpose() * g_a2;
  const Eigen::MatrixXd g_a1 = g_h1.cwiseProduct((a1.array() > 0.0).cast<double>().matrix());
  out.grads.w1 = g_a1 * inputs.transpose();
  out.grads.b1 = g_a1.rowwise().sum();
  return out;
}

void Backbone::apply(const Params& grads, double lr) {
  params_.w1 -= lr * grads.w1;
  params_.b1 -= lr * grads.b1;
  params_.w2 -= lr * grads.w2;
  params_.b2 -= lr * grads.b2;
  params_.head_w -= lr * grads.head_w;
  params_.head_b -= lr * grads.head_b;
  if (!params_.all_finite()) throw std::runtime_error("non-finite parameter after update");
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

nlohmann::json tensor_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

Eigen::MatrixXd tensor_from(const nlohmann::json& t) {
  const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
  const auto data = t.at("data").get<std::vector<double>>();
  if (shape.size() != 2 || static_cast<Eigen::Index>(data.size()) != shape[0] * shape[1])
    throw std::runtime_error("checkpoint tensor shape does not match its data");
  Eigen::MatrixXd m(shape[0], shape[1]);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = data[static_cast<std::size_t>(i * m.cols() + j)];
  return m;
}

}  // namespace

nlohmann::json Backbone::to_json() const {
  std::ostringstream rng;
  rng << init_rng_;
  return {{"format", "ltf-backbone"},
          {"version", 1},
          {"classes", classes_},
          {"head_init_scale", head_init_scale_},
          {"neighbors", neighbors_},
          {"rng", rng.str()},
          {"tensors",
           {{"w1", tensor_json(params_.w1)},
            {"b1", tensor_json(params_.b1)},
            {"w2", tensor_json(params_.w2)},
            {"b2", tensor_json(params_.b2)},
            {"head_w", tensor_json(params_.head_w)},
            {"head_b", tensor_json(params_.head_b)}}}};
}

Backbone Backbone::from_json(const nlohmann::json& doc) {
  if (doc.value("format", "") != "ltf-backbone" || doc.value("version", 0) != 1)
    throw std::runtime_error("not an ltf-backbone v1 checkpoint");
  Backbone m;
  m.classes_ = doc.at("classes").get<std::vector<ClassId>>();
  m.head_init_scale_ = doc.at("head_init_scale").get<double>();
  m.neighbors_ = doc.at("neighbors").get<int>();
  std::istringstream rng(doc.at("rng").get<std::string>());
  rng >> m.init_rng_;
  const auto& t = doc.at("tensors");
  m.params_.w1 = tensor_from(t.at("w1"));
  m.params_.b1 = tensor_from(t.at("b1"));
  m.params_.w2 = tensor_from(t.at("w2"));
  m.params_.b2 = tensor_from(t.at("b2"));
  m.params_.head_w = tensor_from(t.at("head_w"));
  m.params_.head_b = tensor_from(t.at("head_b"));
  const Eigen::Index h = m.params_.w1.rows();
  if (m.params_.b1.size() != h || m.params_.w2.rows() != h || m.params_.w2.cols() != h ||
      m.params_.b2.size() != h || m.params_.head_w.cols() != h ||
      m.params_.head_w.rows() != static_cast<Eigen::Index>(m.classes_.size()) ||
      m.params_.head_b.size() != m.params_.head_w.rows())
    throw std::runtime_error("checkpoint tensors have inconsistent shapes");
  return m;
}

void Snapshot::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << model_->to_json().dump() << '\n';
}

Snapshot Snapshot::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return Snapshot(Backbone::from_json(nlohmann::json::parse(in)));
}

}  // namespace ltf
