#include "ltf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ltf/util.hpp"

namespace ltf {

const char* to_string(Strategy s) {
  switch (s) {
    case Strategy::kJoint: return "joint";
    case Strategy::kFinetune: return "finetune";
    case Strategy::kEr: return "er";
    case Strategy::kIcarl: return "icarl";
    case Strategy::kLtf: return "ltf";
  }
  return "?";
}

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::kErrOnly: return "err_only";
    case Ablation::kDistOnly: return "dist_only";
    case Ablation::kBoth: return "both";
    case Ablation::kBothPlusLdst: return "both_plus_ldst";
  }
  return "?";
}

Strategy parse_strategy(const std::string& s) {
  for (auto v : {Strategy::kJoint, Strategy::kFinetune, Strategy::kEr, Strategy::kIcarl, Strategy::kLtf})
    if (s == to_string(v)) return v;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

Ablation parse_ablation(const std::string& s) {
  for (auto v : {Ablation::kErrOnly, Ablation::kDistOnly, Ablation::kBoth, Ablation::kBothPlusLdst})
    if (s == to_string(v)) return v;
  throw std::invalid_argument("unknown ablation '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(beta >= 0)) throw std::invalid_argument("train.beta must be >= 0");
  if (!(lr > 0)) throw std::invalid_argument("train.lr must be > 0");
  if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
  if (patience < 1) throw std::invalid_argument("train.patience must be >= 1");
  if (hidden_dim < 1) throw std::invalid_argument("train.hidden_dim must be >= 1");
  if (neighbors < 1) throw std::invalid_argument("train.neighbors must be >= 1");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"beta", beta},
          {"lr", lr},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"patience", patience},
          {"seed", seed},
          {"strategy", to_string(strategy)},
          {"ablation", to_string(ablation)},
          {"hidden_dim", hidden_dim},
          {"neighbors", neighbors},
          {"head_init_scale", head_init_scale},
          {"refresh_sim_per_step", refresh_sim_per_step}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }

TrainConfig TrainConfig::from_json(const nlohmann::json& j, const TrainConfig& d) {
  if (!j.is_object()) throw std::invalid_argument("train: expected an object");
  const nlohmann::json known = d.to_json();
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("train." + key + ": unknown field");
  TrainConfig c = d;
  c.beta = j.value("beta", d.beta);
  c.lr = j.value("lr", d.lr);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.patience = j.value("patience", d.patience);
  c.seed = j.value("seed", d.seed);
  if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  if (j.contains("ablation")) c.ablation = parse_ablation(j.at("ablation").get<std::string>());
  c.hidden_dim = j.value("hidden_dim", d.hidden_dim);
  c.neighbors = j.value("neighbors", d.neighbors);
  c.head_init_scale = j.value("head_init_scale", d.head_init_scale);
  c.refresh_sim_per_step = j.value("refresh_sim_per_step", d.refresh_sim_per_step);
  return c;
}

DstValue l_dst(const Eigen::MatrixXd& sub_emb, const Eigen::MatrixXd& sim_emb,
               const KernelParams& kernel) {
  if (sub_emb.cols() == 0 || sim_emb.cols() == 0)
    throw std::invalid_argument("l_dst: empty sub or sim set");
  const double s = 2.0 / (static_cast<double>(sub_emb.cols()) * static_cast<double>(sim_emb.cols()));
  DstValue out;
  const double sum = cross_kernel_sum(sub_emb, sim_emb, kernel, &out.grad);
  out.grad *= -s;
  out.value = -s * sum;
  return out;
}

nlohmann::json EpochLog::to_json() const {
  return {{"period", period}, {"epoch", epoch},   {"loss_new", loss_new},
          {"loss_sub", loss_sub}, {"l_dst", l_dst}, {"loss_total", loss_total},
          {"val_ap", val_ap},   {"wall_ms", wall_ms}};
}

namespace {

std::vector<int> head_labels(const Backbone& model, const std::vector<ClassId>& classes) {
  std::vector<int> out;
  out.reserve(classes.size());
  for (ClassId c : classes) {
    auto idx = model.class_index(c);
    if (!idx) throw std::invalid_argument("class " + std::to_string(c) + " missing from the head");
    out.push_back(*idx);
  }
  return out;
}

double validation_ap(const Backbone& model, const TemporalGraph& graph, const InputTable& table,
                     const PeriodView& view) {
  auto prec = precisions_by_period(model, graph, table, view, Split::kVal);
  double sum = 0.0;
  int defined = 0;
  for (const auto& p : prec)
    if (p) {
      sum += *p;
      ++defined;
    }
  return defined ? sum / defined : 0.0;
}

void add_grads(Params& acc, const Params& g) {
  acc.w1 += g.w1;
  acc.b1 += g.b1;
  acc.w2 += g.w2;
  acc.b2 += g.b2;
  acc.head_w += g.head_w;
  acc.head_b += g.head_b;
}

}  // namespace

TrainResult train_period(Backbone& model, const TemporalGraph& graph, const PeriodView& view,
                         const InputTable& table, const ReplayBuffer* buffer,
                         const TrainConfig& cfg, const KernelParams& dst_kernel) {
  cfg.validate();
  if (buffer && buffer->period != view.period_index)
    throw std::invalid_argument("replay buffer was built for period " +
                                std::to_string(buffer->period) + ", not " +
                                std::to_string(view.period_index));
  for (ClassId c : graph.classes_up_to(view.period_index))
    if (!model.class_index(c))
      throw std::invalid_argument("head not grown for class " + std::to_string(c));

  const std::vector<NodeId> primary =
      cfg.strategy == Strategy::kJoint ? view.all_in(Split::kTrain) : view.new_in(Split::kTrain);
  if (view.new_in(Split::kTrain).empty())
    throw std::invalid_argument("period " + std::to_string(view.period_index) +
                                " has no new-class training nodes");
  const Eigen::MatrixXd x_primary = table.gather(primary);
  const std::vector<int> y_primary = head_labels(model, table.labels_of(primary));

  std::vector<NodeId> sub_ids, sim_ids;
  if (buffer && cfg.strategy != Strategy::kJoint && cfg.strategy != Strategy::kFinetune) {
    sub_ids = buffer->sub_ids();
    sim_ids = buffer->sim;
  }
  const Eigen::MatrixXd x_sub = table.gather(sub_ids);
  const std::vector<int> y_sub = head_labels(model, table.labels_of(sub_ids));
  const Eigen::MatrixXd x_sim = table.gather(sim_ids);
  const bool use_dst = cfg.strategy == Strategy::kLtf && cfg.ablation == Ablation::kBothPlusLdst &&
                       cfg.beta > 0 && !sub_ids.empty() && !sim_ids.empty();

  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  TrainResult result;
  Params best = model.params();
  result.best_val_ap = -1.0;
  std::vector<std::size_t> order(primary.size()), sub_order(sub_ids.size());

  auto gather_cols = [](const Eigen::MatrixXd& x, const std::vector<int>& y,
                        const std::vector<std::size_t>& idx, Eigen::MatrixXd& xb, std::vector<int>& yb) {
    xb.resize(x.rows(), static_cast<Eigen::Index>(idx.size()));
    yb.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      xb.col(static_cast<Eigen::Index>(i)) = x.col(static_cast<Eigen::Index>(idx[i]));
      yb[i] = y[idx[i]];
    }
  };

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed({cfg.seed, 0x7A, static_cast<std::uint64_t>(view.period_index),
                                     static_cast<std::uint64_t>(epoch)}));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::iota(sub_order.begin(), sub_order.end(), 0);
    std::shuffle(sub_order.begin(), sub_order.end(), rng);

    EpochLog log;
    log.period = view.period_index;
    log.epoch = epoch;
    const auto t0 = std::chrono::steady_clock::now();
    Eigen::MatrixXd sim_targets;
    if (use_dst) sim_targets = model.embed(x_sim);

    std::size_t sub_cursor = 0;
    Eigen::MatrixXd xb, xs;
    std::vector<int> yb, ys;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(
                                                             std::min(order.size(), start + batch)));
      gather_cols(x_primary, y_primary, idx, xb, yb);
      LossResult step = model.loss_and_grads(xb, yb);
      BatchLog bl;
      bl.ce_new = step.ce;
      if (!sub_order.empty()) {
        std::vector<std::size_t> sidx;
        const std::size_t take = std::min(batch, sub_order.size());
        for (std::size_t i = 0; i < take; ++i) {
          sidx.push_back(sub_order[sub_cursor]);
          sub_cursor = (sub_cursor + 1) % sub_order.size();
        }
        gather_cols(x_sub, y_sub, sidx, xs, ys);
        std::optional<DistributionTerm> aux;
        if (use_dst) {
          if (cfg.refresh_sim_per_step) sim_targets = model.embed(x_sim);
          aux = DistributionTerm{&sim_targets, dst_kernel, cfg.beta};
        }
        LossResult sub_step = model.loss_and_grads(xs, ys, aux);
        add_grads(step.grads, sub_step.grads);
        bl.ce_sub = sub_step.ce;
        bl.l_dst = sub_step.dst;
      }
      bl.total = bl.ce_new + bl.ce_sub + (use_dst ? cfg.beta * bl.l_dst : 0.0);
      model.apply(step.grads, cfg.lr);
      log.batches.push_back(bl);
    }
    log.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const double nb = static_cast<double>(log.batches.size());
    for (const auto& b : log.batches) {
      log.loss_new += b.ce_new / nb;
      log.loss_sub += b.ce_sub / nb;
      log.l_dst += b.l_dst / nb;
      log.loss_total += b.total / nb;
    }
    log.val_ap = validation_ap(model, graph, table, view);
    result.epochs.push_back(std::move(log));

    if (result.epochs.back().val_ap > result.best_val_ap) {
      result.best_val_ap = result.epochs.back().val_ap;
      result.best_epoch = epoch;
      best = model.params();
    } else if (epoch - result.best_epoch >= cfg.patience) {
      break;
    }
  }
  model.mutable_params() = best;
  return result;
}

SelectionConfig apply_ablation(SelectionConfig sel, Ablation ablation) {
  sel.use_error = ablation != Ablation::kDistOnly;
  sel.use_distribution = ablation != Ablation::kErrOnly;
  return sel;
}

RunResult run_strategy(const TemporalGraph& graph, Strategy strategy, const SelectionConfig& sel,
                       const TrainConfig& train_in, std::uint64_t split_seed, int last_period) {
  TrainConfig train = train_in;
  train.strategy = strategy;
  train.validate();
  sel.validate();

  RunResult out;
  out.record.strategy = to_string(strategy);
  out.record.seed = train.seed;
  out.record.config = {{"train", train.to_json()}, {"sel", sel.to_json()}, {"split_seed", split_seed}};

  Backbone model;
  if (last_period < 0 || last_period > graph.num_periods())
    throw std::invalid_argument("run_strategy: last_period out of range");
  const int stop = last_period == 0 ? graph.num_periods() : last_period;
  for (int n = 1; n <= stop; ++n) {
    const PeriodView view = split_period(graph, n, split_seed);
    const InputTable table = build_inputs(graph, view, train.neighbors);
    if (n == 1)
      model = Backbone(static_cast<int>(table.inputs.rows()), train.hidden_dim,
                       derive_seed({train.seed, 0x30DE1}), train.head_init_scale, train.neighbors);
    model.grow_head(view.new_classes);

    PeriodMetrics pm;
    pm.period = n;
    std::optional<ReplayBuffer> buffer;
    KernelParams dst_kernel;
    const bool replay = strategy == Strategy::kEr || strategy == Strategy::kIcarl ||
                        strategy == Strategy::kLtf;
    if (replay && n >= 2 && !view.old_in(Split::kTrain).empty()) {
      const Snapshot& prev = out.snapshots.back();
      const std::uint64_t sel_seed = derive_seed({sel.seed, static_cast<std::uint64_t>(n)});
      const auto t0 = std::chrono::steady_clock::now();
      if (strategy == Strategy::kLtf) {
        SelectionConfig cfg = apply_ablation(sel, train.ablation);
        cfg.seed = sel_seed;
        SelectionReport rep = select(view, table, prev, cfg);
        dst_kernel = rep.kernel;
        buffer = rep.buffer;
        out.selections.push_back(std::move(rep));
      } else {
        buffer = baseline_select(strategy == Strategy::kEr ? BaselineKind::kRandom : BaselineKind::kHerding,
                                 view, table, prev, sel.m, sel_seed);
      }
      pm.selection_ms =
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      out.buffers.push_back(*buffer);
    }

    TrainResult tr = train_period(model, graph, view, table, buffer ? &*buffer : nullptr, train, dst_kernel);
    for (const auto& e : tr.epochs) pm.epoch_ms.push_back(e.wall_ms);
    pm.time_ms = time_per_epoch(pm.epoch_ms);
    out.epochs.insert(out.epochs.end(), tr.epochs.begin(), tr.epochs.end());
    out.snapshots.push_back(snapshot(model));

    pm.precision = precisions_by_period(model, graph, table, view, Split::kTest);
    pm.ap = ap(n, pm.precision);
    out.record.periods.push_back(std::move(pm));
  }
  return out;
}

}  // namespace ltf
