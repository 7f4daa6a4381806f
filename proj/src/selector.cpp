#include "ltf/selector.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ltf/util.hpp"

namespace ltf {

const char* to_string(Partitioner p) {
  switch (p) {
    case Partitioner::kRandom: return "random";
    case Partitioner::kKMeans: return "kmeans";
    case Partitioner::kHierarchical: return "hierarchical";
  }
  return "?";
}

const char* to_string(ScoringMode m) {
  return m == ScoringMode::kWitness ? "witness" : "exact-marginal";
}

Partitioner parse_partitioner(const std::string& s) {
  if (s == "random") return Partitioner::kRandom;
  if (s == "kmeans") return Partitioner::kKMeans;
  if (s == "hierarchical") return Partitioner::kHierarchical;
  throw std::invalid_argument("unknown partitioner '" + s + "'");
}

ScoringMode parse_scoring_mode(const std::string& s) {
  if (s == "witness") return ScoringMode::kWitness;
  if (s == "exact-marginal" || s == "exact") return ScoringMode::kExactMarginal;
  throw std::invalid_argument("unknown scoring mode '" + s + "'");
}

void SelectionConfig::validate() const {
  if (!(alpha >= 0)) throw std::invalid_argument("sel.alpha must be >= 0");
  if (m < 1) throw std::invalid_argument("sel.m must be >= 1");
  if (m_prime < 0) throw std::invalid_argument("sel.m_prime must be >= 0");
  if (partition_size < 1) throw std::invalid_argument("sel.partition_size must be >= 1");
  if (partition_size <= m) throw std::invalid_argument("sel.partition_size must exceed sel.m");
  if (gamma && !(*gamma > 0)) throw std::invalid_argument("sel.gamma must be > 0");
}

nlohmann::json SelectionConfig::to_json() const {
  nlohmann::json j = {{"alpha", alpha},
                      {"m", m},
                      {"m_prime", m_prime},
                      {"partition_size", partition_size},
                      {"partitioner", to_string(partitioner)},
                      {"scoring_mode", to_string(scoring)},
                      {"seed", seed},
                      {"use_error", use_error},
                      {"use_distribution", use_distribution},
                      {"squared_distance", squared_distance},
                      {"per_class", per_class}};
  j["gamma"] = gamma ? nlohmann::json(*gamma) : nlohmann::json(nullptr);
  return j;
}

SelectionConfig SelectionConfig::from_json(const nlohmann::json& j) { return from_json(j, SelectionConfig{}); }

SelectionConfig SelectionConfig::from_json(const nlohmann::json& j, const SelectionConfig& d) {
  if (!j.is_object()) throw std::invalid_argument("sel: expected an object");
  const nlohmann::json known = d.to_json();
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw std::invalid_argument("sel." + key + ": unknown field");
  SelectionConfig c = d;
  c.alpha = j.value("alpha", d.alpha);
  c.m = j.value("m", d.m);
  c.m_prime = j.value("m_prime", d.m_prime);
  c.partition_size = j.value("partition_size", d.partition_size);
  if (j.contains("partitioner")) c.partitioner = parse_partitioner(j.at("partitioner").get<std::string>());
  if (j.contains("scoring_mode")) c.scoring = parse_scoring_mode(j.at("scoring_mode").get<std::string>());
  c.seed = j.value("seed", d.seed);
  c.use_error = j.value("use_error", d.use_error);
  c.use_distribution = j.value("use_distribution", d.use_distribution);
  c.squared_distance = j.value("squared_distance", d.squared_distance);
  c.per_class = j.value("per_class", d.per_class);
  if (j.contains("gamma")) {
    if (j.at("gamma").is_null()) c.gamma.reset();
    else c.gamma = j.at("gamma").get<double>();
  }
  return c;
}

// ---------------------------------------------------------------------------
// Candidates

CandidatePool CandidatePool::subset(const std::vector<std::size_t>& idx) const {
  CandidatePool out;
  out.emb.resize(emb.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.ids.push_back(ids[idx[i]]);
    out.labels.push_back(labels[idx[i]]);
    out.jcls.push_back(jcls[idx[i]]);
    out.emb.col(static_cast<Eigen::Index>(i)) = emb.col(static_cast<Eigen::Index>(idx[i]));
  }
  return out;
}

double j_cls(const Snapshot& prev, const NodeContext& v) {
  auto idx = prev.model().class_index(v.label);
  if (!idx) throw std::invalid_argument("j_cls: class " + std::to_string(v.label) +
                                        " unknown to the snapshot head");
  Eigen::MatrixXd x = encode_context(v, prev.model().neighbors());
  return prev.model().cross_entropy(x, {*idx})[0];
}

CandidatePool score_candidates(const Snapshot& prev, const InputTable& table,
                               const std::vector<NodeId>& nodes) {
  CandidatePool pool;
  pool.ids = nodes;
  pool.labels = table.labels_of(nodes);
  const Eigen::MatrixXd x = table.gather(nodes);
  pool.emb = prev.embed(x);
  std::vector<int> heads;
  heads.reserve(nodes.size());
  for (ClassId c : pool.labels) {
    auto idx = prev.model().class_index(c);
    if (!idx) throw std::invalid_argument("j_cls: class " + std::to_string(c) +
                                          " unknown to the snapshot head");
    heads.push_back(*idx);
  }
  const Eigen::VectorXd ce = prev.model().cross_entropy(x, heads);
  pool.jcls.assign(ce.data(), ce.data() + ce.size());
  return pool;
}

// ---------------------------------------------------------------------------
// Greedy

GreedyTrace greedy_select(const CandidatePool& part, int budget, double alpha,
                          bool use_distribution, const KernelParams& kernel, ScoringMode mode) {
  const std::size_t n = part.size();
  if (n == 0) throw std::invalid_argument("greedy_select: empty partition");
  if (budget < 0 || static_cast<std::size_t>(budget) > n)
    throw std::invalid_argument("greedy_select: budget exceeds partition size");
  GreedyTrace trace;
  if (budget == 0) return trace;

  Eigen::MatrixXd k;
  std::vector<double> old_sum(n, 0.0), sub_sum(n, 0.0);
  double part_part = 0.0;
  if (use_distribution) {
    k = gram(part.emb, part.emb, kernel);
    for (std::size_t i = 0; i < n; ++i) old_sum[i] = k.col(static_cast<Eigen::Index>(i)).sum();
    part_part = k.sum() / (static_cast<double>(n) * static_cast<double>(n));
  }
  const double dn = static_cast<double>(n);

  std::vector<char> taken(n, 0);
  double sub_sub = 0.0;  // sum over S x S
  double cross = 0.0;    // sum over S x part
  double err_sum = 0.0;
  std::size_t s = 0;
  for (int step = 0; step < budget; ++step) {
    std::size_t best = n;
    double best_score = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      double score;
      if (mode == ScoringMode::kWitness) {
        score = alpha * part.jcls[i];
        if (use_distribution)
          score += (s > 0 ? 2.0 * sub_sum[i] / static_cast<double>(s) : 0.0) - 2.0 * old_sum[i] / dn;
      } else {
        const double s1 = static_cast<double>(s + 1);
        score = alpha * (err_sum + part.jcls[i]) / s1;
        if (use_distribution) {
          const auto ii = static_cast<Eigen::Index>(i);
          score += part_part + (sub_sub + 2.0 * sub_sum[i] + k(ii, ii)) / (s1 * s1) -
                   2.0 * (cross + old_sum[i]) / (dn * s1);
        }
      }
      if (best == n || score < best_score || (score == best_score && part.ids[i] < part.ids[best])) {
        best = i;
        best_score = score;
      }
    }
    taken[best] = 1;
    trace.picks.push_back(best);
    trace.scores.push_back(best_score);
    err_sum += part.jcls[best];
    if (use_distribution) {
      const auto bb = static_cast<Eigen::Index>(best);
      sub_sub += 2.0 * sub_sum[best] + k(bb, bb);
      cross += old_sum[best];
      for (std::size_t i = 0; i < n; ++i) sub_sum[i] += k(static_cast<Eigen::Index>(i), bb);
    }
    ++s;
  }
  return trace;
}

GreedyTrace greedy_select_sub(const CandidatePool& part, int budget, const SelectionConfig& cfg,
                              const KernelParams& kernel) {
  const double alpha = cfg.use_error ? cfg.alpha : 0.0;
  return greedy_select(part, budget, alpha, cfg.use_distribution, kernel, cfg.scoring);
}

GreedyTrace greedy_select_sim(const CandidatePool& part, int budget, const SelectionConfig& cfg,
                              const KernelParams& kernel) {
  return greedy_select(part, budget, 0.0, true, kernel, cfg.scoring);
}

double selection_objective(const CandidatePool& part, const std::vector<std::size_t>& subset,
                           double alpha, const KernelParams& kernel) {
  if (subset.empty()) throw std::invalid_argument("selection_objective: empty subset");
  Eigen::MatrixXd chosen(part.emb.rows(), static_cast<Eigen::Index>(subset.size()));
  double err = 0.0;
  for (std::size_t i = 0; i < subset.size(); ++i) {
    chosen.col(static_cast<Eigen::Index>(i)) = part.emb.col(static_cast<Eigen::Index>(subset[i]));
    err += part.jcls[subset[i]];
  }
  return alpha * err / static_cast<double>(subset.size()) + mmd_sq(part.emb, chosen, kernel);
}

BruteForceResult brute_force_select(const CandidatePool& part, int budget, double alpha,
                                    const KernelParams& kernel) {
  const std::size_t n = part.size();
  if (n == 0) throw std::invalid_argument("brute_force_select: empty partition");
  if (n > 16 || budget > 5)
    throw std::invalid_argument("brute_force_select: instance too large to enumerate");
  if (budget < 1 || static_cast<std::size_t>(budget) > n)
    throw std::invalid_argument("brute_force_select: budget out of range");
  BruteForceResult best;
  std::vector<std::size_t> cur;
  std::function<void(std::size_t)> rec = [&](std::size_t start) {
    if (cur.size() == static_cast<std::size_t>(budget)) {
      const double obj = selection_objective(part, cur, alpha, kernel);
      ++best.evaluated;
      if (best.subset.empty() || obj < best.objective) {
        best.objective = obj;
        best.subset = cur;
      }
      return;
    }
    for (std::size_t i = start; i < n; ++i) {
      cur.push_back(i);
      rec(i + 1);
      cur.pop_back();
    }
  };
  rec(0);
  return best;
}

std::vector<int> part_quotas(int total, const std::vector<std::size_t>& capacities) {
  const int w = static_cast<int>(capacities.size());
  std::vector<int> q(capacities.size(), 0);
  if (w == 0 || total <= 0) return q;
  for (int i = 0; i < w; ++i) q[static_cast<std::size_t>(i)] = total / w + (i < total % w ? 1 : 0);
  int excess = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    const int cap = static_cast<int>(capacities[i]);
    if (q[i] > cap) {
      excess += q[i] - cap;
      q[i] = cap;
    }
  }
  for (std::size_t i = 0; i < q.size() && excess > 0; ++i) {
    const int room = static_cast<int>(capacities[i]) - q[i];
    const int add = std::min(room, excess);
    q[i] += add;
    excess -= add;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Buffers

std::vector<NodeId> ReplayBuffer::sub_ids() const {
  std::vector<NodeId> out;
  out.reserve(sub.size());
  for (const auto& e : sub) out.push_back(e.id);
  return out;
}

nlohmann::json ReplayBuffer::to_json() const {
  nlohmann::json s = nlohmann::json::array();
  for (const auto& e : sub) s.push_back({{"id", e.id}, {"label", e.label}, {"j_cls", e.jcls}});
  return {{"period", period}, {"sub", s}, {"sim", sim}, {"config", config}};
}

ReplayBuffer ReplayBuffer::from_json(const nlohmann::json& j) {
  ReplayBuffer b;
  b.period = j.at("period").get<int>();
  for (const auto& e : j.at("sub"))
    b.sub.push_back({e.at("id").get<NodeId>(), e.at("label").get<ClassId>(), e.at("j_cls").get<double>()});
  b.sim = j.at("sim").get<std::vector<NodeId>>();
  b.config = j.value("config", nlohmann::json::object());
  return b;
}

SelectionReport select(const PeriodView& view, const InputTable& table, const Snapshot& prev,
                       const SelectionConfig& cfg) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<NodeId> old_train = view.old_in(Split::kTrain);
  if (old_train.empty())
    throw std::invalid_argument("select: period " + std::to_string(view.period_index) +
                                " has no old-class training nodes");
  const CandidatePool pool = score_candidates(prev, table, old_train);

  SelectionReport rep;
  rep.kernel = cfg.gamma ? KernelParams{*cfg.gamma, cfg.squared_distance}
                         : median_heuristic_gamma(pool.emb, cfg.seed, cfg.squared_distance);
  const int available = static_cast<int>(pool.size());
  int m = cfg.m, m_prime = cfg.m_prime;
  if (m > available) {
    rep.warnings.push_back("m=" + std::to_string(m) + " exceeds " + std::to_string(available) +
                           " old-class training nodes; clamped");
    m = available;
  }
  if (m_prime > available) {
    rep.warnings.push_back("m_prime=" + std::to_string(m_prime) + " exceeds " +
                           std::to_string(available) + " old-class training nodes; clamped");
    m_prime = available;
  }

  std::vector<std::vector<std::size_t>> parts;
  std::vector<int> sub_q, sim_q;
  auto add_parts = [&](const CandidatePool& group, const std::vector<std::size_t>& to_pool, int sub_total,
                       int sim_total) {
    std::vector<std::size_t> sizes;
    for (auto& p : partition(group, cfg.partition_size, cfg.partitioner, cfg.seed)) {
      for (auto& i : p) i = to_pool[i];
      sizes.push_back(p.size());
      parts.push_back(std::move(p));
    }
    const auto sq = part_quotas(sub_total, sizes), mq = part_quotas(sim_total, sizes);
    sub_q.insert(sub_q.end(), sq.begin(), sq.end());
    sim_q.insert(sim_q.end(), mq.begin(), mq.end());
  };
  if (cfg.per_class) {
    std::map<ClassId, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool.labels[i]].push_back(i);
    std::vector<std::size_t> class_sizes;
    for (const auto& [c, idx] : by_class) class_sizes.push_back(idx.size());
    const auto cq = part_quotas(m, class_sizes), cq_sim = part_quotas(m_prime, class_sizes);
    std::size_t k = 0;
    for (const auto& [c, idx] : by_class) {
      add_parts(pool.subset(idx), idx, cq[k], cq_sim[k]);
      ++k;
    }
  } else {
    std::vector<std::size_t> all(pool.size());
    std::iota(all.begin(), all.end(), 0);
    add_parts(pool, all, m, m_prime);
  }
  rep.parts = static_cast<int>(parts.size());
  rep.buffer.period = view.period_index;
  rep.buffer.config = cfg.to_json();
  rep.buffer.config["gamma_used"] = rep.kernel.gamma;

  double err = 0.0, mmd_acc = 0.0;
  int mmd_parts = 0;
  for (std::size_t w = 0; w < parts.size(); ++w) {
    const auto pt = std::chrono::steady_clock::now();
    const CandidatePool part = pool.subset(parts[w]);
    const GreedyTrace sub = greedy_select_sub(part, sub_q[w], cfg, rep.kernel);
    const GreedyTrace sim = greedy_select_sim(part, sim_q[w], cfg, rep.kernel);
    rep.part_ms.push_back(
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - pt).count());
    for (std::size_t i : sub.picks) {
      rep.buffer.sub.push_back({part.ids[i], part.labels[i], part.jcls[i]});
      err += part.jcls[i];
    }
    for (std::size_t i : sim.picks) rep.buffer.sim.push_back(part.ids[i]);
    if (!sub.picks.empty()) {
      mmd_acc += selection_objective(part, sub.picks, 0.0, rep.kernel);
      ++mmd_parts;
    }
  }
  rep.error_term = rep.buffer.sub.empty() ? 0.0 : err / static_cast<double>(rep.buffer.sub.size());
  rep.mmd_term = mmd_parts ? mmd_acc / mmd_parts : 0.0;
  rep.total_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Baselines

std::vector<std::size_t> herding_order(const Eigen::MatrixXd& emb, int count) {
  const Eigen::Index n = emb.cols();
  std::vector<std::size_t> out;
  if (n == 0 || count <= 0) return out;
  const Eigen::VectorXd mean = emb.rowwise().mean();
  Eigen::VectorXd running = Eigen::VectorXd::Zero(emb.rows());
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  for (int k = 1; k <= std::min<Eigen::Index>(count, n); ++k) {
    Eigen::Index best = -1;
    double best_d = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      const double d = (mean - (running + emb.col(i)) / k).squaredNorm();
      if (best < 0 || d < best_d) {
        best = i;
        best_d = d;
      }
    }
    taken[static_cast<std::size_t>(best)] = 1;
    running += emb.col(best);
    out.push_back(static_cast<std::size_t>(best));
  }
  return out;
}

ReplayBuffer baseline_select(BaselineKind kind, const PeriodView& view, const InputTable& table,
                             const Snapshot& prev, int m, std::uint64_t seed) {
  const std::vector<NodeId> old_train = view.old_in(Split::kTrain);
  if (old_train.empty())
    throw std::invalid_argument("baseline_select: no old-class training nodes");
  const CandidatePool pool = score_candidates(prev, table, old_train);

  std::map<ClassId, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < pool.size(); ++i) by_class[pool.labels[i]].push_back(i);
  std::vector<std::size_t> sizes;
  for (const auto& [c, idx] : by_class) sizes.push_back(idx.size());
  const auto quotas = part_quotas(std::min<int>(m, static_cast<int>(pool.size())), sizes);

  ReplayBuffer buf;
  buf.period = view.period_index;
  buf.config = {{"baseline", kind == BaselineKind::kRandom ? "random" : "herding"},
                {"m", m},
                {"seed", seed}};
  std::size_t c = 0;
  for (auto& [cls, idx] : by_class) {
    const int q = quotas[c++];
    std::vector<std::size_t> chosen;
    if (kind == BaselineKind::kRandom) {
      std::mt19937_64 rng(derive_seed({seed, 0xE2, static_cast<std::uint64_t>(cls)}));
      std::shuffle(idx.begin(), idx.end(), rng);
      chosen.assign(idx.begin(), idx.begin() + q);
    } else {
      const CandidatePool cls_pool = pool.subset(idx);
      for (std::size_t j : herding_order(cls_pool.emb, q)) chosen.push_back(idx[j]);
    }
    for (std::size_t i : chosen) buf.sub.push_back({pool.ids[i], pool.labels[i], pool.jcls[i]});
  }
  return buf;
}

}  // namespace ltf
