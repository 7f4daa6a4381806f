#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "ltf/selector.hpp"
#include "support.hpp"

using namespace ltf;

namespace {

std::vector<std::size_t> random_subset(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(k);
  return idx;
}

double mmd_to_part(const CandidatePool& part, const std::vector<std::size_t>& s, const KernelParams& k) {
  return mmd_sq(part.emb, test::columns(part.emb, s), k);
}

/// Independent forward pass and log loss for one input column.
double log_loss_literal(const Backbone& m, const Eigen::VectorXd& x, int head) {
  const Params& p = m.params();
  const Eigen::VectorXd h1 = (p.w1 * x + p.b1).cwiseMax(0.0);
  const Eigen::VectorXd z = (p.w2 * h1 + p.b2).cwiseMax(0.0);
  const Eigen::VectorXd l = p.head_w * z + p.head_b;
  double denom = 0.0;
  for (Eigen::Index i = 0; i < l.size(); ++i) denom += std::exp(l[i]);
  return -std::log(std::exp(l[head]) / denom);
}

NodeContext toy_context(std::mt19937_64& rng, ClassId label) {
  NodeContext ctx;
  ctx.label = label;
  ctx.feature = test::random_points(3, 1, rng).col(0);
  for (int i = 0; i < 4; ++i) ctx.neighbors.push_back({test::random_points(3, 1, rng).col(0), 0.5 * i});
  return ctx;
}

/// Untrained snapshot covering period 1 of a small synthetic graph.
struct SmallWorld {
  TemporalGraph graph = generate_synthetic(test::small_synth(4, 40));
  PeriodView view = split_period(graph, 2, 4);
  InputTable table = build_inputs(graph, view);
  Snapshot prev;
  SmallWorld() {
    Backbone m(static_cast<int>(table.inputs.rows()), 8, 2);
    m.grow_head(graph.period(1).classes);
    prev = Snapshot(m);
  }
};

}  // namespace

TEST_CASE("j_cls is the previous model's log loss on the true label") {
  std::mt19937_64 rng(1);
  Backbone m(7, 5, 3, 1.0);
  m.grow_head({4, 5, 6});
  const Snapshot snap(m);
  for (int i = 0; i < 10; ++i) {
    const NodeContext ctx = toy_context(rng, 4 + i % 3);
    const double lit = log_loss_literal(m, encode_context(ctx), i % 3);
    CHECK(std::abs(j_cls(snap, ctx) - lit) < 1e-12);
    CHECK(j_cls(snap, ctx) >= 0.0);
  }

  Backbone flat = m;
  flat.mutable_params().head_w.setZero();
  flat.mutable_params().head_b.setZero();
  CHECK(j_cls(Snapshot(flat), toy_context(rng, 5)) == doctest::Approx(std::log(3.0)).epsilon(1e-14));

  Backbone sure = flat;
  sure.mutable_params().head_b[1] = 1000.0;
  CHECK(j_cls(Snapshot(sure), toy_context(rng, 5)) == 0.0);

  CHECK_THROWS_AS(j_cls(snap, toy_context(rng, 99)), std::invalid_argument);
}

TEST_CASE("greedy with the whole budget returns the whole part") {
  std::mt19937_64 rng(2);
  const CandidatePool part = test::random_pool(7, 3, rng);
  for (auto mode : {ScoringMode::kWitness, ScoringMode::kExactMarginal}) {
    auto picks = greedy_select(part, 7, 1.0, true, KernelParams{}, mode).picks;
    std::sort(picks.begin(), picks.end());
    CHECK(picks == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
    CHECK(greedy_select(part, 0, 1.0, true, KernelParams{}, mode).picks.empty());
  }
  CHECK_THROWS_AS(greedy_select(part, 8, 1.0, true, KernelParams{}, ScoringMode::kWitness), std::invalid_argument);
  CHECK_THROWS_AS(greedy_select(CandidatePool{}, 1, 1.0, true, KernelParams{}, ScoringMode::kWitness),
                  std::invalid_argument);
}

TEST_CASE("first pick with alpha 0 is the kernel-herding centroid pick") {
  std::mt19937_64 rng(3);
  for (int inst = 0; inst < 20; ++inst) {
    CandidatePool part = test::random_pool(9, 2, rng);
    // a duplicated candidate far from everything else
    part.emb.col(7) = Eigen::Vector2d(25.0, 25.0);
    part.emb.col(8) = part.emb.col(7);
    const KernelParams k{0.5, false};
    std::size_t best = 0;
    double best_score = 0.0;
    for (std::size_t i = 0; i < part.size(); ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < part.size(); ++j)
        s += test::kernel_literal(part.emb.col(static_cast<Eigen::Index>(i)), part.emb.col(static_cast<Eigen::Index>(j)), k);
      const double score = -2.0 * s / static_cast<double>(part.size());
      if (i == 0 || score < best_score) {
        best = i;
        best_score = score;
      }
    }
    const auto trace = greedy_select(part, 3, 0.0, true, k, ScoringMode::kWitness);
    CHECK(trace.picks.front() == best);
    CHECK(trace.scores.front() == doctest::Approx(best_score).epsilon(1e-12));
  }
}

TEST_CASE("ties go to the smallest node id") {
  CandidatePool part;
  part.ids = {50, 30, 90, 40};
  part.labels = {0, 0, 0, 0};
  part.jcls = {1.0, 1.0, 1.0, 1.0};
  part.emb = Eigen::MatrixXd::Ones(2, 4);
  for (auto mode : {ScoringMode::kWitness, ScoringMode::kExactMarginal}) {
    const auto picks = greedy_select(part, 3, 1.0, true, KernelParams{}, mode).picks;
    CHECK(picks == std::vector<std::size_t>{1, 3, 0});
  }
}

TEST_CASE("greedy G_sub beats 90% of all subsets of a 10-node part") {
  std::mt19937_64 rng(5);
  int good = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const CandidatePool part = test::random_pool(10, 3, rng);
    const KernelParams k{0.5, false};
    const double g = selection_objective(part, greedy_select(part, 3, 1.0, true, k, ScoringMode::kWitness).picks, 1.0, k);
    int beaten = 0, total = 0;
    for (std::size_t a = 0; a < 10; ++a)
      for (std::size_t b = a + 1; b < 10; ++b)
        for (std::size_t c = b + 1; c < 10; ++c) {
          ++total;
          beaten += g <= selection_objective(part, {a, b, c}, 1.0, k) + 1e-12;
        }
    REQUIRE(total == 120);
    good += beaten >= 108;
  }
  CHECK(good == 50);
}

TEST_CASE("brute force enumerates every subset") {
  std::mt19937_64 rng(6);
  const CandidatePool part = test::random_pool(6, 2, rng);
  const KernelParams k{0.5, false};
  const auto bf = brute_force_select(part, 2, 1.0, k);
  CHECK(bf.evaluated == 15);
  const auto greedy = greedy_select(part, 2, 1.0, true, k, ScoringMode::kWitness);
  CHECK(bf.objective <= selection_objective(part, greedy.picks, 1.0, k));

  const CandidatePool five = test::random_pool(5, 2, rng);
  const auto all = brute_force_select(five, 5, 0.7, k);
  const double mean = std::accumulate(five.jcls.begin(), five.jcls.end(), 0.0) / 5;
  CHECK(all.objective == doctest::Approx(0.7 * mean).epsilon(1e-12));
  CHECK(all.subset == std::vector<std::size_t>{0, 1, 2, 3, 4});

  CHECK_THROWS_AS(brute_force_select(test::random_pool(17, 2, rng), 2, 1.0, k), std::invalid_argument);
  CHECK_THROWS_AS(brute_force_select(part, 6, 1.0, k), std::invalid_argument);
  CHECK_THROWS_AS(brute_force_select(part, 0, 1.0, k), std::invalid_argument);
}

TEST_CASE("witness greedy stays within 1.25x of the exhaustive optimum") {
  std::mt19937_64 rng(7);
  int within = 0;
  for (int inst = 0; inst < 50; ++inst) {
    const CandidatePool part = test::random_pool(12, 3, rng);
    const KernelParams k{0.5, false};
    const double opt = brute_force_select(part, 4, 1.0, k).objective;
    const double g = selection_objective(part, greedy_select(part, 4, 1.0, true, k, ScoringMode::kWitness).picks, 1.0, k);
    CHECK(g >= opt - 1e-12);
    within += g <= 1.25 * opt;
  }
  CHECK(within >= 45);
}

TEST_CASE("exact-marginal picks minimise the true objective at every step") {
  std::mt19937_64 rng(8);
  for (int inst = 0; inst < 30; ++inst) {
    const CandidatePool part = test::random_pool(12, 3, rng);
    const KernelParams k{0.5, inst % 2 == 0};
    const double alpha = inst % 3 == 0 ? 0.0 : 1.0;
    const auto trace = greedy_select(part, 5, alpha, true, k, ScoringMode::kExactMarginal);
    std::vector<std::size_t> chosen;
    for (std::size_t step = 0; step < trace.picks.size(); ++step) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t v = 0; v < part.size(); ++v) {
        if (std::find(chosen.begin(), chosen.end(), v) != chosen.end()) continue;
        auto grown = chosen;
        grown.push_back(v);
        best = std::min(best, selection_objective(part, grown, alpha, k));
      }
      chosen.push_back(trace.picks[step]);
      const double got = selection_objective(part, chosen, alpha, k);
      CHECK(got == doctest::Approx(best).epsilon(1e-10));
      CHECK(trace.scores[step] == doctest::Approx(got).epsilon(1e-10));
    }
  }
}

TEST_CASE("greedy objective beats the median random subset") {
  std::mt19937_64 rng(9);
  int wins = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const CandidatePool part = test::random_pool(50, 4, rng);
    const KernelParams k = median_heuristic_gamma(part.emb);
    const double g = selection_objective(part, greedy_select(part, 8, 1.0, true, k, ScoringMode::kWitness).picks, 1.0, k);
    std::vector<double> rand;
    for (int r = 0; r < 1000; ++r) rand.push_back(selection_objective(part, random_subset(50, 8, rng), 1.0, k));
    std::nth_element(rand.begin(), rand.begin() + 500, rand.end());
    wins += g <= rand[500];
  }
  CHECK(wins >= 95);
}

TEST_CASE("G_sim beats random subsets in distribution distance") {
  std::mt19937_64 rng(10);
  SelectionConfig cfg;
  for (int inst = 0; inst < 20; ++inst) {
    const CandidatePool part = test::random_pool(12, 3, rng);
    const KernelParams k = median_heuristic_gamma(part.emb);
    const double sim = mmd_to_part(part, greedy_select_sim(part, 4, cfg, k).picks, k);
    int beaten = 0;
    for (int r = 0; r < 1000; ++r) beaten += sim <= mmd_to_part(part, random_subset(12, 4, rng), k);
    CHECK(beaten >= 950);
  }

  CandidatePool twins;
  twins.ids = {1, 2};
  twins.labels = {0, 0};
  twins.jcls = {0.0, 5.0};
  twins.emb = Eigen::MatrixXd::Ones(3, 2);
  const auto one = greedy_select_sim(twins, 1, cfg, KernelParams{}).picks;
  CHECK(one.size() == 1);
  CHECK(mmd_to_part(twins, one, KernelParams{}) == doctest::Approx(0.0).scale(1.0));
  CHECK(greedy_select_sim(twins, 0, cfg, KernelParams{}).picks.empty());
}

TEST_CASE("ablation switches change the G_sub score") {
  std::mt19937_64 rng(11);
  const CandidatePool part = test::random_pool(15, 3, rng);
  const KernelParams k{0.5, false};
  SelectionConfig err_only;
  err_only.use_distribution = false;
  // error only: the lowest j_cls scores in order
  std::vector<std::size_t> order(15);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return part.jcls[a] < part.jcls[b]; });
  order.resize(4);
  CHECK(greedy_select_sub(part, 4, err_only, k).picks == order);

  SelectionConfig dist_only;
  dist_only.use_error = false;
  CHECK(greedy_select_sub(part, 4, dist_only, k).picks == greedy_select_sim(part, 4, dist_only, k).picks);
}

TEST_CASE("marginal gains shrink along the greedy sequence when the kernel bound holds") {
  CandidatePool part;
  Eigen::MatrixXd pts(2, 5);
  pts << 0, 10, 20, 0, 10, 0, 0, 0, 10, 10;
  part.emb = pts;
  for (int i = 0; i < 5; ++i) {
    part.ids.push_back(i);
    part.labels.push_back(0);
    part.jcls.push_back(0.1 * i);
  }
  const KernelParams k{1.0, false};
  REQUIRE(kernel_bound_check(part.emb, k, 5).satisfied);
  for (auto mode : {ScoringMode::kWitness, ScoringMode::kExactMarginal}) {
    const auto picks = greedy_select(part, 5, 0.0, true, k, mode).picks;
    std::vector<double> f;
    for (std::size_t s = 1; s <= picks.size(); ++s)
      f.push_back(selection_objective(part, {picks.begin(), picks.begin() + static_cast<std::ptrdiff_t>(s)}, 0.0, k));
    for (std::size_t i = 2; i < f.size(); ++i) CHECK(f[i - 1] - f[i] <= f[i - 2] - f[i - 1] + 1e-12);
  }
}

TEST_CASE("part quotas split the budget evenly") {
  CHECK(part_quotas(10, {20, 20, 20}) == std::vector<int>{4, 3, 3});
  CHECK(part_quotas(9, {20, 20, 20}) == std::vector<int>{3, 3, 3});
  CHECK(part_quotas(2, {20, 20, 20}) == std::vector<int>{1, 1, 0});
  const auto capped = part_quotas(10, {2, 5, 5});
  CHECK(capped == std::vector<int>{2, 5, 3});
  CHECK(part_quotas(0, {3}) == std::vector<int>{0});
}

TEST_CASE("select fills both budgets from old-class training nodes") {
  SmallWorld w;
  SelectionConfig cfg;
  cfg.m = 10;
  cfg.m_prime = 7;
  cfg.partition_size = 20;
  cfg.seed = 3;
  const auto rep = select(w.view, w.table, w.prev, cfg);
  const auto old_train = w.view.old_in(Split::kTrain);
  const std::set<NodeId> allowed(old_train.begin(), old_train.end());
  CHECK(rep.buffer.sub.size() == 10);
  CHECK(rep.buffer.sim.size() == 7);
  CHECK(rep.parts == static_cast<int>((old_train.size() + 19) / 20));
  CHECK(rep.part_ms.size() == static_cast<std::size_t>(rep.parts));
  std::set<NodeId> seen;
  for (const auto& e : rep.buffer.sub) {
    CHECK(allowed.count(e.id));
    CHECK(e.label == w.graph.node(e.id).class_id);
    seen.insert(e.id);
  }
  CHECK(seen.size() == 10);
  for (NodeId id : rep.buffer.sim) CHECK(allowed.count(id));
  CHECK(rep.warnings.empty());

  const auto again = select(w.view, w.table, w.prev, cfg);
  CHECK(again.buffer == rep.buffer);

  cfg.m = 1000;
  cfg.m_prime = 2000;
  cfg.partition_size = 5000;
  const auto clamped = select(w.view, w.table, w.prev, cfg);
  CHECK(clamped.buffer.sub.size() == old_train.size());
  CHECK(clamped.buffer.sim.size() == old_train.size());
  CHECK(clamped.warnings.size() == 2);
}

TEST_CASE("a single part reproduces the single greedy call") {
  SmallWorld w;
  SelectionConfig cfg;
  cfg.m = 6;
  cfg.m_prime = 6;
  cfg.partition_size = 1000;
  cfg.gamma = 0.3;
  const auto rep = select(w.view, w.table, w.prev, cfg);
  REQUIRE(rep.parts == 1);
  const CandidatePool pool = score_candidates(w.prev, w.table, w.view.old_in(Split::kTrain));
  const auto direct = greedy_select_sub(pool, 6, cfg, KernelParams{0.3, false});
  std::vector<NodeId> ids;
  for (auto i : direct.picks) ids.push_back(pool.ids[i]);
  CHECK(rep.buffer.sub_ids() == ids);
  CHECK(rep.kernel.gamma == 0.3);
}

TEST_CASE("per-class selection splits the budgets evenly over old classes") {
  SmallWorld w;
  SelectionConfig cfg;
  cfg.m = 11;
  cfg.m_prime = 7;
  cfg.partition_size = 15;
  cfg.per_class = true;
  const auto rep = select(w.view, w.table, w.prev, cfg);
  std::map<ClassId, std::size_t> class_size;
  for (NodeId id : w.view.old_in(Split::kTrain)) ++class_size[w.graph.node(id).class_id];
  REQUIRE(class_size.size() == 2);

  std::map<ClassId, int> sub_per_class, sim_per_class;
  for (const auto& e : rep.buffer.sub) ++sub_per_class[e.label];
  for (NodeId id : rep.buffer.sim) ++sim_per_class[w.graph.node(id).class_id];
  // remainder goes to the first class in id order
  const ClassId first = class_size.begin()->first, second = class_size.rbegin()->first;
  CHECK(sub_per_class[first] == 6);
  CHECK(sub_per_class[second] == 5);
  CHECK(sim_per_class[first] == 4);
  CHECK(sim_per_class[second] == 3);

  // parts never mix classes: W is the sum of per-class part counts
  int parts = 0;
  for (const auto& [c, n] : class_size) parts += static_cast<int>((n + 14) / 15);
  CHECK(rep.parts == parts);
  CHECK(select(w.view, w.table, w.prev, cfg).buffer == rep.buffer);
  CHECK(SelectionConfig::from_json(cfg.to_json()).per_class);
}

TEST_CASE("baselines: ER and iCaRL herding") {
  SmallWorld w;
  const auto old_train = w.view.old_in(Split::kTrain);
  const auto er = baseline_select(BaselineKind::kRandom, w.view, w.table, w.prev, 10, 1);
  CHECK(er.sub.size() == 10);
  CHECK(er.sim.empty());
  std::map<ClassId, int> per_class;
  for (const auto& e : er.sub) ++per_class[e.label];
  for (const auto& [c, n] : per_class) CHECK(n == 5);
  CHECK(baseline_select(BaselineKind::kRandom, w.view, w.table, w.prev, 10, 1) == er);
  CHECK_FALSE(baseline_select(BaselineKind::kRandom, w.view, w.table, w.prev, 10, 2) == er);

  const auto everything = baseline_select(BaselineKind::kHerding, w.view, w.table, w.prev, 100000, 1);
  CHECK(everything.sub.size() == old_train.size());

  const auto herd = baseline_select(BaselineKind::kHerding, w.view, w.table, w.prev, 8, 1);
  CHECK(herd.sub.size() == 8);
}

TEST_CASE("herding first pick is the point closest to the mean") {
  std::mt19937_64 rng(12);
  for (int inst = 0; inst < 20; ++inst) {
    const Eigen::MatrixXd emb = test::random_points(3, 20, rng);
    const Eigen::VectorXd mean = emb.rowwise().mean();
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < 20; ++i)
      if ((emb.col(i) - mean).norm() < (emb.col(best) - mean).norm()) best = i;
    const auto order = herding_order(emb, 5);
    CHECK(order.size() == 5);
    CHECK(order.front() == static_cast<std::size_t>(best));
  }
  const auto same = herding_order(Eigen::MatrixXd::Ones(2, 6), 3);
  CHECK(same.size() == 3);
  CHECK(std::set<std::size_t>(same.begin(), same.end()).size() == 3);
}

TEST_CASE("replay buffer and selection config JSON") {
  ReplayBuffer b;
  b.period = 3;
  b.sub = {{4, 1, 0.25}, {9, 2, 1.5}};
  b.sim = {4, 7};
  const ReplayBuffer back = ReplayBuffer::from_json(b.to_json());
  CHECK(back == b);
  CHECK(back.sub_ids() == std::vector<NodeId>{4, 9});

  SelectionConfig c;
  c.alpha = 0.3;
  c.partitioner = Partitioner::kKMeans;
  c.scoring = ScoringMode::kExactMarginal;
  c.gamma = 2.0;
  CHECK(SelectionConfig::from_json(c.to_json()).to_json() == c.to_json());
  CHECK_THROWS_AS(SelectionConfig::from_json({{"alpah", 1.0}}), std::invalid_argument);
  CHECK_THROWS_AS(SelectionConfig::from_json({{"partitioner", "spectral"}}), std::invalid_argument);

  SelectionConfig bad;
  bad.partition_size = bad.m;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = SelectionConfig{};
  bad.alpha = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = SelectionConfig{};
  bad.m = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
