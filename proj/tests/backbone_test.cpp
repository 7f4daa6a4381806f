#include <doctest.h>

#include <random>

#include "ltf/backbone.hpp"
#include "support.hpp"

using namespace ltf;

namespace {

Backbone toy_model(std::uint64_t seed, int input_dim = 5, int hidden = 6, int classes = 4) {
  Backbone m(input_dim, hidden, seed, 0.5);
  std::vector<ClassId> cls;
  for (int c = 0; c < classes; ++c) cls.push_back(10 + c);
  m.grow_head(cls);
  // nonzero biases keep every unit off the rectifier kink, where finite
  // differences and the subgradient disagree
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& b : {&m.mutable_params().b1, &m.mutable_params().b2})
    for (Eigen::Index i = 0; i < b->size(); ++i) (*b)[i] = n(rng);
  return m;
}

/// max over all parameters of |analytic - fd| / max(|analytic|, |fd|, 1e-6)
double max_rel_error(const Backbone& model, const Eigen::MatrixXd& x, const std::vector<int>& y,
                     const std::optional<DistributionTerm>& aux) {
  const double eps = 1e-5;
  const LossResult base = model.loss_and_grads(x, y, aux);
  std::vector<double> analytic;
  base.grads.for_each([&](const char*, auto g) {
    for (Eigen::Index i = 0; i < g.size(); ++i) analytic.push_back(g[i]);
  });
  Backbone probe = model;
  double worst = 0.0;
  std::size_t flat = 0;
  probe.mutable_params().for_each([&](const char*, auto w) {
    for (Eigen::Index i = 0; i < w.size(); ++i, ++flat) {
      const double keep = w[i];
      w[i] = keep + eps;
      const double hi = probe.loss_and_grads(x, y, aux).loss;
      w[i] = keep - eps;
      const double lo = probe.loss_and_grads(x, y, aux).loss;
      w[i] = keep;
      const double fd = (hi - lo) / (2 * eps);
      const double a = analytic[flat];
      worst = std::max(worst, std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-6}));
    }
  });
  return worst;
}

}  // namespace

TEST_CASE("encode_context averages over K slots with zero padding") {
  NodeContext ctx;
  ctx.feature = Eigen::Vector2d(1.0, -1.0);
  ctx.neighbors.push_back({Eigen::Vector2d(2.0, 4.0), 0.0});
  ctx.neighbors.push_back({Eigen::Vector2d(6.0, 0.0), std::exp(1.0) - 1.0});
  const Eigen::VectorXd enc = encode_context(ctx, 4);
  REQUIRE(enc.size() == 5);
  CHECK(enc[0] == 1.0);
  CHECK(enc[1] == -1.0);
  CHECK(enc[2] == doctest::Approx(8.0 / 4));
  CHECK(enc[3] == doctest::Approx(4.0 / 4));
  CHECK(enc[4] == doctest::Approx(1.0 / 4));

  NodeContext lonely;
  lonely.feature = Eigen::Vector2d(3.0, 3.0);
  const Eigen::VectorXd e2 = encode_context(lonely, 4);
  CHECK(e2.tail(3).isZero());

  CHECK_THROWS_AS(encode_context(ctx, 1), std::invalid_argument);
}

TEST_CASE("make_context takes the K most recent events up to the evaluation time") {
  std::vector<NodeRecord> nodes;
  for (int i = 1; i <= 5; ++i) nodes.push_back({i, 0, 1, Eigen::VectorXd::Constant(1, i)});
  std::vector<Event> events = {{1, 2, 1.0}, {3, 1, 2.0}, {1, 4, 3.0}, {5, 1, 9.0}};
  const TemporalGraph g(nodes, events, {{1, 0, 10, {0}}});
  const NodeContext ctx = make_context(g, 1, 5.0, 2);
  REQUIRE(ctx.neighbors.size() == 2);
  CHECK(ctx.neighbors[0].feature[0] == 4.0);
  CHECK(ctx.neighbors[0].dt == 2.0);
  CHECK(ctx.neighbors[1].feature[0] == 3.0);
  CHECK(ctx.neighbors[1].dt == 3.0);
  CHECK(make_context(g, 1, 0.5, 2).neighbors.empty());
  CHECK(last_activity(g, 1, 1) == 9.0);
  CHECK(last_activity(g, 4, 1) == 3.0);
}

TEST_CASE("backbone gradients match central differences") {
  std::mt19937_64 rng(31);
  double worst = 0.0, worst_dst = 0.0;
  for (int inst = 0; inst < 20; ++inst) {
    const Backbone model = toy_model(100 + inst);
    const Eigen::MatrixXd x = test::random_points(5, 7, rng);
    std::vector<int> y;
    for (int i = 0; i < 7; ++i) y.push_back(static_cast<int>(rng() % 4));
    worst = std::max(worst, max_rel_error(model, x, y, std::nullopt));

    const Eigen::MatrixXd targets = model.embed(test::random_points(5, 4, rng));
    DistributionTerm term{&targets, KernelParams{0.7, inst % 2 == 1}, 1.5};
    worst_dst = std::max(worst_dst, max_rel_error(model, x, y, term));
  }
  CHECK(worst < 1e-4);
  CHECK(worst_dst < 1e-4);
}

TEST_CASE("loss decomposes into cross-entropy and weighted l_dst") {
  std::mt19937_64 rng(37);
  const Backbone model = toy_model(7);
  const Eigen::MatrixXd x = test::random_points(5, 6, rng);
  const std::vector<int> y = {0, 1, 2, 3, 0, 1};
  const Eigen::MatrixXd targets = model.embed(test::random_points(5, 3, rng));
  const KernelParams k{0.4, false};
  const LossResult r = model.loss_and_grads(x, y, DistributionTerm{&targets, k, 2.0});
  CHECK(r.ce == doctest::Approx(model.cross_entropy(x, y).mean()).epsilon(1e-13));
  const Eigen::MatrixXd z = model.embed(x);
  double sum = 0.0;
  for (int i = 0; i < z.cols(); ++i)
    for (int j = 0; j < targets.cols(); ++j) sum += test::kernel_literal(z.col(i), targets.col(j), k);
  CHECK(r.dst == doctest::Approx(-2.0 * sum / (6 * 3)).epsilon(1e-13));
  CHECK(r.loss == doctest::Approx(r.ce + 2.0 * r.dst).epsilon(1e-13));
}

TEST_CASE("classify yields a distribution over every known class") {
  std::mt19937_64 rng(41);
  const Backbone model = toy_model(3);
  const Eigen::MatrixXd p = model.classify(test::random_points(5, 9, rng));
  CHECK(p.rows() == 4);
  for (int j = 0; j < 9; ++j) {
    CHECK(p.col(j).sum() == doctest::Approx(1.0));
    CHECK(p.col(j).minCoeff() > 0.0);
  }
  CHECK(model.class_index(12) == 2);
  CHECK_FALSE(model.class_index(99).has_value());
  CHECK_THROWS(model.embed(Eigen::MatrixXd::Zero(3, 2)));
}

TEST_CASE("grow_head keeps existing rows and is deterministic") {
  Backbone a(5, 6, 9), b(5, 6, 9);
  a.grow_head({1, 2});
  b.grow_head({1, 2});
  const Eigen::MatrixXd before = a.params().head_w;
  a.grow_head({3});
  b.grow_head({3});
  CHECK(a.num_classes() == 3);
  CHECK(a.params().head_w.topRows(2) == before);
  CHECK(a.params().head_w == b.params().head_w);
  CHECK_THROWS(a.grow_head({2}));
}

TEST_CASE("apply is a plain gradient step and rejects non-finite results") {
  Backbone m = toy_model(5);
  const Params start = m.params();
  Params g = start.zeros_like();
  g.b1.setOnes();
  m.apply(g, 0.1);
  CHECK((m.params().b1 - (start.b1 - 0.1 * Eigen::VectorXd::Ones(start.b1.size()))).norm() < 1e-15);
  CHECK(m.params().w1 == start.w1);
  g.b1[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS(m.apply(g, 0.1));
}

TEST_CASE("model and snapshot JSON round-trip") {
  std::mt19937_64 rng(43);
  const Backbone m = toy_model(11);
  const Backbone back = Backbone::from_json(m.to_json());
  const Eigen::MatrixXd x = test::random_points(5, 4, rng);
  CHECK(back.logits(x) == m.logits(x));
  CHECK(back.classes() == m.classes());
  CHECK(back.neighbors() == m.neighbors());

  const auto dir = test::scratch_dir("snapshot");
  Snapshot(m).save(dir / "s.json");
  const Snapshot loaded = Snapshot::load(dir / "s.json");
  CHECK(loaded.embed(x) == m.embed(x));
}
