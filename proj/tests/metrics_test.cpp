#include <doctest.h>

#include "ltf/metrics.hpp"
#include "ltf/trainer.hpp"
#include "support.hpp"

using namespace ltf;

namespace {

using Prec = std::vector<std::optional<double>>;

}  // namespace

TEST_CASE("precision is the fraction of matching predictions") {
  CHECK(*precision_from({0, 1, 2, 2}, {0, 1, 2, 2}) == 1.0);
  CHECK(*precision_from({1, 1, 1, 1}, {0, 1, 1, 2}) == 0.5);
  CHECK_FALSE(precision_from({}, {}).has_value());
  CHECK_THROWS_AS(precision_from({1}, {1, 2}), std::invalid_argument);
}

TEST_CASE("a constant predictor is perfect on its own class only") {
  // balanced 3-class sets: set A holds classes {0}, set B holds {1, 2}
  const std::vector<int> constant(6, 0);
  CHECK(*precision_from({0, 0}, {0, 0}) == 1.0);
  CHECK(*precision_from({0, 0, 0, 0}, {1, 1, 2, 2}) == 0.0);
  CHECK(*precision_from(constant, {0, 0, 1, 1, 2, 2}) == doctest::Approx(1.0 / 3));
}

TEST_CASE("scripted two-period run: AP and AF by hand") {
  // period 1: one class set, 4 test nodes, 3 right
  // period 2: set 1 has 4 nodes (2 right), set 2 has 5 nodes (5 right)
  const Prec p1 = {precision_from({0, 0, 0, 1}, {0, 0, 0, 0})};
  const Prec p2 = {precision_from({0, 1, 1, 0}, {0, 0, 0, 0}), precision_from({2, 2, 2, 2, 2}, {2, 2, 2, 2, 2})};
  CHECK(ap(1, p1) == 0.75);
  CHECK(ap(2, p2) == 0.75);  // (0.5 + 1.0) / 2

  // joint reaches 0.75 on set 1 at period 2
  const Prec j2 = {precision_from({0, 0, 0, 1}, {0, 0, 0, 0}), std::optional<double>(1.0)};
  CHECK(af(2, p2, &j2) == 0.25);  // 0.75 - 0.5
  CHECK(af(2, j2, &j2) == 0.0);

  // AF keeps its sign when the method beats Joint
  const Prec better = {std::optional<double>(1.0), std::optional<double>(1.0)};
  CHECK(af(2, better, &j2) == -0.25);
}

TEST_CASE("AP skips undefined sets and rejects malformed input") {
  int skipped = -1;
  CHECK(ap(3, {0.2, std::nullopt, 0.6}, &skipped) == doctest::Approx(0.4));
  CHECK(skipped == 1);
  CHECK_THROWS_AS(ap(2, {0.5}), std::invalid_argument);
  CHECK_THROWS_AS(ap(1, {std::nullopt}), std::invalid_argument);
  CHECK_THROWS_AS(af(1, {0.5}, nullptr), std::invalid_argument);
  const Prec j = {0.5, 0.5};
  CHECK_THROWS_AS(af(1, {0.5}, &j), std::invalid_argument);
  CHECK_THROWS_AS(af(2, {0.5, 0.5}, nullptr), std::invalid_argument);
}

TEST_CASE("three-period AF averages the old sets") {
  const Prec m = {0.4, 0.6, 0.9};
  const Prec j = {0.8, 0.7, 0.95};
  CHECK(af(3, m, &j) == doctest::Approx((0.4 + 0.1) / 2));
}

TEST_CASE("time per epoch is the mean epoch wall time") {
  CHECK(time_per_epoch({10.0, 20.0, 30.0}) == 20.0);
  CHECK_THROWS_AS(time_per_epoch({}), std::invalid_argument);
}

TEST_CASE("Joint against itself forgets nothing at every period") {
  const TemporalGraph g = generate_synthetic(test::small_synth(3, 30));
  TrainConfig t;
  t.epochs = 3;
  t.batch_size = 16;
  t.lr = 0.05;
  t.hidden_dim = 8;
  RunResult joint = run_strategy(g, Strategy::kJoint, SelectionConfig{}, t, 3);
  RunRecord rec = joint.record;
  rec.attach_joint(joint.record);
  CHECK_FALSE(rec.periods[0].af.has_value());
  for (std::size_t i = 1; i < rec.periods.size(); ++i) CHECK(*rec.periods[i].af == 0.0);

  for (const auto& p : rec.periods) {
    CHECK(p.ap >= 0.0);
    CHECK(p.ap <= 1.0);
    CHECK(p.precision.size() == static_cast<std::size_t>(p.period));
    CHECK(p.time_ms == doctest::Approx(time_per_epoch(p.epoch_ms)));
  }

  const RunRecord back = RunRecord::from_json(rec.to_json());
  CHECK(back.to_json() == rec.to_json());

  RunRecord short_joint = joint.record;
  short_joint.periods.pop_back();
  RunRecord other = joint.record;
  CHECK_THROWS_AS(other.attach_joint(short_joint), std::invalid_argument);
}

TEST_CASE("precision per set evaluates over all known classes") {
  const TemporalGraph g = generate_synthetic(test::small_synth(4, 30));
  const PeriodView view = split_period(g, 2, 4);
  const InputTable table = build_inputs(g, view);
  Backbone model(static_cast<int>(table.inputs.rows()), 6, 1);
  model.grow_head(g.classes_up_to(2));
  // force every prediction onto the first class of period 2
  model.mutable_params().head_w.setZero();
  model.mutable_params().head_b.setZero();
  const ClassId target = g.period(2).classes.front();
  model.mutable_params().head_b[*model.class_index(target)] = 5.0;
  const auto prec = precisions_by_period(model, g, table, view);
  REQUIRE(prec.size() == 2);
  CHECK(*prec[0] == 0.0);
  // the set holds two classes; the share of test nodes labelled `target`
  int hit = 0, total = 0;
  for (NodeId id : view.new_in(Split::kTest)) {
    ++total;
    hit += g.node(id).class_id == target;
  }
  CHECK(*prec[1] == doctest::Approx(static_cast<double>(hit) / total));
  CHECK_FALSE(precision_per_set(model, table, view, {12345}).has_value());
}
