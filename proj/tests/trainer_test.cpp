#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "smnet/model.hpp"
#include "smnet/rng.hpp"
#include "smnet/trainer.hpp"

using namespace smnet;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = uniform(rng, -1.0, 1.0);
  return t;
}

struct Problem {
  std::vector<Tensor> xs;
  std::vector<std::vector<int>> ys;
};

Problem make_problem(std::size_t steps, std::uint64_t seed) {
  Rng rng = make_rng(seed, "trainer-test");
  Problem p;
  for (std::size_t s = 0; s < steps; ++s) {
    p.xs.push_back(random_tensor({4, 6}, rng));
    std::vector<int> y(4);
    for (int& v : y) v = static_cast<int>(uniform_int(rng, 0, 2));
    p.ys.push_back(y);
  }
  return p;
}

std::vector<LayerSpec> specs(bool fast) {
  return {{6, 10, Activation::relu, fast}, {10, 3, Activation::identity, fast}};
}

// Loss on the problem's step t (1-based, cycling).
LossFn loss_at(const Problem& p, const std::uint64_t& t) {
  return [&p, &t](Tape& tape, FastWeightModel& m) {
    const std::size_t i = (t - 1) % p.xs.size();
    return StepLoss{tape.cross_entropy(m.forward(tape, p.xs[i])[0], p.ys[i]), 0, 4};
  };
}

TrainerConfig config(int k, double p) {
  TrainerConfig c;
  c.k = k;
  c.fast.p_train = p;
  c.fast.p_eval = p;
  c.slow_optimizer.learning_rate = 1e-2;
  c.meta_optimizer.learning_rate = 1e-2;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Trainer, ScheduleFollowsK) {
  const Problem p = make_problem(10, 1);
  FastWeightModel m(specs(true), Topology::sequential, 1);
  Trainer tr(m, config(3, 0.3));
  std::uint64_t t = 0;
  const LossFn fn = loss_at(p, t);
  std::vector<UpdateKind> kinds;
  for (t = 1; t <= 9; ++t) kinds.push_back(tr.online_step(fn).update_kind);
  const std::vector<UpdateKind> want{UpdateKind::fast,     UpdateKind::fast, UpdateKind::gradient,
                                     UpdateKind::fast,     UpdateKind::fast, UpdateKind::gradient,
                                     UpdateKind::fast,     UpdateKind::fast, UpdateKind::gradient};
  EXPECT_EQ(kinds, want);
  EXPECT_EQ(tr.gradient_updates(), 3u);
  EXPECT_EQ(tr.fast_updates(), 6u);
}

TEST(Trainer, UpdateCountsOverLongRun) {
  const Problem p = make_problem(7, 2);
  FastWeightModel m(specs(true), Topology::sequential, 2);
  Trainer tr(m, config(4, 0.2));
  std::uint64_t t = 0;
  const LossFn fn = loss_at(p, t);
  for (t = 1; t <= 1001; ++t) tr.online_step(fn);
  EXPECT_EQ(tr.gradient_updates(), 1001u / 4);
  EXPECT_EQ(tr.fast_updates(), 1001u - 1001u / 4);
}

TEST(Trainer, FastStepsWriteFastWeightsAndGradientStepsCommit) {
  const Problem p = make_problem(6, 3);
  FastWeightModel m(specs(true), Topology::sequential, 3);
  for (auto& meta : m.metas())
    for (Parameter* q : meta->parameters())
      for (double& v : q->value.values()) v *= 50.0;
  Trainer tr(m, config(3, 0.5));
  std::uint64_t t = 0;
  const LossFn fn = loss_at(p, t);
  t = 1;
  tr.online_step(fn);
  EXPECT_TRUE(m.layers()[0].live_m.has_value());
  EXPECT_TRUE(m.layers()[0].m.all_zero());  // not committed yet
  EXPECT_FALSE(m.layers()[0].average.all_zero());
  t = 2;
  tr.online_step(fn);
  t = 3;
  const StepRecord r = tr.online_step(fn);
  EXPECT_EQ(r.update_kind, UpdateKind::gradient);
  EXPECT_FALSE(m.layers()[0].live_m.has_value());
  EXPECT_FALSE(m.layers()[0].m.all_zero());
  EXPECT_EQ(r.tape_nodes, 0u);
  EXPECT_GT(tr.mask_evaluations(), 0u);
}

TEST(Trainer, ResetModeClearsFastWeightsAtTruncation) {
  const Problem p = make_problem(6, 4);
  FastWeightModel m(specs(true), Topology::sequential, 4);
  TrainerConfig c = config(3, 0.5);
  c.fast.carry_mode = CarryMode::reset;
  Trainer tr(m, c);
  std::uint64_t t = 0;
  const LossFn fn = loss_at(p, t);
  for (t = 1; t <= 30; ++t) {
    tr.online_step(fn);
    if (t % 3 == 0)
      for (const auto& l : m.layers()) EXPECT_TRUE(l.m.all_zero()) << "t=" << t;
  }
}

TEST(Trainer, CarryModeKeepsFastWeights) {
  const Problem p = make_problem(6, 5);
  FastWeightModel m(specs(true), Topology::sequential, 5);
  Trainer tr(m, config(3, 0.5));
  std::uint64_t t = 0;
  const LossFn fn = loss_at(p, t);
  for (t = 1; t <= 3; ++t) tr.online_step(fn);
  EXPECT_FALSE(m.layers()[1].m.all_zero());
}

// p = 0 with zero fast-weights is exactly a plain network trained by
// truncated BPTT with the same optimizer.
TEST(Trainer, ZeroMaskRateReducesToPlainNetwork) {
  const Problem p = make_problem(11, 6);
  FastWeightModel smn(specs(true), Topology::sequential, 6);
  FastWeightModel plain(specs(false), Topology::sequential, 6);
  Trainer a(smn, config(3, 0.0));
  Trainer b(plain, config(3, 0.0));
  std::uint64_t t = 0;
  const LossFn fn = loss_at(p, t);
  for (t = 1; t <= 300; ++t) {
    const StepRecord ra = a.online_step(fn);
    const StepRecord rb = b.online_step(fn);
    ASSERT_EQ(ra.loss, rb.loss) << "t=" << t;
  }
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(smn.layers()[i].w.value, plain.layers()[i].w.value);
    EXPECT_EQ(smn.layers()[i].b.value, plain.layers()[i].b.value);
    EXPECT_TRUE(smn.layers()[i].m.all_zero());
  }
}

TEST(Trainer, SameSeedSameTrajectory) {
  auto run = [] {
    const Problem p = make_problem(9, 7);
    FastWeightModel m(specs(true), Topology::sequential, 7);
    Trainer tr(m, config(3, 0.3));
    std::uint64_t t = 0;
    const LossFn fn = loss_at(p, t);
    std::vector<double> losses;
    for (t = 1; t <= 100; ++t) losses.push_back(tr.online_step(fn).loss);
    return losses;
  };
  EXPECT_EQ(run(), run());
}

TEST(Trainer, FastOnlyLeavesSlowAndMetaWeightsUntouched) {
  const Problem p = make_problem(8, 8);
  FastWeightModel m(specs(true), Topology::sequential, 8);
  const FastWeightModel before = m;
  TrainerConfig c = config(3, 0.5);
  c.eval_fast_only = true;
  Trainer tr(m, c);
  std::uint64_t t = 0;
  const LossFn fn = loss_at(p, t);
  for (t = 1; t <= 1000; ++t) {
    const StepRecord r = tr.online_step(fn);
    ASSERT_EQ(r.update_kind, UpdateKind::fast);
  }
  EXPECT_EQ(tr.gradient_updates(), 0u);
  EXPECT_EQ(tr.slow_optimizer().step_count(), 0u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(m.layers()[i].w.value, before.layers()[i].w.value);
    EXPECT_EQ(m.layers()[i].b.value, before.layers()[i].b.value);
    const auto pa = m.metas()[i]->parameters();
    const auto pb = before.metas()[i]->parameters();
    for (std::size_t j = 0; j < pa.size(); ++j) EXPECT_EQ(pa[j]->value, pb[j]->value);
  }
  EXPECT_FALSE(m.layers()[0].m.all_zero());
}

TEST(Trainer, FastOnlyWithZeroRateIsStaticEvaluation) {
  const Problem p = make_problem(5, 9);
  FastWeightModel m(specs(true), Topology::sequential, 9);
  TrainerConfig c = config(3, 0.0);
  c.eval_fast_only = true;
  Trainer tr(m, c);
  std::uint64_t t = 0;
  const LossFn fn = loss_at(p, t);
  for (t = 1; t <= 5; ++t) {
    const double loss = tr.online_step(fn).loss;
    Tape tape;
    const double want = tape.value(tape.cross_entropy(m.forward(tape, p.xs[t - 1])[0], p.ys[t - 1])).item();
    EXPECT_EQ(loss, want);
  }
}

TEST(Trainer, RetainedHistoryBoundedByWindow) {
  const Problem p = make_problem(5, 10);
  FastWeightModel m(specs(true), Topology::sequential, 10);
  Trainer tr(m, config(3, 0.3));
  std::uint64_t t = 0;
  const LossFn fn = loss_at(p, t);
  std::size_t first_window_peak = 0;
  for (t = 1; t <= 600; ++t) {
    const StepRecord r = tr.online_step(fn);
    if (t % 3 == 0) EXPECT_EQ(r.tape_nodes, 0u);
    if (t <= 3) first_window_peak = std::max(first_window_peak, tr.tape().peak_node_count());
  }
  // Node counts per window depend only on the architecture.
  EXPECT_EQ(tr.tape().peak_node_count(), first_window_peak);
}

TEST(Trainer, NonFiniteLossMarksDivergenceAndContinues) {
  FastWeightModel m(specs(true), Topology::sequential, 11);
  Trainer tr(m, config(3, 0.3));
  Rng rng = make_rng(11, "x");
  const Tensor x = random_tensor({4, 6}, rng);
  bool poison = false;
  LossFn fn = [&](Tape& tape, FastWeightModel& mm) {
    Var loss = tape.cross_entropy(mm.forward(tape, x)[0], {0, 1, 2, 0});
    if (poison) loss = tape.add(loss, tape.constant(Tensor::scalar(std::numeric_limits<double>::quiet_NaN())));
    return StepLoss{loss, 0, 4};
  };
  tr.online_step(fn);
  poison = true;
  const StepRecord r = tr.online_step(fn);
  EXPECT_TRUE(r.diverged);
  EXPECT_TRUE(tr.diverged());
  poison = false;
  const StepRecord next = tr.online_step(fn);
  EXPECT_FALSE(next.diverged);
  EXPECT_TRUE(std::isfinite(next.loss));
  EXPECT_EQ(tr.gradient_updates() + tr.fast_updates(), 3u);
}

TEST(Trainer, KOneIsPlainGradientDescent) {
  const Problem p = make_problem(4, 12);
  FastWeightModel m(specs(false), Topology::sequential, 12);
  Trainer tr(m, config(1, 0.3));
  std::uint64_t t = 0;
  const LossFn fn = loss_at(p, t);
  for (t = 1; t <= 10; ++t) EXPECT_EQ(tr.online_step(fn).update_kind, UpdateKind::gradient);
}

TEST(Trainer, InvalidConfigRejected) {
  FastWeightModel m(specs(true), Topology::sequential, 13);
  TrainerConfig c;
  c.k = 0;
  EXPECT_THROW(Trainer(m, c), ConfigError);
  c = {};
  c.fast.gamma = 1.0;
  EXPECT_THROW(Trainer(m, c), ConfigError);
  c = {};
  c.fast.p_eval = -0.1;
  EXPECT_THROW(Trainer(m, c), ConfigError);
}

TEST(Model, ActorCriticHeadsReadTrunk) {
  FastWeightModel m({{12, 8, Activation::relu, true},
                     {8, 8, Activation::relu, true},
                     {8, 4, Activation::identity, true},
                     {8, 1, Activation::identity, true}},
                    Topology::actor_critic, 1);
  Rng rng = make_rng(1, "ac");
  const auto out = m.predict(random_tensor({3, 12}, rng));
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].shape(), (std::vector<std::size_t>{3, 4}));
  EXPECT_EQ(out[1].shape(), (std::vector<std::size_t>{3, 1}));
  EXPECT_THROW(FastWeightModel({{12, 8, Activation::relu, true}, {9, 4, Activation::identity, true},
                                {8, 1, Activation::identity, true}},
                               Topology::actor_critic, 1),
               ConfigError);
}
