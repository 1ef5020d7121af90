#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "smnet/rng.hpp"
#include "smnet/tape.hpp"
#include "smnet/tensor.hpp"

using namespace smnet;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

// Naive reference: act(W x + M x + b) for one row.
std::vector<double> dense_oracle(const Tensor& x, const Tensor& w, const Tensor& m, const Tensor& b, Activation act) {
  std::vector<double> y(w.rows());
  for (std::size_t o = 0; o < w.rows(); ++o) {
    double z = 0.0;
    for (std::size_t i = 0; i < w.cols(); ++i) z += w(o, i) * x[i] + m(o, i) * x[i];
    y[o] = activate(act, z + b[o]);
  }
  return y;
}

using Build = std::function<Var(Tape&, std::vector<Var>&)>;

// Max relative error of analytic vs central-difference gradients for every
// parameter, with the loss built by `build` from one leaf per parameter.
double fd_error(std::vector<Parameter>& params, const Build& build, double eps = 1e-5) {
  auto loss = [&](Tape& tape) {
    std::vector<Var> leaves;
    for (auto& p : params) leaves.push_back(tape.leaf(p));
    return build(tape, leaves);
  };
  Tape tape;
  const GradMap g = tape.backward(loss(tape));
  double worst = 0.0;
  for (auto& p : params) {
    const Tensor a = g.get(p);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double v = p.value[i];
      p.value[i] = v + eps;
      Tape t1;
      const double up = t1.value(loss(t1)).item();
      p.value[i] = v - eps;
      Tape t2;
      const double down = t2.value(loss(t2)).item();
      p.value[i] = v;
      const double num = (up - down) / (2.0 * eps);
      worst = std::max(worst, std::abs(a[i] - num) / std::max({std::abs(a[i]), std::abs(num), 1e-4}));
    }
  }
  return worst;
}

}  // namespace

TEST(ForwardDense, IdentityWeights) {
  const Tensor y = forward_dense(Tensor({2}, {3.0, -1.0}), Tensor::identity(2), Tensor::matrix(2, 2),
                                 Tensor::vector(2), Activation::identity);
  EXPECT_EQ(y, Tensor({2}, {3.0, -1.0}));
}

TEST(ForwardDense, ZeroWeightsUnderReluGiveZero) {
  Rng rng = make_rng(1, "t");
  const Tensor y = forward_dense(random_tensor({5}, rng), Tensor::matrix(3, 5), Tensor::matrix(3, 5),
                                 Tensor::vector(3), Activation::relu);
  EXPECT_TRUE(y.all_zero());
}

TEST(ForwardDense, MatchesNaiveOracle) {
  Rng rng = make_rng(7, "dense");
  for (Activation act : {Activation::identity, Activation::relu, Activation::leaky_relu, Activation::tanh}) {
    const Tensor x = random_tensor({4}, rng), w = random_tensor({3, 4}, rng), m = random_tensor({3, 4}, rng),
                 b = random_tensor({3}, rng);
    const Tensor y = forward_dense(x, w, m, b, act);
    const auto want = dense_oracle(x, w, m, b, act);
    for (std::size_t o = 0; o < 3; ++o) EXPECT_NEAR(y[o], want[o], 1e-12);
  }
}

TEST(ForwardDense, BatchRowsMatchSingleRows) {
  Rng rng = make_rng(8, "dense");
  const Tensor x = random_tensor({5, 4}, rng), w = random_tensor({3, 4}, rng), m = random_tensor({3, 4}, rng),
               b = random_tensor({3}, rng);
  const Tensor y = forward_dense(x, w, m, b, Activation::tanh);
  for (std::size_t r = 0; r < 5; ++r) {
    Tensor xr({4}, std::vector<double>(x.row(r).begin(), x.row(r).end()));
    const auto want = dense_oracle(xr, w, m, b, Activation::tanh);
    for (std::size_t o = 0; o < 3; ++o) EXPECT_NEAR(y(r, o), want[o], 1e-12);
  }
}

TEST(ForwardDense, ShapeMismatchNamesShapes) {
  try {
    forward_dense(Tensor::vector(3), Tensor::matrix(2, 4), Tensor::matrix(2, 4), Tensor::vector(2),
                  Activation::identity);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[2x4]"), std::string::npos);
  }
  EXPECT_THROW(forward_dense(Tensor::vector(4), Tensor::matrix(2, 4), Tensor::matrix(3, 4), Tensor::vector(2),
                             Activation::identity),
               DimensionError);
  EXPECT_THROW(forward_dense(Tensor::vector(4), Tensor::matrix(2, 4), Tensor::matrix(2, 4), Tensor::vector(3),
                             Activation::identity),
               DimensionError);
}

TEST(Backward, LinearSumGivesInputPerRow) {
  Parameter w("W", Tensor({3, 2}, {1, 2, 3, 4, 5, 6}));
  Tape tape;
  const Var y = tape.dense(tape.constant(Tensor({2}, {0.25, -2.0})), tape.leaf(w), std::nullopt, std::nullopt,
                           Activation::identity);
  const GradMap g = tape.backward(tape.sum(y));
  const Tensor gw = g.get(w);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(gw(i, 0), 0.25);
    EXPECT_EQ(gw(i, 1), -2.0);
  }
}

TEST(Backward, FastAndSlowBranchGradientsAreEqual) {
  Rng rng = make_rng(3, "branches");
  Parameter w("W", random_tensor({4, 3}, rng)), m("M", random_tensor({4, 3}, rng)), b("b", random_tensor({4}, rng));
  Tape tape;
  const Var y = tape.dense(tape.constant(random_tensor({2, 3}, rng)), tape.leaf(w), tape.leaf(m), tape.leaf(b),
                           Activation::tanh);
  const GradMap g = tape.backward(tape.sum(tape.square(y)));
  EXPECT_EQ(g.get(w), g.get(m));
}

TEST(Backward, TwoLayerNetMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng = make_rng(seed, "two-layer");
    const Tensor x = random_tensor({3, 4}, rng);
    const std::vector<int> y{0, 2, 1};
    std::vector<Parameter> ps{{"W1", random_tensor({5, 4}, rng)}, {"M1", random_tensor({5, 4}, rng)},
                              {"b1", random_tensor({5}, rng)},    {"W2", random_tensor({3, 5}, rng)},
                              {"M2", random_tensor({3, 5}, rng)}, {"b2", random_tensor({3}, rng)}};
    const double err = fd_error(ps, [&](Tape& t, std::vector<Var>& v) {
      const Var h = t.dense(t.constant(x), v[0], v[1], v[2], Activation::tanh);
      return t.cross_entropy(t.dense(h, v[3], v[4], v[5], Activation::identity), y);
    });
    EXPECT_LE(err, 1e-5) << "seed " << seed;
  }
}

TEST(Backward, ElementwiseOpsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = make_rng(seed, "ops");
    std::vector<Parameter> ps{{"a", random_tensor({2, 3}, rng)}, {"b", random_tensor({2, 3}, rng)}};
    const double err = fd_error(ps, [](Tape& t, std::vector<Var>& v) {
      const Var s = t.add(t.mul(v[0], v[1]), t.scale(t.sub(v[0], v[1]), 0.7));
      return t.mean(t.add(t.exp(t.scale(s, 0.5)), t.square(t.activate(v[1], Activation::tanh))));
    });
    EXPECT_LE(err, 1e-5) << "seed " << seed;
  }
}

TEST(Backward, RowOpsMatchFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = make_rng(seed, "rows");
    std::vector<Parameter> ps{{"a", random_tensor({3, 4}, rng)}, {"b", random_tensor({4, 2}, rng)}};
    const double err = fd_error(ps, [](Tape& t, std::vector<Var>& v) {
      const Var lp = t.log_softmax_rows(v[0]);
      const Var picked = t.pick_rows(lp, {1, 3, 0});
      const Var rows = t.sum_rows(t.mul(t.exp(lp), lp));
      const Var mm = t.flatten(t.matmul(v[0], v[1]));
      return t.add(t.add(t.sum(picked), t.mean(rows)), t.mean(t.square(mm)));
    });
    EXPECT_LE(err, 1e-5) << "seed " << seed;
  }
}

TEST(Backward, ScatterAndMaskBlendMatchFiniteDifferences) {
  const std::vector<std::uint32_t> idx{1, 4, 5};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng = make_rng(seed, "blend");
    std::vector<Parameter> ps{{"prev", random_tensor({2, 3}, rng)}, {"vals", random_tensor({3}, rng)}};
    const Tensor w = random_tensor({2, 3}, rng);
    const double err = fd_error(ps, [&](Tape& t, std::vector<Var>& v) {
      const Var sparse = t.scatter(v[1], idx, {2, 3});
      const Var blend = t.mask_blend(v[0], sparse, idx);
      return t.sum(t.mul(t.square(blend), t.constant(w)));
    });
    EXPECT_LE(err, 1e-5) << "seed " << seed;
  }
}

TEST(Backward, MaskBlendBlocksGradientAtMaskedCoordinates) {
  Parameter prev("prev", Tensor({4}, {1, 2, 3, 4}));
  Tape tape;
  const std::vector<std::uint32_t> idx{0, 2};
  const Var y = tape.mask_blend(tape.leaf(prev), tape.constant(Tensor({4}, {9, 0, 9, 0})), idx);
  const Tensor g = tape.backward(tape.sum(y)).get(prev);
  EXPECT_EQ(g, Tensor({4}, {0, 1, 0, 1}));
}

TEST(Backward, RepeatedUseAccumulatesPathGradients) {
  Rng rng = make_rng(11, "dup");
  const Tensor x1 = random_tensor({3}, rng), x2 = random_tensor({3}, rng);
  Parameter w("W", random_tensor({2, 3}, rng));
  Parameter wa("Wa", w.value), wb("Wb", w.value);
  auto path = [](Tape& t, Var wv, const Tensor& x) {
    return t.sum(t.square(t.dense(t.constant(x), wv, std::nullopt, std::nullopt, Activation::tanh)));
  };
  Tape shared;
  const Var ws = shared.leaf(w);
  const Tensor g = shared.backward(shared.add(path(shared, ws, x1), path(shared, shared.leaf(w), x2))).get(w);
  Tape split;
  const GradMap gs = split.backward(split.add(path(split, split.leaf(wa), x1), path(split, split.leaf(wb), x2)));
  Tensor want = gs.get(wa);
  want += gs.get(wb);
  EXPECT_LE(max_abs_diff(g, want), 1e-15);
}

TEST(Backward, ParameterGradAccumulatesAcrossCalls) {
  Parameter w("W", Tensor({1, 2}, {1.0, 1.0}));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(tape.sum(tape.dense(tape.constant(Tensor({2}, {2.0, 3.0})), tape.leaf(w), std::nullopt,
                                      std::nullopt, Activation::identity)));
  }
  EXPECT_EQ(w.grad, Tensor({1, 2}, {4.0, 6.0}));
}

TEST(Backward, CustomOpPullbackIsUsed) {
  Parameter a("a", Tensor({2}, {0.3, -0.8}));
  const double err = [&] {
    std::vector<Parameter> ps{a};
    return fd_error(ps, [](Tape& t, std::vector<Var>& v) {
      const Tensor& av = t.value(v[0]);
      Tensor y({2}, {std::sin(av[0]), std::sin(av[1])});
      const Var s = t.custom(y, {v[0]}, [av](const Tensor& g, std::span<Tensor* const> slots) {
        for (std::size_t i = 0; i < 2; ++i) (*slots[0])[i] += g[i] * std::cos(av[i]);
      });
      return t.sum(t.square(s));
    });
  }();
  EXPECT_LE(err, 1e-6);
}

TEST(Backward, EmptyTapeIsStateError) {
  Tape tape;
  EXPECT_THROW(tape.backward(Var{}), StateError);
}

TEST(Backward, NonScalarLossRejected) {
  Parameter w("W", Tensor({2}, {1.0, 2.0}));
  Tape tape;
  EXPECT_THROW(tape.backward(tape.square(tape.leaf(w))), DimensionError);
}

TEST(Truncate, ClearsHistoryAndKeepsParameters) {
  Rng rng = make_rng(5, "trunc");
  Parameter w("W", random_tensor({3, 4}, rng)), b("b", random_tensor({3}, rng));
  const Tensor before = w.value;
  const Tensor x = random_tensor({4}, rng);
  Tape tape;
  std::optional<Var> loss;
  for (int s = 0; s < 3; ++s) {
    const Var y = tape.dense(tape.constant(x), tape.leaf(w), std::nullopt, tape.leaf(b), Activation::relu);
    loss = loss ? tape.add(*loss, tape.sum(y)) : tape.sum(y);
  }
  EXPECT_GT(tape.node_count(), 0u);
  tape.truncate();
  EXPECT_EQ(tape.node_count(), 0u);
  EXPECT_FALSE(tape.live());
  EXPECT_EQ(w.value, before);
  EXPECT_THROW(tape.backward(*loss), StateError);
  tape.truncate();
  EXPECT_EQ(tape.node_count(), 0u);

  const Var y = tape.dense(tape.constant(x), tape.leaf(w), std::nullopt, tape.leaf(b), Activation::relu);
  Tape fresh;
  const Var z = fresh.dense(fresh.constant(x), fresh.leaf(w), std::nullopt, fresh.leaf(b), Activation::relu);
  EXPECT_EQ(tape.value(y), fresh.value(z));
}

TEST(Truncate, StaleHandleRejected) {
  Tape tape;
  const Var c = tape.constant(Tensor::scalar(1.0));
  tape.truncate();
  EXPECT_THROW(tape.value(c), StateError);
}

TEST(Tape, GradientsAreBitwiseReproducible) {
  auto run = [] {
    Rng rng = make_rng(21, "det");
    Parameter w("W", random_tensor({6, 5}, rng));
    const Tensor x = random_tensor({4, 5}, rng);
    Tape tape;
    const Var y = tape.dense(tape.constant(x), tape.leaf(w), std::nullopt, std::nullopt, Activation::tanh);
    return tape.backward(tape.cross_entropy(y, {0, 1, 2, 3})).get(w);
  };
  EXPECT_EQ(run(), run());
}
