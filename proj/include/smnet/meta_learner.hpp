#pragma once

#include <algorithm>
#include <array>
#include <memory>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "smnet/errors.hpp"
#include "smnet/rng.hpp"
#include "smnet/tape.hpp"
#include "smnet/tensor.hpp"

namespace smnet {

inline constexpr double kPreprocessRho = 10.0;

// Log-magnitude / sign encoding of a gradient-like scalar. Large inputs map
// to (log|g| / rho, sign g); tiny ones to (-1, e^rho g).
inline std::array<double, 2> preprocess_gradient(double g) {
  if (std::isnan(g)) throw NumericError("meta-learner input", "NaN gradient");
  if (!std::isfinite(g)) throw NumericError("meta-learner input", "infinite gradient");
  const double a = std::abs(g);
  if (a >= std::exp(-kPreprocessRho)) {
    return {std::log(a) / kPreprocessRho, g > 0.0 ? 1.0 : -1.0};
  }
  return {-1.0, std::exp(kPreprocessRho) * g};
}

// Coordinate-wise fast-weight generator: a 2 -> 20 -> 20 -> 1 MLP with
// LeakyReLU hidden units, shared by every coordinate of one layer.
class MetaLearner {
 public:
  static constexpr std::size_t kFeatures = 2;
  static constexpr std::size_t kHidden = 20;

  MetaLearner() : MetaLearner("meta") {}

  // All-zero weights.
  explicit MetaLearner(const std::string& prefix)
      : w1(prefix + ".W1", Tensor::matrix(kHidden, kFeatures)),
        b1(prefix + ".b1", Tensor::vector(kHidden)),
        w2(prefix + ".W2", Tensor::matrix(kHidden, kHidden)),
        b2(prefix + ".b2", Tensor::vector(kHidden)),
        w3(prefix + ".W3", Tensor::matrix(1, kHidden)),
        b3(prefix + ".b3", Tensor::vector(1)) {}

  // Uniform(+-0.1/sqrt(fan_in)) weights, zero biases, output layer scaled by
  // output_scale so freshly generated fast-weights start near zero.
  MetaLearner(const std::string& prefix, Rng& rng, double output_scale = 0.01) : MetaLearner(prefix) {
    init(w1.value, rng, 1.0);
    init(w2.value, rng, 1.0);
    init(w3.value, rng, output_scale);
  }

  Parameter w1, b1, w2, b2, w3, b3;

  std::vector<Parameter*> parameters() { return {&w1, &b1, &w2, &b2, &w3, &b3}; }
  std::vector<const Parameter*> parameters() const { return {&w1, &b1, &w2, &b2, &w3, &b3}; }

  // Scalar evaluation for one coordinate.
  double forward(std::span<const double, kFeatures> feature) const {
    std::array<double, kHidden> h1{}, h2{};
    for (std::size_t i = 0; i < kHidden; ++i) {
      double z = b1.value[i];
      for (std::size_t j = 0; j < kFeatures; ++j) z += w1.value(i, j) * feature[j];
      h1[i] = activate(Activation::leaky_relu, z);
    }
    for (std::size_t i = 0; i < kHidden; ++i) {
      double z = b2.value[i];
      for (std::size_t j = 0; j < kHidden; ++j) z += w2.value(i, j) * h1[j];
      h2[i] = activate(Activation::leaky_relu, z);
    }
    double out = b3.value[0];
    for (std::size_t j = 0; j < kHidden; ++j) out += w3.value(0, j) * h2[j];
    return out;
  }

  // n x 2 features -> n x 1, recorded with the meta-weights as leaves. The
  // features enter as constants: no gradient flows back into them.
  Var forward(Tape& tape, const Tensor& features) {
    check_features(features);
    auto st = std::make_shared<Activations>();
    st->weights = pack();
    st->features = features;
    Tensor y = Tensor::matrix(features.rows(), 1);
    run_rows(st->weights, features, y.values(), &st->h1, &st->h2);
    std::vector<Var> inputs{tape.leaf(w1), tape.leaf(b1), tape.leaf(w2), tape.leaf(b2), tape.leaf(w3), tape.leaf(b3)};
    return tape.custom(std::move(y), std::move(inputs),
                       [st](const Tensor& g, std::span<Tensor* const> slots) { pullback(*st, g, slots); });
  }

  // Vectorized, unrecorded evaluation: n x 2 -> n.
  Tensor forward_batch(const Tensor& features) const {
    check_features(features);
    Tensor out = Tensor::vector(features.rows());
    run_rows(pack(), features, out.values(), nullptr, nullptr);
    return out;
  }

 private:
  // Weights laid out for the row kernel; W2 is stored transposed.
  struct Packed {
    std::array<double, kHidden * kFeatures> w1{};
    std::array<double, kHidden> b1{};
    std::array<double, kHidden * kHidden> w2{};
    std::array<double, kHidden * kHidden> w2t{};
    std::array<double, kHidden> b2{};
    std::array<double, kHidden> w3{};
    double b3 = 0.0;
  };

  // Hidden activations are kept row-major (row x unit) for the reverse pass.
  struct Activations {
    Packed weights;
    Tensor features;
    std::vector<double> h1, h2;
  };

  static void check_features(const Tensor& features) {
    if (features.rank() != 2 || features.cols() != kFeatures)
      throw DimensionError("meta-learner features", features.shape(), {features.rows(), kFeatures});
  }

  Packed pack() const {
    Packed p;
    std::copy(w1.value.values().begin(), w1.value.values().end(), p.w1.begin());
    std::copy(b1.value.values().begin(), b1.value.values().end(), p.b1.begin());
    std::copy(w2.value.values().begin(), w2.value.values().end(), p.w2.begin());
    for (std::size_t o = 0; o < kHidden; ++o)
      for (std::size_t i = 0; i < kHidden; ++i) p.w2t[i * kHidden + o] = w2.value(o, i);
    std::copy(b2.value.values().begin(), b2.value.values().end(), p.b2.begin());
    std::copy(w3.value.values().begin(), w3.value.values().end(), p.w3.begin());
    p.b3 = b3.value[0];
    return p;
  }

  static double leaky(double z) { return z > 0.0 ? z : kLeakySlope * z; }

  static void run_rows(const Packed& p, const Tensor& features, std::span<double> out, std::vector<double>* h1s,
                       std::vector<double>* h2s) {
    const std::size_t n = features.rows();
    if (h1s) h1s->resize(n * kHidden);
    if (h2s) h2s->resize(n * kHidden);
    std::array<double, kHidden> h1, h2;
    for (std::size_t r = 0; r < n; ++r) {
      const double f0 = features(r, 0), f1 = features(r, 1);
      for (std::size_t o = 0; o < kHidden; ++o)
        h1[o] = leaky(p.b1[o] + p.w1[o * kFeatures] * f0 + p.w1[o * kFeatures + 1] * f1);
      h2 = p.b2;
      for (std::size_t i = 0; i < kHidden; ++i) {
        const double a = h1[i];
        for (std::size_t o = 0; o < kHidden; ++o) h2[o] += p.w2t[i * kHidden + o] * a;
      }
      double y = p.b3;
      for (std::size_t o = 0; o < kHidden; ++o) {
        h2[o] = leaky(h2[o]);
        y += p.w3[o] * h2[o];
      }
      out[r] = y;
      if (h1s) std::copy(h1.begin(), h1.end(), h1s->begin() + static_cast<std::ptrdiff_t>(r * kHidden));
      if (h2s) std::copy(h2.begin(), h2.end(), h2s->begin() + static_cast<std::ptrdiff_t>(r * kHidden));
    }
  }

  // Slots follow the input order w1, b1, w2, b2, w3, b3.
  static void pullback(const Activations& st, const Tensor& g, std::span<Tensor* const> slots) {
    const Packed& p = st.weights;
    std::array<double, kHidden * kFeatures> dw1{};
    std::array<double, kHidden> db1{}, db2{}, dw3{};
    std::array<double, kHidden * kHidden> dw2{};
    double db3 = 0.0;
    std::array<double, kHidden> dz2{}, dz1{};
    for (std::size_t r = 0; r < g.size(); ++r) {
      const double d = g[r];
      if (d == 0.0) continue;
      const double* h1 = &st.h1[r * kHidden];
      const double* h2 = &st.h2[r * kHidden];
      db3 += d;
      for (std::size_t o = 0; o < kHidden; ++o) {
        dw3[o] += d * h2[o];
        dz2[o] = d * p.w3[o] * (h2[o] > 0.0 ? 1.0 : kLeakySlope);
        db2[o] += dz2[o];
      }
      dz1.fill(0.0);
      for (std::size_t o = 0; o < kHidden; ++o) {
        const double dz = dz2[o];
        for (std::size_t i = 0; i < kHidden; ++i) {
          dw2[o * kHidden + i] += dz * h1[i];
          dz1[i] += p.w2[o * kHidden + i] * dz;
        }
      }
      const double f0 = st.features(r, 0), f1 = st.features(r, 1);
      for (std::size_t i = 0; i < kHidden; ++i) {
        const double dz = dz1[i] * (h1[i] > 0.0 ? 1.0 : kLeakySlope);
        dw1[i * kFeatures] += dz * f0;
        dw1[i * kFeatures + 1] += dz * f1;
        db1[i] += dz;
      }
    }
    auto add = [](Tensor* slot, std::span<const double> v) {
      if (!slot) return;
      for (std::size_t i = 0; i < v.size(); ++i) (*slot)[i] += v[i];
    };
    add(slots[0], dw1);
    add(slots[1], db1);
    add(slots[2], dw2);
    add(slots[3], db2);
    add(slots[4], dw3);
    add(slots[5], std::span<const double>(&db3, 1));
  }

  static void init(Tensor& w, Rng& rng, double scale) {
    const double bound = 0.1 / std::sqrt(static_cast<double>(w.cols()));
    for (double& v : w.values()) v = scale * uniform(rng, -bound, bound);
  }
};

}  // namespace smnet
