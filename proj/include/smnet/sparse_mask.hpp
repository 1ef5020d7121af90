#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "smnet/errors.hpp"
#include "smnet/rng.hpp"
#include "smnet/tensor.hpp"

namespace smnet {

// Binary indicator matrix with i.i.d. Bernoulli(p) entries, stored as the
// sorted flat indices of its ones.
class SparseMask {
 public:
  SparseMask() = default;
  SparseMask(std::vector<std::size_t> shape, double p, std::vector<std::uint32_t> ones)
      : shape_(std::move(shape)), p_(p), ones_(std::move(ones)) {}

  static SparseMask none(std::vector<std::size_t> shape) { return SparseMask(std::move(shape), 0.0, {}); }

  static SparseMask all(std::vector<std::size_t> shape) {
    std::vector<std::uint32_t> ones(Tensor::count(shape));
    std::iota(ones.begin(), ones.end(), 0u);
    return SparseMask(std::move(shape), 1.0, std::move(ones));
  }

  static SparseMask from_bits(const Tensor& bits, double p) {
    std::vector<std::uint32_t> ones;
    for (std::size_t i = 0; i < bits.size(); ++i)
      if (bits[i] != 0.0) ones.push_back(static_cast<std::uint32_t>(i));
    return SparseMask(bits.shape(), p, std::move(ones));
  }

  // Walks the matrix by geometric gaps between ones, which yields the same
  // joint distribution as one Bernoulli(p) draw per element while costing
  // O(nnz) draws. p = 0 and p = 1 consume no randomness at all.
  static SparseMask sample(std::vector<std::size_t> shape, double p, Rng& rng) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("mask probability must lie in [0, 1]");
    if (p == 0.0) return none(std::move(shape));
    if (p == 1.0) return all(std::move(shape));
    const std::size_t n = Tensor::count(shape);
    std::vector<std::uint32_t> ones;
    ones.reserve(static_cast<std::size_t>(static_cast<double>(n) * p * 1.1) + 16);
    const double log_q = std::log1p(-p);
    double pos = -1.0;
    while (true) {
      const double u = 1.0 - uniform01(rng);  // (0, 1]
      pos += std::floor(std::log(u) / log_q) + 1.0;
      if (pos >= static_cast<double>(n)) break;
      ones.push_back(static_cast<std::uint32_t>(pos));
    }
    return SparseMask(std::move(shape), p, std::move(ones));
  }

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  double p() const noexcept { return p_; }
  std::size_t size() const { return Tensor::count(shape_); }
  std::size_t nnz() const noexcept { return ones_.size(); }
  const std::vector<std::uint32_t>& indices() const noexcept { return ones_; }

  bool bit(std::size_t flat) const {
    return std::binary_search(ones_.begin(), ones_.end(), static_cast<std::uint32_t>(flat));
  }

  Tensor bits() const {
    Tensor t(shape_);
    for (std::uint32_t i : ones_) t[i] = 1.0;
    return t;
  }

 private:
  std::vector<std::size_t> shape_;
  double p_ = 0.0;
  std::vector<std::uint32_t> ones_;
};

}  // namespace smnet
