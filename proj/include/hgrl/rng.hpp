#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "hgrl/common.hpp"

namespace hgrl {

// splitmix64 with a hand-rolled Box-Muller on top. The standard library
// distributions are implementation-defined, which would break the
// bit-reproducibility contract of synthetic generation, so we pin the
// whole sampling path ourselves.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  Mat gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double stddev = 1.0, double mean = 0.0) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = mean + stddev * gaussian();
    return m;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derive an independent stream; `salt` names the purpose of the stream so
  // adding a new consumer does not shift the draws of existing ones.
  Rng fork(std::uint64_t salt) const {
    std::uint64_t z = state_ ^ (0x9e3779b97f4a7c15ull * (salt + 1));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    return Rng(z ^ (z >> 27));
  }

 private:
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace hgrl
