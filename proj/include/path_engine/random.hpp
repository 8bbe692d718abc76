#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "path_engine/tensor.hpp"

namespace path_engine::inline PATH_ENGINE_NS {

std::uint64_t fnv1a(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);
/// Stream seed derived from a global seed and a tag (parameter name, split id).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  /// Uniform integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng);
Tensor normal_tensor(Shape shape, double mean, double stddev, Rng& rng);
/// Normal samples redrawn until they fall inside mean +/- 2 stddev.
Tensor trunc_normal_tensor(Shape shape, double stddev, Rng& rng);

}  // namespace path_engine
