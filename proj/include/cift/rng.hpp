#pragma once

#include <cstdint>
#include <random>

namespace cift {

/// Seeded generator that can be split into independent child streams.
///
/// A child is a pure function of (parent seed, stream id), never of how many
/// draws the parent has made, so work split across threads or cells stays
/// reproducible regardless of execution order.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  Rng split(std::uint64_t stream) const;

  double normal();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);

  std::uint64_t seed() const { return seed_; }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace cift
