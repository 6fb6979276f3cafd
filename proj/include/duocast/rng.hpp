#pragma once

#include <cstdint>
#include <random>

namespace duocast {

// Seeded random stream. Every stochastic routine takes one of these by
// reference so a run is a pure function of its seeds.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Inclusive on both ends.
  int uniform_int(int lo, int hi) {
    std::uniform_int_distribution<int> dist(lo, hi);
    return dist(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

  // Independent child stream; deterministic in (parent state, stream id).
  Rng split(std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(next_u64()), static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32)};
    std::mt19937_64 child(seq);
    return Rng(child());
  }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace duocast
