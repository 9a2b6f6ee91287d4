#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pfd {

uint64_t hash_label(const std::string& label);
uint64_t mix_seed(uint64_t a, uint64_t b);

/// mt19937_64 stream with fixed-algorithm distributions, so a given seed
/// reproduces the same doubles regardless of standard library version.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}
  Rng(const std::string& label, uint64_t index) : gen_(mix_seed(hash_label(label), index)) {}

  uint64_t next_u64() { return gen_(); }

  /// [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal();

  /// [0, n)
  int uniform_int(int n);

 private:
  std::mt19937_64 gen_;
};

std::vector<double> normal_vec(Rng& rng, int64_t n, double stddev = 1.0);

}  // namespace pfd
