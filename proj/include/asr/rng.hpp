#pragma once

#include <cstdint>

namespace asr {

// splitmix64 step: advances state and returns one output word.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Sub-seed derivation: a fixed chain of splitmix64 steps xor-folded with the
// stream labels. Every derived stream in the project goes through this one
// function so reproducibility depends on nothing but (seed, labels).
inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t a = 0,
                              std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = seed;
  std::uint64_t h = splitmix64(s);
  s ^= a;
  h ^= splitmix64(s);
  s ^= b;
  h ^= splitmix64(s);
  s ^= c;
  h ^= splitmix64(s);
  return h;
}

// Minimal deterministic generator. Intentionally self-contained: standard
// library distributions are not bit-stable across implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ^ 0xa0761d6478bd642fULL) {
    // warm up so small seeds diverge immediately
    splitmix64(state_);
  }

  std::uint64_t next_u64() { return splitmix64(state_); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform in [0, n); modulo bias is irrelevant at the n used here
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  bool coin() { return (next_u64() & 1ULL) != 0; }

 private:
  std::uint64_t state_;
};

}  // namespace asr
