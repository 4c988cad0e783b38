#pragma once

#include <cstdint>
#include <string_view>

namespace hgrec {

// Deterministic splitmix64 random streams. All randomness in a run derives
// from one root seed split into named streams (init/split/negatives/...);
// per-epoch streams take the epoch as the index, so resuming a run mid-way
// reproduces the remaining epochs bit-exactly.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  static Rng stream(std::uint64_t root_seed, std::string_view name,
                    std::uint64_t index = 0);

  std::uint64_t next_u64();

  // [0, 1)
  double real01();
  double uniform(double lo, double hi);
  bool bernoulli(double p);
  // uniform in [0, n), rejection-sampled (no modulo bias)
  std::uint64_t below(std::uint64_t n);

 private:
  std::uint64_t state_;
};

inline std::uint64_t Rng::next_u64() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double Rng::real01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

inline double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * real01();
}

inline bool Rng::bernoulli(double p) { return real01() < p; }

inline std::uint64_t Rng::below(std::uint64_t n) {
  const std::uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

inline Rng Rng::stream(std::uint64_t root_seed, std::string_view name,
                       std::uint64_t index) {
  // FNV-1a over the stream name, then mix in seed and index
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  h ^= root_seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= index * 0xd6e8feb86659fd93ULL;
  Rng r(h);
  r.next_u64();  // decorrelate near-zero states
  return r;
}

}  // namespace hgrec
