#include "distsi/rng.hpp"

#include "distsi/common.hpp"
#include "distsi/normal.hpp"

namespace distsi {

namespace {

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t purpose) {
  std::uint64_t k = mix64(seed);
  k = mix64(k ^ (stream + 0x632be59bd9b4e019ull));
  k = mix64(k ^ (purpose + 0x9e6c63d0876a9a47ull));
  key_ = k;
}

std::uint64_t CounterRng::next_u64() { return mix64(key_ + counter_++ * 0xd1b54a32d192ed03ull); }

double CounterRng::uniform() {
  // 53 random bits plus a half-ulp offset keeps the value inside (0, 1).
  return (next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

double CounterRng::normal() { return norm_quantile(uniform()); }

int CounterRng::uniform_int(int n) {
  if (n < 1) throw InvalidInputError("uniform_int: n must be >= 1");
  // Rejection sampling on the top bits avoids modulo bias.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<int>(x % bound);
}

}  // namespace distsi
