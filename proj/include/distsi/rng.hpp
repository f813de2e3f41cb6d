#pragma once

#include <cstdint>

namespace distsi {

/// Counter-based random stream. Streams are keyed by (seed, stream, purpose)
/// so concurrent replicates draw from disjoint, schedule-independent
/// sequences; output is identical across platforms and thread counts.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream, std::uint64_t purpose);

  std::uint64_t next_u64();

  /// Uniform double strictly inside (0, 1).
  double uniform();

  /// Standard normal via inverse-CDF transform.
  double normal();

  /// Uniform integer in {0, ..., n-1}; n >= 1.
  int uniform_int(int n);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace distsi
