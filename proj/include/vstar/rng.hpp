#pragma once

#include <cstdint>
#include <string_view>

namespace vstar {

/// Counter-based random stream. Each stream is an independent splitmix64
/// sequence keyed by (master seed, stream name, index), so adding draws to
/// one consumer never perturbs another. All samplers are implemented on top
/// of the raw 64-bit output to keep results identical across standard
/// libraries and thread counts.
class RngStream {
 public:
  explicit RngStream(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double uniform();
  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). Requires n > 0.
  int uniform_int(int n);
  /// Standard normal via Box-Muller (pairs cached).
  double gaussian();
  /// Uniform on {-1, +1}.
  double rademacher();

 private:
  std::uint64_t state_;
  double cached_gaussian_ = 0.0;
  bool has_cached_gaussian_ = false;
};

/// Derives the key for a named substream of a master seed.
std::uint64_t derive_key(std::uint64_t master, std::string_view name,
                         std::uint64_t index = 0);

/// Convenience: substream as a ready-to-use stream.
RngStream substream(std::uint64_t master, std::string_view name,
                    std::uint64_t index = 0);

}  // namespace vstar
