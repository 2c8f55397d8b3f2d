#include "vstar/rng.hpp"

#include <cmath>

namespace vstar {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t RngStream::next_u64() {
  state_ += kGolden;
  return mix64(state_);
}

double RngStream::uniform() {
  // 53 random bits into [0, 1).
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

int RngStream::uniform_int(int n) {
  // Rejection sampling to avoid modulo bias.
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t v;
  do {
    v = next_u64();
  } while (v >= limit);
  return static_cast<int>(v % bound);
}

double RngStream::gaussian() {
  if (has_cached_gaussian_) {
    has_cached_gaussian_ = false;
    return cached_gaussian_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  cached_gaussian_ = r * std::sin(a);
  has_cached_gaussian_ = true;
  return r * std::cos(a);
}

double RngStream::rademacher() {
  return (next_u64() & 1ULL) ? 1.0 : -1.0;
}

std::uint64_t derive_key(std::uint64_t master, std::string_view name,
                         std::uint64_t index) {
  std::uint64_t k = mix64(master ^ kGolden);
  k = mix64(k ^ fnv1a(name));
  k = mix64(k ^ (index * kGolden));
  return k;
}

RngStream substream(std::uint64_t master, std::string_view name,
                    std::uint64_t index) {
  return RngStream(derive_key(master, name, index));
}

}  // namespace vstar
