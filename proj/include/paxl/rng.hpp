#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "paxl/hash.hpp"

namespace paxl {

// Deterministic counter-based generator. A stream is (key, counter); output i
// is mix64(key + i * odd-constant), so draws are pure functions of the stream
// key and position. Streams split by name or index never share state, which
// keeps every module's randomness independent of call order elsewhere.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : key_(mix64(seed ^ 0x5851f42d4c957f2dull)) {}

  // Child stream derived from a label; counter starts at zero.
  SplitRng split(std::string_view name) const {
    return SplitRng(FromKey{}, mix64(key_ ^ fnv1a64(name)));
  }
  SplitRng split(std::uint64_t lane) const {
    return SplitRng(FromKey{}, mix64(key_ ^ mix64(lane ^ 0xd1342543de82ef95ull)));
  }

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ull); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n) {
    // Rejection-free modulo is fine here: n is tiny relative to 2^64.
    return next_u64() % n;
  }

  // Standard normal via Box-Muller; two uniforms per draw, no cached twin.
  double next_gaussian() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
  double next_gaussian(double stddev) { return stddev * next_gaussian(); }

  std::uint64_t key() const { return key_; }

 private:
  struct FromKey {};
  SplitRng(FromKey, std::uint64_t key) : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace paxl
