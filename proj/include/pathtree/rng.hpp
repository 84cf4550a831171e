#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace pathtree {

// Counter-based generator built on the splitmix64 finalizer. Output i of a
// stream with key k is mix(k + i * GOLDEN), so draws are a pure function of
// (key, counter): streams can be split per slide / per epoch and produce the
// same values regardless of generation order.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Derives an independent child stream.
  Rng stream(std::uint64_t id) const {
    return Rng(mix(key_ ^ mix(id + kGolden)));
  }
  Rng stream(std::string_view label) const { return stream(fnv1a(label)); }

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }

  // Uniform in [0, 1).
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Inclusive bounds.
  int next_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Box-Muller, cosine branch only; two uniforms per variate.
  double next_normal() {
    const double u1 = 1.0 - next_double();  // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001B3ull;
    }
    return h;
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
  static constexpr double kPi = 3.141592653589793238462643383279502884;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace pathtree
