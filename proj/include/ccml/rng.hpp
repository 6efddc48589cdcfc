#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace ccml {

// Counter-based generator with cheap stream splitting. A stream derived via
// stream() is decoupled from the parent's counter, so independent consumers
// (covariate draws, noise draws, MC sampling, ...) can each own a substream
// and no consumer's draw count perturbs another's sequence.
class SplitRng {
 public:
  explicit SplitRng(std::uint64_t seed) : key_(mix(seed + kGamma)) {}

  // Derives an independent substream keyed by tag; the parent is unchanged.
  SplitRng stream(std::uint64_t tag) const {
    SplitRng child(*this);
    child.key_ = mix(key_ ^ mix(tag * kGamma + 0x632be59bd9b4e019ull));
    child.ctr_ = 0;
    return child;
  }

  SplitRng stream(std::string_view name) const { return stream(fnv1a(name)); }

  std::uint64_t next_u64() {
    ++ctr_;
    return mix(key_ + ctr_ * kGamma);
  }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; consumes exactly two uniforms per draw.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  // Uniform integer in [0, n), n >= 1.
  int uniform_int(int n) {
    return static_cast<int>((static_cast<unsigned __int128>(next_u64()) *
                             static_cast<unsigned __int128>(n)) >>
                            64);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;
  static constexpr double kPi = 3.14159265358979323846;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    return h;
  }

  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
};

// Fisher-Yates; deterministic given the rng state.
void shuffle(std::vector<int>& values, SplitRng& rng);

std::vector<int> shuffled_indices(int n, SplitRng& rng);

}  // namespace ccml
