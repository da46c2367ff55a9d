#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace defend {

// Seedable generator whose output is identical on every platform.
//
// The engine is std::mt19937_64 (bit-exact by the standard); the
// distributions are implemented here because the standard library's
// distributions are implementation-defined. Independent streams are derived
// from (seed, name, index) so that consuming one stream never perturbs
// another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Derived stream, e.g. Rng::stream(seed, "phase1-noise", epoch).
  static Rng stream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n > 0.
  std::uint64_t uniform_int(std::uint64_t n);
  double normal();
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Uniform random permutation of {0..n-1}.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

}  // namespace defend
