#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace sfmlp {

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based generator: the stream is a pure function of (seed, keys), so
// any substream can be reproduced in isolation regardless of iteration order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t k1 = 0,
                      std::uint64_t k2 = 0, std::uint64_t k3 = 0) {
    state_ = mix64(seed + 0x9e3779b97f4a7c15ULL);
    state_ = mix64(state_ ^ mix64(k1 + 0xbf58476d1ce4e5b9ULL));
    state_ = mix64(state_ ^ mix64(k2 + 0x94d049bb133111ebULL));
    state_ = mix64(state_ ^ mix64(k3 + 0xd6e8feb86659fd93ULL));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; the spare is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace sfmlp
