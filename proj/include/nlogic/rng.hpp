#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace nlogic {

// Deterministic, platform-independent RNG. All randomness in a run flows
// from one top-level seed expanded into named sub-streams, so two runs with
// the same (seed, stream) produce bit-identical sequences. std:: random
// distributions are avoided on purpose: their output differs across
// standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  // Derives an independent stream from (seed, name, a, b). Typical usage:
  // Rng::stream(seed, "dropout", epoch, example_index).
  static Rng stream(uint64_t seed, std::string_view name, uint64_t a = 0,
                    uint64_t b = 0) {
    uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the stream name
    for (char c : name) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
    uint64_t s = seed;
    s = mix(s ^ h);
    s = mix(s ^ a);
    s = mix(s ^ b);
    return Rng(s);
  }

  uint64_t next_u64() {
    state_ += 0x9E3779B97f4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller (one value per call).
  double normal(double mean = 0.0, double sd = 1.0) {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double z = std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
    return mean + sd * z;
  }

  // Uniform integer in [0, n), unbiased.
  uint64_t below(uint64_t n) {
    uint64_t lim = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= lim);
    return x % n;
  }

  bool coin() { return (next_u64() & 1u) != 0; }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  static uint64_t mix(uint64_t x) {
    x += 0x9E3779B97f4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  }

  uint64_t state_;
};

}  // namespace nlogic
