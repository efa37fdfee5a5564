#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace conure {

// Seeded RNG with explicitly constructed deterministic draws. The standard
// distributions are implementation-defined, so uniforms and gaussians are
// built by hand from raw mt19937_64 output; a stream state serializes and
// restores exactly (checkpoints carry it).
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) built from the top 53 bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Box-Muller with cached spare.
  double normal(double mean, double stddev);

  // Unbiased integer in [0, n) via rejection.
  std::int64_t below(std::int64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(static_cast<std::int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Derives an independent child stream; does not disturb this stream.
  Rng fork(std::uint64_t salt) const;

  std::string serialize() const;
  void restore(const std::string& text);

  bool operator==(const Rng& other) const;

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace conure
