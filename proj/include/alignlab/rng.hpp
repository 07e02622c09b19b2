#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace alignlab {

/// Counter-based generator: output i is a SplitMix64 finalisation of
/// key + i * gamma. The full state is (key, counter), so streams can be
/// split by purpose tag, serialized, and resumed exactly.
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t key, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

  /// Independent stream derived from a master seed and a purpose tag.
  static Rng stream(std::uint64_t master_seed, std::string_view tag);
  /// Sub-stream of this generator's key; does not advance *this.
  [[nodiscard]] Rng split(std::string_view tag) const;
  [[nodiscard]] Rng split(std::uint64_t index) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller; consumes exactly two draws.
  double normal();
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  bool coin() { return (next_u64() >> 63) != 0; }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  /// Uniform direction on the unit sphere of R^d.
  std::vector<double> unit_vector(std::size_t d);

  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] std::uint64_t counter() const { return counter_; }
  bool operator==(const Rng&) const = default;

 private:
  std::uint64_t key_ = 0x853c49e6748fea9bULL;
  std::uint64_t counter_ = 0;
};

std::uint64_t hash_tag(std::string_view tag);
std::uint64_t mix64(std::uint64_t z);

}  // namespace alignlab
