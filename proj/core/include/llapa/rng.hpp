#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace llapa {

/// Counter-based generator: value i of the stream is a SplitMix64 finalizer
/// applied to (seed, i). No state besides the counter, so streams are identical
/// on every platform and a generator can be forked without consuming draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();   // standard normal via Box-Muller
  std::size_t uniform_int(std::size_t n);  // [0, n)
  bool bernoulli(double p) { return uniform() < p; }

  // Independent stream keyed by `stream`; does not advance this generator.
  Rng fork(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform_int(i)]);
    }
  }

  template <typename T>
  const T& pick(const std::vector<T>& items) {
    return items[uniform_int(items.size())];
  }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace llapa
