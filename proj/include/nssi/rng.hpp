#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace nssi {

// splitmix64 finalizer; used to derive independent sub-seeds from a root seed.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index = 0);

// Seeded generator with distribution code written out so streams do not depend
// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix_seed(seed)) {}

  std::uint64_t next() { return engine_(); }
  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);
  double normal();                         // N(0, 1), Box-Muller
  std::size_t below(std::size_t n);        // uniform integer in [0, n)
  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nssi
