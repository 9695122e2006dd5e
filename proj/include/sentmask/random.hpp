#ifndef SENTMASK_RANDOM_HPP
#define SENTMASK_RANDOM_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sentmask {

// Seeded generator whose derived draws are identical on every standard
// library: only the engine (fully specified by the standard) is used, and all
// conversions to uniform reals and bounded integers are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform on [0, n) by rejection, n >= 1.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

  // Derives an independent stream for a named purpose.
  Rng fork(std::uint64_t salt) {
    return Rng(engine_() ^ (salt * 0x9E3779B97F4A7C15ULL));
  }

  std::string state() const;
  void set_state(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

}  // namespace sentmask

#endif  // SENTMASK_RANDOM_HPP
