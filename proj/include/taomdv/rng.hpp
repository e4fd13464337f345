#pragma once

// Deterministic random streams. A run derives one named substream per
// (sender, receiver, purpose) triple from the master seed, so the draw
// sequence seen by any link is independent of event interleaving elsewhere.

#include <cstdint>
#include <random>

namespace taomdv {

inline std::uint64_t splitmix64_once(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// mt19937_64 is fully specified by the standard, and the [0,1) mapping below
// avoids std::uniform_real_distribution (implementation-defined output), so
// identical seeds reproduce identical draws on every platform.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

inline std::uint64_t substream_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b, std::uint64_t purpose) {
  std::uint64_t h = splitmix64_once(master);
  h = splitmix64_once(h ^ (a * 0xA24BAED4963EE407ull));
  h = splitmix64_once(h ^ (b * 0x9FB21C651E98DF25ull));
  h = splitmix64_once(h ^ (purpose * 0xD6E8FEB86659FD93ull));
  return h;
}

namespace substream {
constexpr std::uint64_t kDataLoss = 1;
constexpr std::uint64_t kControlLoss = 2;
}  // namespace substream

}  // namespace taomdv
