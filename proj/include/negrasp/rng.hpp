#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace negrasp {

// Counter-keyed random stream. A stream is identified by a list of 64-bit
// ids (seed, purpose tag, epoch, sample index, ...); draws then advance a
// splitmix64 state. Streams keyed the same way produce the same sequence
// regardless of thread count or call interleaving, which is what makes
// batch-parallel training and chain-parallel sampling reproducible.
class Rng {
 public:
  explicit Rng(std::initializer_list<std::uint64_t> key) {
    state_ = 0x9e3779b97f4a7c15ULL;
    for (std::uint64_t k : key) {
      state_ = mix(state_ ^ mix(k));
    }
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Standard normal via Box-Muller; second value of each pair is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // u1 in (0,1] so the log is finite.
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ULL;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Stream purpose tags, so unrelated draws never share a sequence.
enum StreamTag : std::uint64_t {
  kStreamTrainNoise = 1,
  kStreamTrainStep = 2,
  kStreamTrainMask = 3,
  kStreamChain = 4,
  kStreamSceneGen = 5,
  kStreamInit = 6,
  kStreamOracle = 7,
};

}  // namespace negrasp
