#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace rada {

/// Fixed identifiers for the independent random streams of a run.
enum class Stream : std::uint64_t {
  Data = 1,
  Init = 2,
  Shuffle = 3,
  Mixup = 4,
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t stream_seed(std::uint64_t master_seed, Stream stream);

/// mt19937_64 with distribution code written out here, so draws are identical
/// across standard libraries (std:: distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  Rng(std::uint64_t master_seed, Stream stream)
      : engine_(stream_seed(master_seed, stream)) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  /// Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();

  std::string save_state() const;
  void load_state(std::string_view state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rada
