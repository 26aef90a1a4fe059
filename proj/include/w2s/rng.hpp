#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace w2s {

/// Named sub-streams derived from one run seed. Geometry can be held fixed
/// while the data stream varies, and per-neuron init streams do not depend on
/// how neurons are scheduled.
enum class Stream : std::uint64_t {
  Geometry = 1,
  Init = 2,
  Data = 3,
  Weak = 4,
  Oracle = 5,
  Holdout = 6,
};

std::string_view stream_name(Stream s) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0);

  double gaussian() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  /// +1 or -1 with equal probability.
  double sign() { return (engine_() >> 63) ? 1.0 : -1.0; }
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace w2s
