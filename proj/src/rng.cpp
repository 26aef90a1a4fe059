#include "w2s/rng.hpp"

namespace w2s {

namespace {

std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

std::string_view stream_name(Stream s) noexcept {
  switch (s) {
    case Stream::Geometry: return "geometry";
    case Stream::Init: return "init";
    case Stream::Data: return "data";
    case Stream::Weak: return "weak";
    case Stream::Oracle: return "oracle";
    case Stream::Holdout: return "holdout";
  }
  return "unknown";
}

Rng::Rng(std::uint64_t seed) : engine_(seeded_engine(seed, 0, 0)) {}

Rng::Rng(std::uint64_t seed, Stream stream, std::uint64_t index)
    : engine_(seeded_engine(seed, static_cast<std::uint64_t>(stream), index)) {}

}  // namespace w2s
