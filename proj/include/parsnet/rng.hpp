#pragma once

#include <cstdint>
#include <random>

namespace parsnet {

using Rng = std::mt19937_64;

// Derives an independent stream from a parent seed so that sub-components
// (network init, masking, augmentation, label masks) do not share state.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

} // namespace parsnet
