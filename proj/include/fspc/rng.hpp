#pragma once

#include <cstdint>
#include <random>

namespace fspc {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Counter-based child seed: a pure function of (root, index).
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) noexcept;

/// Child seed for a named purpose ("backbone", "augment", ...).
std::uint64_t derive_seed(std::uint64_t root, const char* purpose) noexcept;

inline Rng make_rng(std::uint64_t seed) { return Rng(mix64(seed)); }

}  // namespace fspc
