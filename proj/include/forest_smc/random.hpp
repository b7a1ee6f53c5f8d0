// Copyright 2026 The forest-smc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FOREST_SMC_RANDOM_HPP
#define FOREST_SMC_RANDOM_HPP

#include <cstdint>
#include <initializer_list>
#include <limits>

/**
 * \file
 * \brief Counter-based random streams.
 *
 * Every stream is identified by a key derived from a master seed and a tuple
 * of integer coordinates (replicate, step, purpose, particle, ...). Draws from
 * one stream never depend on how many draws were taken from another, so the
 * output of a run does not depend on the order particles are visited in.
 */

namespace forest_smc {

namespace detail {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31U);
}

}  // namespace detail

/// A SplitMix64 generator: the n-th output is a bijective hash of `key + n * golden`.
/**
 * Satisfies UniformRandomBitGenerator, so it composes with `<random>` distributions.
 */
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr CounterRng() noexcept = default;
  constexpr explicit CounterRng(std::uint64_t key) noexcept : state_{key} {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += detail::kGolden;
    return detail::mix64(state_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept { return static_cast<double>((*this)() >> 11U) * 0x1.0p-53; }

 private:
  std::uint64_t state_{0};
};

/// Stream purposes used by the engine and the experiment harness.
enum class StreamTag : std::uint64_t {
  kInit = 1,
  kParticle = 2,
  kUniforms = 3,
  kPermutation = 4,
  kReplicate = 5,
  kPilot = 6,
};

/// Derives independent CounterRng streams from a master seed.
/**
 * The key for coordinates (x1, ..., xk) is `h = mix(seed); h = mix(h ^ (xi + golden))`
 * folded left to right. Changing any coordinate yields an unrelated stream.
 */
class RngStreams {
 public:
  constexpr explicit RngStreams(std::uint64_t seed) noexcept : seed_{seed} {}

  [[nodiscard]] constexpr std::uint64_t seed() const noexcept { return seed_; }

  [[nodiscard]] constexpr std::uint64_t key(std::initializer_list<std::uint64_t> coords) const noexcept {
    std::uint64_t h = detail::mix64(seed_ + detail::kGolden);
    for (const auto x : coords) {
      h = detail::mix64(h ^ (x + detail::kGolden));
    }
    return h;
  }

  [[nodiscard]] constexpr CounterRng stream(std::initializer_list<std::uint64_t> coords) const noexcept {
    return CounterRng{key(coords)};
  }

  /// Streams for replicate `r`: a fresh RngStreams whose seed is derived from this one.
  [[nodiscard]] constexpr RngStreams replicate(std::uint64_t r) const noexcept {
    return RngStreams{key({static_cast<std::uint64_t>(StreamTag::kReplicate), r})};
  }

  [[nodiscard]] constexpr CounterRng init_stream(std::uint64_t particle) const noexcept {
    return stream({static_cast<std::uint64_t>(StreamTag::kInit), particle});
  }
  [[nodiscard]] constexpr CounterRng particle_stream(std::uint64_t step, std::uint64_t particle) const noexcept {
    return stream({static_cast<std::uint64_t>(StreamTag::kParticle), step, particle});
  }
  [[nodiscard]] constexpr CounterRng uniforms_stream(std::uint64_t step) const noexcept {
    return stream({static_cast<std::uint64_t>(StreamTag::kUniforms), step});
  }
  [[nodiscard]] constexpr CounterRng permutation_stream(std::uint64_t step) const noexcept {
    return stream({static_cast<std::uint64_t>(StreamTag::kPermutation), step});
  }

 private:
  std::uint64_t seed_;
};

}  // namespace forest_smc

#endif  // FOREST_SMC_RANDOM_HPP
