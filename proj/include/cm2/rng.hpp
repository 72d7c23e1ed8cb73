// Copyright 2026 The cm2sim Authors
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

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

// Counter-based pseudo-randomness for reproducible trajectory sampling.
// Every trajectory owns an independent stream derived from (master seed,
// trajectory index), so results do not depend on scheduling or thread count.

namespace cm2 {

/// SplitMix64 finalizer: full-avalanche 64-bit mix.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

/// SplitMix64 generator. Small state, passes BigCrush, and cheap enough to
/// construct per trajectory.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Deterministic stream seed for one trajectory: avalanche over both the
/// master seed and the trajectory index.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(mix64(master + 0x9e3779b97f4a7c15ULL) ^
               (0xbf58476d1ce4e5b9ULL * (index + 1)));
}

inline SplitMix64 trajectory_stream(std::uint64_t master, std::uint64_t index) {
  return SplitMix64(derive_seed(master, index));
}

/// Thrown when a discrete distribution has no weight left to sample.
class DegenerateDistributionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Draw an index from nonnegative weights using one uniform variate
/// u in [0, 1). Weights below `min_weight` are excluded outright, so
/// negligible branches can never be drawn.
inline int sample_index(const std::vector<double>& weights, double u,
                        double min_weight = 1e-14) {
  double total = 0.0;
  for (double w : weights)
    if (w >= min_weight) total += w;
  if (total <= 0.0)
    throw DegenerateDistributionError("sample_index: all weights below threshold");
  const double target = u * total;
  double acc = 0.0;
  int last = -1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] < min_weight) continue;
    acc += weights[i];
    last = static_cast<int>(i);
    if (target < acc) return last;
  }
  return last;  // u rounded to the top of the cumulative sum
}

}  // namespace cm2
