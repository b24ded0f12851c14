// Copyright 2025 The flowlab authors
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

#ifndef FLOWLAB_RNG_HPP_
#define FLOWLAB_RNG_HPP_

#include <cstdint>

namespace flowlab {

// Deterministic xoshiro256++ generator seeded through splitmix64.
// The same seed yields the same stream on every platform; independent
// streams come from derive(stream_id).
class Rng {
 public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // Derives an independent generator from (seed, stream_id).
    Rng derive(uint64_t stream_id) const;

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform();

    // Uniform in [lo, hi).
    double uniform(double lo, double hi);

    // Uniform integer in [0, n), n > 0.
    uint64_t uniform_int(uint64_t n);

    // Standard normal via Box-Muller.
    double gaussian();

    uint64_t seed() const { return seed_; }

 private:
    Rng() = default;

    uint64_t seed_ = 0;
    uint64_t state_[4] = {0, 0, 0, 0};
    double spare_gaussian_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace flowlab

#endif  // FLOWLAB_RNG_HPP_
