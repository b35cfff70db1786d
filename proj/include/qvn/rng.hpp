// Copyright 2026 The qvn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>

#include "qvn/error.hpp"

namespace qvn {

/// Deterministic random stream identified by (seed, stream_id).
///
/// Two streams with the same pair produce the same sequence on every
/// platform: the engine is std::mt19937_64 (fully specified by the standard)
/// and all derived variates are computed here rather than through the
/// implementation-defined std:: distributions.
class RngStream {
   public:
    explicit RngStream(std::uint64_t seed = 0, std::uint64_t stream_id = 0)
        : seed_(seed), stream_id_(stream_id), engine_(mix(seed, stream_id)) {
    }

    std::uint64_t seed() const noexcept {
        return seed_;
    }
    std::uint64_t stream_id() const noexcept {
        return stream_id_;
    }

    /// Child stream for sub-task `index`; independent of how much of this
    /// stream has been consumed.
    RngStream substream(std::uint64_t index) const {
        return RngStream(mix(seed_, stream_id_), index);
    }

    std::uint64_t next_u64() {
        return engine_();
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) {
            throw ArgumentError("uniform_index: empty range");
        }
        // Rejection sampling keeps the result exactly uniform.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Standard normal variate (Box-Muller, one value per call).
    double normal() {
        double u1;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Index k drawn with probability weights[k] / sum(weights).
    std::size_t sample_discrete(std::span<const double> weights) {
        double total = 0.0;
        for (double w : weights) {
            total += w;
        }
        if (!(total > 0.0)) {
            throw NumericalError("sample_discrete: all weights vanish");
        }
        const double r = uniform() * total;
        double acc = 0.0;
        std::size_t last_positive = 0;
        for (std::size_t k = 0; k < weights.size(); ++k) {
            if (weights[k] <= 0.0) {
                continue;
            }
            last_positive = k;
            acc += weights[k];
            if (r < acc) {
                return k;
            }
        }
        return last_positive;
    }

   private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        return splitmix(splitmix(seed) ^ (stream * 0xD1B54A32D192ED03ull + 0x8CB92BA72F3D8DD7ull));
    }

    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
};

}  // namespace qvn
