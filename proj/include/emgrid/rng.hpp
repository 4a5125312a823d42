/*
 * SPDX-FileCopyrightText: Copyright 2026 The emgrid Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace emgrid {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr uint64_t mix64(uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based random stream.
///
/// Output i of a stream with key k is mix64(k + (i + 1) * 0x9e3779b97f4a7c15),
/// i.e. the SplitMix64 sequence started at state k. Streams are derived from
/// a parent key and a list of integer coordinates with `derive`, so any
/// (seed, position, split, trace) tuple addresses its own substream without
/// consuming state from any other. Normal variates use Box-Muller on two
/// 53-bit uniforms; the algorithm is fixed and does not depend on the C++
/// standard library, so generated datasets are identical across toolchains.
class CounterRng {
  public:
    static constexpr uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

    explicit constexpr CounterRng(uint64_t key) noexcept : key_(key) {}

    constexpr CounterRng derive(uint64_t coordinate) const noexcept {
        return CounterRng(mix64(key_ ^ mix64(coordinate + kGamma)));
    }

    template <typename... Coords>
    constexpr CounterRng derive(uint64_t first, Coords... rest) const noexcept {
        if constexpr (sizeof...(rest) == 0)
            return derive(first);
        else
            return derive(first).derive(static_cast<uint64_t>(rest)...);
    }

    constexpr uint64_t next_u64() noexcept {
        ++counter_;
        return mix64(key_ + counter_ * kGamma);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, bound). Uses Lemire's multiply-shift with
    /// rejection so the result is unbiased.
    uint64_t below(uint64_t bound) noexcept {
        if (bound <= 1)
            return 0;
        for (;;) {
            const uint64_t x = next_u64();
            const __uint128_t m = static_cast<__uint128_t>(x) * bound;
            const auto low = static_cast<uint64_t>(m);
            if (low >= bound || low >= (-bound) % bound)
                return static_cast<uint64_t>(m >> 64);
        }
    }

    /// Uniform integer in [lo, hi].
    int64_t between(int64_t lo, int64_t hi) noexcept {
        return lo + static_cast<int64_t>(below(static_cast<uint64_t>(hi - lo) + 1));
    }

    /// Standard normal variate. Generates pairs and caches the second one.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    void fill_bytes(std::span<uint8_t> out) noexcept {
        uint64_t word = 0;
        for (size_t i = 0; i < out.size(); ++i) {
            if (i % 8 == 0)
                word = next_u64();
            out[i] = static_cast<uint8_t>(word >> (8 * (i % 8)));
        }
    }

    /// Fisher-Yates shuffle driven by this stream.
    template <typename T> void shuffle(std::span<T> items) noexcept {
        for (size_t i = items.size(); i > 1; --i) {
            const size_t j = below(i);
            std::swap(items[i - 1], items[j]);
        }
    }

  private:
    uint64_t key_;
    uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace emgrid
