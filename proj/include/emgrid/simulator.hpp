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

#include "emgrid/rng.hpp"
#include "emgrid/trace_model.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

/// Synthetic EM capture rig.
///
/// A trace recorded with the probe at grid position p is
///
///   offset + gain * (background(t) + sum_s w(s, p) * amplitude_s * leak_s(t))
///          + N(0, noise_sigma^2)
///
/// optionally quantized to an ADC code, where w is the inverse-square
/// coupling between source and probe and leak_s is the Hamming weight (or
/// true last-round Hamming distance) of the source's intermediate, present
/// at the source's sample indices shifted by the per-trace jitter.
namespace emgrid::sim {

using Point = std::array<double, 3>;

/// Probe-to-source distances below this are clamped, in millimeters.
constexpr double kMinDistanceMm = 0.05;

enum class SourceTarget { FirstRoundSboxInput, FirstRoundSboxOutput, LastRoundHDTrue };

struct LeakSource {
    Point position_mm{0.0, 0.0, 0.0};
    std::vector<uint32_t> sample_indices;
    SourceTarget target = SourceTarget::FirstRoundSboxInput;
    unsigned byte_index = 0;
    double amplitude = 1.0;

    bool operator==(const LeakSource &) const = default;
};

struct DeviceProfile {
    double gain = 1.0;
    double offset = 0.0;
    double noise_sigma = 0.0;
    uint32_t jitter_max = 0;
    int adc_bits = 0; ///< 0 disables quantization
    std::array<double, 2> adc_range{-1.0, 1.0};
    bool axis_flip_y = false;

    bool operator==(const DeviceProfile &) const = default;
};

/// Deterministic clock carrier. The default period is the 625 MS/s sample
/// rate over a 10 MHz clock.
struct Background {
    double amplitude = 0.0;
    double period_samples = 62.5;
    double phase = 0.0;

    bool operator==(const Background &) const = default;
};

struct TracesPerPosition {
    uint64_t train = 0;
    uint64_t test = 0;
    uint64_t holdout = 0;

    uint64_t total() const { return train + test + holdout; }
    uint64_t of(Split s) const {
        return s == Split::Train ? train : s == Split::Test ? test : holdout;
    }
    bool operator==(const TracesPerPosition &) const = default;
};

struct SimConfig {
    GridGeometry geometry;
    uint32_t m = 1000;
    std::vector<LeakSource> sources;
    DeviceProfile device;
    Background background;
    uint64_t seed = 0;
    /// Key of every holdout trace; also of train/test when
    /// fixed_key_all_splits is set. Random per trace otherwise.
    std::optional<Block> fixed_key;
    bool fixed_key_all_splits = false;
    TracesPerPosition traces;
    std::string description;

    /// Throws Error(Usage) on inconsistent settings.
    void validate() const;
    DatasetHeader header() const;
    bool operator==(const SimConfig &) const = default;
};

struct Perturbation {
    Point probe_origin_shift_mm{0.0, 0.0, 0.0};
    double gain_factor = 1.0;
    /// Relative increase of the noise standard deviation (0.2 means +20%).
    double extra_noise = 0.0;
    int jitter_delta = 0;
};

double coupling_weight(const Point &source_mm, const Point &probe_mm);

/// Physical probe location of a grid position, honoring axis_flip_y.
Point probe_position(const SimConfig &config, size_t position_index);

/// Emitted leakage value of a source for one encryption.
unsigned source_value(const LeakSource &source, const Block &plaintext, const Block &key);

/// Draw order from `rng`: jitter (if jitter_max > 0), then one normal per
/// sample (if noise_sigma > 0).
TraceRecord simulate_trace(const SimConfig &config, size_t position_index, const Block &plaintext,
                           const Block &key, CounterRng &rng, Split split = Split::Train);

/// Trace `index` of `split` at `position`, drawn from its own substream.
TraceRecord simulate_record(const SimConfig &config, size_t position, Split split, uint64_t index);

/// Writes positions in index order, and within a position the train, test
/// and holdout splits in that order. Output bytes do not depend on
/// `threads`.
void simulate_grid_dataset(const SimConfig &config, const std::string &path, unsigned threads = 1);

/// Same configuration observed by a second rig: independent seed, shifted
/// grid origin, scaled gain, extra noise and jitter. Sources are unchanged.
SimConfig derive_device_b(const SimConfig &config, const Perturbation &perturbation);

struct ConfigFile {
    SimConfig config;
    std::optional<Perturbation> perturbation;
};

/// Parses the JSON config format documented in the README. Throws
/// Error(Usage) on schema violations.
ConfigFile parse_config(const std::string &text);
ConfigFile load_config(const std::string &path);
std::string to_json(const SimConfig &config);

SourceTarget parse_source_target(const std::string &name);

} // namespace emgrid::sim
