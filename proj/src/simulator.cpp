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

#include "emgrid/simulator.hpp"

#include "emgrid/error.hpp"
#include "emgrid/leakage.hpp"
#include "emgrid/parallel.hpp"

#include "json_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace emgrid::sim {

using nlohmann::json;

namespace {

constexpr uint64_t kDeviceBSalt = 0x6465766963652d62ULL;
constexpr size_t kChunkTraces = 1024;

std::string_view target_name(SourceTarget t) {
    switch (t) {
    case SourceTarget::FirstRoundSboxInput:
        return "sbox-in";
    case SourceTarget::FirstRoundSboxOutput:
        return "sbox-out";
    case SourceTarget::LastRoundHDTrue:
        return "last-round-hd-true";
    }
    return "?";
}

void check_keys(const json &j, const char *where, std::initializer_list<const char *> allowed) {
    if (!j.is_object())
        fail(ErrorKind::Usage, std::string(where) + " must be an object");
    for (const auto &[k, v] : j.items()) {
        (void)v;
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char *a) { return k == a; }))
            fail(ErrorKind::Usage, "unknown key '" + k + "' in " + where);
    }
}

Point point_from_json(const json &j, const char *what) {
    if (!j.is_array() || j.size() != 3)
        fail(ErrorKind::Usage, std::string(what) + " must be a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

LeakSource source_from_json(const json &j) {
    check_keys(j, "source",
               {"position_mm", "sample_indices", "sample_range", "target", "byte_index",
                "amplitude"});
    LeakSource s;
    s.position_mm = point_from_json(j.at("position_mm"), "position_mm");
    if (j.contains("sample_indices"))
        s.sample_indices = j.at("sample_indices").get<std::vector<uint32_t>>();
    if (j.contains("sample_range")) {
        const auto r = j.at("sample_range").get<std::vector<uint32_t>>();
        if (r.size() != 2 || r[0] >= r[1])
            fail(ErrorKind::Usage, "sample_range must be [first, end) with first < end");
        for (uint32_t t = r[0]; t < r[1]; ++t)
            s.sample_indices.push_back(t);
    }
    s.target = parse_source_target(j.at("target").get<std::string>());
    s.byte_index = j.value("byte_index", 0u);
    s.amplitude = j.value("amplitude", 1.0);
    return s;
}

DeviceProfile device_from_json(const json &j) {
    check_keys(j, "device",
               {"gain", "offset", "noise_sigma", "jitter_max", "adc_bits", "adc_range",
                "axis_flip_y"});
    DeviceProfile d;
    d.gain = j.value("gain", d.gain);
    d.offset = j.value("offset", d.offset);
    d.noise_sigma = j.value("noise_sigma", d.noise_sigma);
    d.jitter_max = j.value("jitter_max", d.jitter_max);
    d.adc_bits = j.value("adc_bits", d.adc_bits);
    if (j.contains("adc_range")) {
        const auto r = j.at("adc_range").get<std::vector<double>>();
        if (r.size() != 2)
            fail(ErrorKind::Usage, "adc_range must be [low, high]");
        d.adc_range = {r[0], r[1]};
    }
    d.axis_flip_y = j.value("axis_flip_y", d.axis_flip_y);
    return d;
}

Perturbation perturbation_from_json(const json &j) {
    check_keys(j, "perturbation",
               {"probe_origin_shift_mm", "gain_factor", "extra_noise", "jitter_delta"});
    Perturbation p;
    if (j.contains("probe_origin_shift_mm"))
        p.probe_origin_shift_mm =
            point_from_json(j.at("probe_origin_shift_mm"), "probe_origin_shift_mm");
    p.gain_factor = j.value("gain_factor", p.gain_factor);
    p.extra_noise = j.value("extra_noise", p.extra_noise);
    p.jitter_delta = j.value("jitter_delta", p.jitter_delta);
    return p;
}

} // namespace

SourceTarget parse_source_target(const std::string &name) {
    for (auto t : {SourceTarget::FirstRoundSboxInput, SourceTarget::FirstRoundSboxOutput,
                   SourceTarget::LastRoundHDTrue})
        if (name == target_name(t))
            return t;
    fail(ErrorKind::Usage,
         "unknown source target '" + name + "' (expected sbox-in, sbox-out, last-round-hd-true)");
}

void SimConfig::validate() const {
    geometry.validate();
    if (m == 0)
        fail(ErrorKind::Usage, "m must be positive");
    if (!(device.gain > 0.0) || !std::isfinite(device.gain))
        fail(ErrorKind::Usage, "device gain must be positive");
    if (!(device.noise_sigma >= 0.0) || !std::isfinite(device.noise_sigma))
        fail(ErrorKind::Usage, "noise_sigma must be non-negative");
    if (!std::isfinite(device.offset))
        fail(ErrorKind::Usage, "device offset must be finite");
    if (device.adc_bits != 0 && device.adc_bits != 8 && device.adc_bits != 12)
        fail(ErrorKind::Usage, "adc_bits must be 0, 8 or 12");
    if (!(device.adc_range[0] < device.adc_range[1]))
        fail(ErrorKind::Usage, "adc_range must satisfy low < high");
    if (device.jitter_max >= m)
        fail(ErrorKind::Usage, "jitter_max must be smaller than m");
    if (!(background.period_samples > 0.0))
        fail(ErrorKind::Usage, "background period must be positive");
    for (size_t i = 0; i < sources.size(); ++i) {
        const LeakSource &s = sources[i];
        const std::string at = "source " + std::to_string(i) + ": ";
        if (s.sample_indices.empty())
            fail(ErrorKind::Usage, at + "needs at least one sample index");
        for (uint32_t t : s.sample_indices)
            if (t >= m)
                fail(ErrorKind::Usage, at + "sample index " + std::to_string(t) + " >= m");
        if (s.byte_index >= 16)
            fail(ErrorKind::Usage, at + "byte_index must be in 0..15");
        if (!(s.amplitude > 0.0) || !std::isfinite(s.amplitude))
            fail(ErrorKind::Usage, at + "amplitude must be positive");
    }
}

DatasetHeader SimConfig::header() const {
    DatasetHeader h;
    h.geometry = geometry;
    h.m = m;
    h.trace_count = traces.total() * geometry.position_count();
    h.description = description;
    h.adc_bits = device.adc_bits;
    return h;
}

double coupling_weight(const Point &source_mm, const Point &probe_mm) {
    const double dx = source_mm[0] - probe_mm[0];
    const double dy = source_mm[1] - probe_mm[1];
    const double dz = source_mm[2] - probe_mm[2];
    const double d = std::max(std::sqrt(dx * dx + dy * dy + dz * dz), kMinDistanceMm);
    return 1.0 / (d * d);
}

Point probe_position(const SimConfig &config, size_t position_index) {
    const GridGeometry &g = config.geometry;
    GridGeometry::Cell c = g.cell(position_index);
    if (config.device.axis_flip_y)
        c.iy = g.ny - 1 - c.iy;
    return {g.origin_mm[0] + c.ix * g.step_mm, g.origin_mm[1] + c.iy * g.step_mm,
            g.origin_mm[2] + c.iz * g.z_step_mm};
}

unsigned source_value(const LeakSource &source, const Block &plaintext, const Block &key) {
    switch (source.target) {
    case SourceTarget::FirstRoundSboxInput:
        return hamming_weight(plaintext[source.byte_index] ^ key[source.byte_index]);
    case SourceTarget::FirstRoundSboxOutput:
        return hamming_weight(kSbox[plaintext[source.byte_index] ^ key[source.byte_index]]);
    case SourceTarget::LastRoundHDTrue: {
        const TracedEncryption enc = aes128_encrypt_traced(plaintext, key);
        const unsigned i = source.byte_index;
        return hamming_weight(enc.round9_state[i] ^ enc.ciphertext[i]);
    }
    }
    return 0;
}

TraceRecord simulate_trace(const SimConfig &config, size_t position_index, const Block &plaintext,
                           const Block &key, CounterRng &rng, Split split) {
    if (position_index >= config.geometry.position_count())
        fail(ErrorKind::Usage, "position index " + std::to_string(position_index) +
                                   " outside the grid");
    const size_t m = config.m;
    const DeviceProfile &dev = config.device;

    TraceRecord rec;
    rec.position_index = static_cast<uint16_t>(position_index);
    rec.split = split;
    rec.key = key;
    rec.plaintext = plaintext;
    const TracedEncryption enc = aes128_encrypt_traced(plaintext, key);
    rec.ciphertext = enc.ciphertext;

    const int64_t jitter =
        dev.jitter_max > 0 ? rng.between(-int64_t{dev.jitter_max}, int64_t{dev.jitter_max}) : 0;

    std::vector<double> signal(m, 0.0);
    const Background &bg = config.background;
    if (bg.amplitude != 0.0) {
        const double omega = 2.0 * std::numbers::pi / bg.period_samples;
        for (size_t t = 0; t < m; ++t)
            signal[t] = bg.amplitude * std::sin(omega * static_cast<double>(t) + bg.phase);
    }
    const Point probe = probe_position(config, position_index);
    for (const LeakSource &s : config.sources) {
        unsigned value;
        if (s.target == SourceTarget::LastRoundHDTrue)
            value = hamming_weight(enc.round9_state[s.byte_index] ^ enc.ciphertext[s.byte_index]);
        else
            value = source_value(s, plaintext, key);
        const double contribution = coupling_weight(s.position_mm, probe) * s.amplitude * value;
        for (uint32_t idx : s.sample_indices) {
            const int64_t t = int64_t{idx} + jitter;
            if (t >= 0 && t < static_cast<int64_t>(m))
                signal[static_cast<size_t>(t)] += contribution;
        }
    }

    rec.samples.resize(m);
    const double levels = dev.adc_bits > 0 ? std::ldexp(1.0, dev.adc_bits) : 0.0;
    const double lo = dev.adc_range[0];
    const double span = dev.adc_range[1] - dev.adc_range[0];
    for (size_t t = 0; t < m; ++t) {
        double v = dev.offset + dev.gain * signal[t];
        if (dev.noise_sigma > 0.0)
            v += dev.noise_sigma * rng.normal();
        if (dev.adc_bits > 0) {
            const double code = std::round((v - lo) / span * (levels - 1.0));
            v = std::clamp(code, 0.0, levels - 1.0);
        }
        rec.samples[t] = static_cast<float>(v);
    }
    return rec;
}

TraceRecord simulate_record(const SimConfig &config, size_t position, Split split,
                            uint64_t index) {
    CounterRng rng = CounterRng(config.seed).derive(position, static_cast<uint64_t>(split), index);
    Block key{};
    Block plaintext{};
    if (config.fixed_key && (split == Split::Holdout || config.fixed_key_all_splits))
        key = *config.fixed_key;
    else
        rng.fill_bytes(key);
    rng.fill_bytes(plaintext);
    return simulate_trace(config, position, plaintext, key, rng, split);
}

void simulate_grid_dataset(const SimConfig &config, const std::string &path, unsigned threads) {
    config.validate();
    struct Chunk {
        size_t position;
        Split split;
        uint64_t begin, end;
    };
    std::vector<Chunk> chunks;
    for (size_t p = 0; p < config.geometry.position_count(); ++p)
        for (Split s : {Split::Train, Split::Test, Split::Holdout})
            for (uint64_t b = 0; b < config.traces.of(s); b += kChunkTraces)
                chunks.push_back({p, s, b, std::min(b + kChunkTraces, config.traces.of(s))});

    DatasetWriter writer(path, config.header());
    const size_t group = std::max<size_t>(1, threads) * 2;
    std::vector<std::vector<TraceRecord>> out(group);
    for (size_t first = 0; first < chunks.size(); first += group) {
        const size_t count = std::min(group, chunks.size() - first);
        parallel_for(count, threads, [&](size_t k) {
            const Chunk &c = chunks[first + k];
            auto &records = out[k];
            records.clear();
            for (uint64_t i = c.begin; i < c.end; ++i)
                records.push_back(simulate_record(config, c.position, c.split, i));
        });
        for (size_t k = 0; k < count; ++k)
            for (const TraceRecord &r : out[k])
                writer.write(r);
    }
    writer.finish();
}

SimConfig derive_device_b(const SimConfig &config, const Perturbation &perturbation) {
    SimConfig b = config;
    b.seed = mix64(config.seed ^ kDeviceBSalt);
    for (size_t i = 0; i < 3; ++i)
        b.geometry.origin_mm[i] += perturbation.probe_origin_shift_mm[i];
    b.device.gain *= perturbation.gain_factor;
    b.device.noise_sigma *= 1.0 + perturbation.extra_noise;
    const int64_t jitter = int64_t{config.device.jitter_max} + perturbation.jitter_delta;
    b.device.jitter_max = static_cast<uint32_t>(std::max<int64_t>(0, jitter));
    return b;
}

ConfigFile parse_config(const std::string &text) {
    ConfigFile file;
    SimConfig &c = file.config;
    try {
        const json j = json::parse(text);
        check_keys(j, "config",
                   {"geometry", "m", "description", "seed", "fixed_key", "fixed_key_all_splits",
                    "traces_per_position", "device", "background", "sources", "perturbation"});
        c.geometry = detail::geometry_from_json(j.at("geometry"));
        c.m = j.at("m").get<uint32_t>();
        c.description = j.value("description", std::string{});
        c.seed = j.value("seed", uint64_t{0});
        if (j.contains("fixed_key") && !j.at("fixed_key").is_null())
            c.fixed_key = parse_block_hex(j.at("fixed_key").get<std::string>());
        c.fixed_key_all_splits = j.value("fixed_key_all_splits", false);
        const json &tp = j.at("traces_per_position");
        check_keys(tp, "traces_per_position", {"train", "test", "holdout"});
        c.traces.train = tp.value("train", uint64_t{0});
        c.traces.test = tp.value("test", uint64_t{0});
        c.traces.holdout = tp.value("holdout", uint64_t{0});
        if (j.contains("device"))
            c.device = device_from_json(j.at("device"));
        if (j.contains("background")) {
            const json &bg = j.at("background");
            check_keys(bg, "background", {"amplitude", "period_samples", "phase"});
            c.background.amplitude = bg.value("amplitude", 0.0);
            c.background.period_samples = bg.value("period_samples", 62.5);
            c.background.phase = bg.value("phase", 0.0);
        }
        if (j.contains("sources"))
            for (const json &s : j.at("sources"))
                c.sources.push_back(source_from_json(s));
        if (j.contains("perturbation"))
            file.perturbation = perturbation_from_json(j.at("perturbation"));
    } catch (const json::exception &e) {
        fail(ErrorKind::Usage, std::string("invalid config: ") + e.what());
    } catch (const Error &e) {
        fail(ErrorKind::Usage, std::string("invalid config: ") + e.what());
    }
    c.validate();
    return file;
}

ConfigFile load_config(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorKind::Usage, "cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string to_json(const SimConfig &c) {
    json sources = json::array();
    for (const LeakSource &s : c.sources)
        sources.push_back({{"position_mm", s.position_mm},
                           {"sample_indices", s.sample_indices},
                           {"target", target_name(s.target)},
                           {"byte_index", s.byte_index},
                           {"amplitude", s.amplitude}});
    json j{{"geometry", detail::geometry_to_json(c.geometry)},
           {"m", c.m},
           {"description", c.description},
           {"seed", c.seed},
           {"fixed_key_all_splits", c.fixed_key_all_splits},
           {"traces_per_position",
            {{"train", c.traces.train}, {"test", c.traces.test}, {"holdout", c.traces.holdout}}},
           {"device",
            {{"gain", c.device.gain},
             {"offset", c.device.offset},
             {"noise_sigma", c.device.noise_sigma},
             {"jitter_max", c.device.jitter_max},
             {"adc_bits", c.device.adc_bits},
             {"adc_range", c.device.adc_range},
             {"axis_flip_y", c.device.axis_flip_y}}},
           {"background",
            {{"amplitude", c.background.amplitude},
             {"period_samples", c.background.period_samples},
             {"phase", c.background.phase}}},
           {"sources", sources}};
    if (c.fixed_key)
        j["fixed_key"] = to_hex(*c.fixed_key);
    return j.dump(2);
}

} // namespace emgrid::sim
