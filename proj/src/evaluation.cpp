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

#include "emgrid/evaluation.hpp"

#include "emgrid/error.hpp"
#include "emgrid/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace emgrid {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<std::vector<size_t>> rows_by_position(const TraceTable &data, Split split) {
    std::vector<std::vector<size_t>> out(data.header.geometry.position_count());
    for (size_t i = 0; i < data.size(); ++i) {
        if (data.split[i] != split)
            continue;
        const size_t p = data.position[i];
        if (p >= out.size())
            fail(ErrorKind::Format, "trace position " + std::to_string(p) + " outside the grid");
        out[p].push_back(i);
    }
    return out;
}

void require_single_key(const TraceTable &data, const std::vector<size_t> &rows, size_t position) {
    for (size_t r : rows)
        if (data.key[r] != data.key[rows.front()])
            fail(ErrorKind::Precondition,
                 "traces at position " + std::to_string(position) +
                     " use more than one key; CPA needs a fixed key (simulate a fixed-key "
                     "holdout split, or use --simulate-fixed-key for first-round targets)");
}

CpaGridResult make_grid_result(const GridGeometry &g, std::string prefix) {
    CpaGridResult r;
    r.disclosure = make_heatmap(g, prefix + " traces to disclosure", kInf);
    r.average_rank = make_heatmap(g, prefix + " average key byte rank", kInf);
    r.per_position.resize(g.position_count());
    return r;
}

void store(CpaGridResult &r, size_t p, const DisclosureResult &d) {
    r.per_position[p] = d;
    r.disclosure.values[p] = d.full_key_traces ? static_cast<double>(*d.full_key_traces) : kInf;
    r.average_rank.values[p] = d.average_rank;
}

} // namespace

Heatmap evaluate_classifier_grid(const ProfilingModel &model, const TraceTable &data, Split split,
                                 unsigned threads) {
    const auto groups = rows_by_position(data, split);
    Heatmap h = make_heatmap(data.header.geometry, "mean rank", kInf);
    parallel_for(groups.size(), threads, [&](size_t p) {
        if (!groups[p].empty())
            h.values[p] = classify_attack(model, data, groups[p]).mean_rank;
    });
    return h;
}

CpaGridResult evaluate_cpa_grid(const TraceTable &data, Split split, const CpaGridOptions &options) {
    if (options.simulate_fixed_key && options.target == LeakageKind::LastRoundHD)
        fail(ErrorKind::Usage, "fixed-key simulation only applies to first-round targets");
    const auto groups = rows_by_position(data, split);
    CpaGridResult result = make_grid_result(data.header.geometry, "CPA");
    const size_t m = data.m();
    const bool use_ct = options.target == LeakageKind::LastRoundHD;

    parallel_for(groups.size(), options.threads, [&](size_t p) {
        const auto &rows = groups[p];
        if (rows.empty())
            return;
        if (!options.simulate_fixed_key)
            require_single_key(data, rows, p);
        const Block key = data.key[rows.front()];
        KeyCpa cpa(options.target, options.reduce, m);
        size_t cursor = 0;
        std::vector<Block> publics;
        std::vector<float> samples;
        auto feed = [&](uint64_t max_traces) -> uint64_t {
            const size_t count = std::min<size_t>(max_traces, rows.size() - cursor);
            publics.resize(count);
            samples.resize(count * m);
            for (size_t i = 0; i < count; ++i) {
                const size_t r = rows[cursor + i];
                Block pub = use_ct ? data.ciphertext[r] : data.plaintext[r];
                if (options.simulate_fixed_key)
                    for (size_t b = 0; b < 16; ++b)
                        pub[b] ^= data.key[r][b] ^ key[b];
                publics[i] = pub;
                const auto row = data.row(r);
                std::copy(row.begin(), row.end(), samples.begin() + static_cast<std::ptrdiff_t>(i * m));
            }
            if (count > 0)
                cpa.add(publics, std::span<const float>(samples));
            cursor += count;
            return count;
        };
        auto scores = [&] { return cpa.scores(); };
        store(result, p,
              traces_to_disclosure(feed, scores, correct_guesses(options.target, key),
                                   options.disclosure));
    });
    return result;
}

CpaGridResult evaluate_hybrid_grid(const ProfilingModel &regressor, const TraceTable &data,
                                   Split split, const DisclosureOptions &options, unsigned threads) {
    if (regressor.kind != ModelKind::HdRegressor16)
        fail(ErrorKind::Usage, "hybrid evaluation needs an hd-regressor model");
    const auto groups = rows_by_position(data, split);
    CpaGridResult result = make_grid_result(data.header.geometry, "hybrid");
    parallel_for(groups.size(), threads, [&](size_t p) {
        if (groups[p].empty())
            return;
        require_single_key(data, groups[p], p);
        store(result, p, hybrid_attack(regressor, data, groups[p], options));
    });
    return result;
}

void for_each_position_batch(const std::string &path, const FileEvaluation &how,
                             uint64_t per_position_cap,
                             const std::function<void(const TraceTable &)> &fn) {
    const DatasetHeader header = read_header(path);
    const size_t positions = header.geometry.position_count();
    std::vector<uint64_t> counts(positions, 0);
    {
        DatasetReader reader(path);
        TraceRecord rec;
        auto count = [&](uint16_t p, Split s) {
            if (s == how.split && p < positions)
                ++counts[p];
            return false;
        };
        while (reader.next_if(rec, count)) {
        }
    }
    const uint64_t row_bytes = record_size(header.m);
    size_t first = 0;
    while (first < positions) {
        size_t last = first;
        uint64_t bytes = 0;
        while (last < positions) {
            const uint64_t n = per_position_cap ? std::min(counts[last], per_position_cap) : counts[last];
            if (last > first && bytes + n * row_bytes > how.memory_budget_bytes)
                break;
            bytes += n * row_bytes;
            ++last;
        }
        uint64_t wanted = 0;
        for (size_t p = first; p < last; ++p)
            wanted += counts[p];
        if (wanted > 0) {
            std::vector<uint64_t> taken(last - first, 0);
            LoadOptions options;
            options.normalization = how.normalization;
            options.predicate = [&, first, last](uint16_t p, Split s) {
                if (s != how.split || p < first || p >= last)
                    return false;
                uint64_t &t = taken[p - first];
                if (per_position_cap && t >= per_position_cap)
                    return false;
                ++t;
                return true;
            };
            fn(load_table(path, options));
        }
        first = last;
    }
}

namespace {

void merge_into(Heatmap &dst, const Heatmap &src) {
    for (size_t p = 0; p < dst.values.size(); ++p)
        if (std::isfinite(src.values[p]))
            dst.values[p] = src.values[p];
}

void merge_into(CpaGridResult &dst, const CpaGridResult &src, const TraceTable &batch) {
    std::vector<uint8_t> present(dst.per_position.size(), 0);
    for (uint16_t p : batch.position)
        present[p] = 1;
    for (size_t p = 0; p < present.size(); ++p)
        if (present[p]) {
            dst.per_position[p] = src.per_position[p];
            dst.disclosure.values[p] = src.disclosure.values[p];
            dst.average_rank.values[p] = src.average_rank.values[p];
        }
}

} // namespace

Heatmap evaluate_classifier_grid(const ProfilingModel &model, const std::string &path,
                                 const FileEvaluation &how, unsigned threads) {
    Heatmap h = make_heatmap(read_header(path).geometry, "mean rank", kInf);
    for_each_position_batch(path, how, 0, [&](const TraceTable &batch) {
        merge_into(h, evaluate_classifier_grid(model, batch, how.split, threads));
    });
    return h;
}

CpaGridResult evaluate_cpa_grid(const std::string &path, const FileEvaluation &how,
                                const CpaGridOptions &options) {
    CpaGridResult r = make_grid_result(read_header(path).geometry, "CPA");
    for_each_position_batch(path, how, std::max<uint64_t>(1, options.disclosure.budget), [&](const TraceTable &batch) {
        merge_into(r, evaluate_cpa_grid(batch, how.split, options), batch);
    });
    return r;
}

CpaGridResult evaluate_hybrid_grid(const ProfilingModel &regressor, const std::string &path,
                                   const FileEvaluation &how, const DisclosureOptions &options,
                                   unsigned threads) {
    if (regressor.kind != ModelKind::HdRegressor16)
        fail(ErrorKind::Usage, "hybrid evaluation needs an hd-regressor model");
    CpaGridResult r = make_grid_result(read_header(path).geometry, "hybrid");
    for_each_position_batch(path, how, std::max<uint64_t>(1, options.budget), [&](const TraceTable &batch) {
        merge_into(r, evaluate_hybrid_grid(regressor, batch, how.split, options, threads), batch);
    });
    return r;
}

HeatmapComparison compare_heatmaps(const Heatmap &a, const Heatmap &b) {
    const GridGeometry &ga = a.geometry;
    const GridGeometry &gb = b.geometry;
    if (ga.nx != gb.nx || ga.ny != gb.ny || ga.nz != gb.nz || a.values.size() != b.values.size())
        fail(ErrorKind::Usage, "heatmaps have different grid shapes");
    HeatmapComparison c;
    c.wins.resize(a.values.size(), 0);
    double diff = 0.0;
    size_t finite = 0;
    for (size_t p = 0; p < a.values.size(); ++p) {
        const double x = a.values[p];
        const double y = b.values[p];
        if (x < y) {
            c.wins[p] = 1;
            ++c.a_better;
        } else if (y < x) {
            c.wins[p] = -1;
            ++c.b_better;
        } else {
            ++c.ties;
            if (std::isinf(x) && std::isinf(y))
                ++c.infinite_ties;
        }
        if (std::isfinite(x) && std::isfinite(y)) {
            diff += x - y;
            ++finite;
        }
    }
    c.fraction_a_better =
        a.values.empty() ? 0.0 : static_cast<double>(c.a_better) / static_cast<double>(a.values.size());
    c.mean_difference =
        finite ? diff / static_cast<double>(finite) : std::numeric_limits<double>::quiet_NaN();
    return c;
}

SnrGridResult snr_grid(const std::string &path, const LeakageModel &target, Split split,
                       unsigned threads, size_t memory_budget_bytes) {
    const DatasetHeader header = read_header(path);
    const GridGeometry &g = header.geometry;
    const size_t positions = g.position_count();
    const size_t m = header.m;
    const size_t per_position = kCandidates * m * 2 * sizeof(double);
    const size_t batch = std::max<size_t>(1, memory_budget_bytes / std::max<size_t>(1, per_position));

    SnrGridResult result;
    result.peak_snr = make_heatmap(g, "peak SNR", std::numeric_limits<double>::quiet_NaN());
    result.peak_sample.assign(positions, 0);
    uint64_t seen = 0;

    for (size_t first = 0; first < positions; first += batch) {
        const size_t last = std::min(positions, first + batch);
        std::vector<std::optional<SnrAccumulator>> acc(last - first);
        DatasetReader reader(path);
        TraceRecord rec;
        auto pred = [&](uint16_t p, Split s) { return s == split && p >= first && p < last; };
        while (reader.next_if(rec, pred)) {
            auto &slot = acc[rec.position_index - first];
            if (!slot)
                slot.emplace(kCandidates, m);
            slot->update(true_intermediate(target, rec.plaintext, rec.key), rec.samples);
            ++seen;
        }
        parallel_for(acc.size(), threads, [&](size_t i) {
            if (!acc[i])
                return;
            const std::vector<double> snr = acc[i]->finalize();
            const auto it = std::max_element(snr.begin(), snr.end());
            result.peak_snr.values[first + i] = *it;
            result.peak_sample[first + i] = static_cast<size_t>(it - snr.begin());
        });
    }
    if (seen == 0)
        fail(ErrorKind::Usage, "dataset '" + path + "' has no " + std::string(to_string(split)) +
                                   " traces");
    return result;
}

} // namespace emgrid
