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

#include "emgrid/distinguishers.hpp"
#include "emgrid/heatmap.hpp"
#include "emgrid/leakage.hpp"
#include "emgrid/profiler.hpp"
#include "emgrid/trace_model.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace emgrid {

/// Mean rank of the model's true label per position over `split`. Cells
/// without traces are +infinity.
Heatmap evaluate_classifier_grid(const ProfilingModel &model, const TraceTable &data, Split split,
                                 unsigned threads = 1);

struct CpaGridOptions {
    LeakageKind target = LeakageKind::FirstRoundSboxOutput;
    Reduce reduce = Reduce::HammingWeight;
    DisclosureOptions disclosure;
    /// For first-round targets: re-express every trace under the first
    /// trace's key by XORing the key difference into the plaintext. The
    /// targeted intermediate is unchanged, so random-key splits can be
    /// attacked as if the key were fixed.
    bool simulate_fixed_key = false;
    unsigned threads = 1;
};

struct CpaGridResult {
    Heatmap disclosure; ///< traces to full-key disclosure, +inf if never
    Heatmap average_rank;
    std::vector<DisclosureResult> per_position;
};

/// Cumulative CPA per position in file order. Cells without traces are
/// +infinity in both maps. Throws Error(Precondition) when a position's
/// traces do not share one key (unless simulate_fixed_key applies).
CpaGridResult evaluate_cpa_grid(const TraceTable &data, Split split, const CpaGridOptions &options);

/// As evaluate_cpa_grid with hybrid_attack as the engine.
CpaGridResult evaluate_hybrid_grid(const ProfilingModel &regressor, const TraceTable &data,
                                   Split split, const DisclosureOptions &options,
                                   unsigned threads = 1);

/// Streaming front end for the grid evaluators. Positions are read from
/// the file in groups whose traces fit `memory_budget_bytes`; a position
/// larger than the budget is loaded on its own.
struct FileEvaluation {
    Split split = Split::Holdout;
    std::optional<NormalizationParams> normalization;
    size_t memory_budget_bytes = size_t{512} << 20;
};

/// Calls fn once per group with a table holding only that group's `split`
/// traces, at most `per_position_cap` per position (0 keeps all).
void for_each_position_batch(const std::string &path, const FileEvaluation &how,
                             uint64_t per_position_cap,
                             const std::function<void(const TraceTable &)> &fn);

Heatmap evaluate_classifier_grid(const ProfilingModel &model, const std::string &path,
                                 const FileEvaluation &how, unsigned threads = 1);
/// Loads at most the disclosure budget per position.
CpaGridResult evaluate_cpa_grid(const std::string &path, const FileEvaluation &how,
                                const CpaGridOptions &options);
CpaGridResult evaluate_hybrid_grid(const ProfilingModel &regressor, const std::string &path,
                                   const FileEvaluation &how, const DisclosureOptions &options,
                                   unsigned threads = 1);

struct HeatmapComparison {
    /// Cells where a is strictly lower, over all cells.
    double fraction_a_better = 0.0;
    /// Per cell: +1 a better, -1 b better, 0 tie.
    std::vector<int> wins;
    size_t a_better = 0;
    size_t b_better = 0;
    size_t ties = 0;
    /// Ties where both cells are +infinity.
    size_t infinite_ties = 0;
    /// Mean of a - b over cells where both are finite; NaN if none.
    double mean_difference = 0.0;
};

/// Lower is better; +infinity loses to any finite value. Throws
/// Error(Usage) when the grid shapes differ.
HeatmapComparison compare_heatmaps(const Heatmap &a, const Heatmap &b);

struct SnrGridResult {
    Heatmap peak_snr;
    /// Sample index of the peak per position.
    std::vector<size_t> peak_sample;
};

/// Per-position SNR over `split` traces, classed by the true unreduced
/// intermediate of `target`; the heatmap holds the maximum over samples.
/// Streams the file, in several passes if the accumulators would exceed
/// `memory_budget_bytes`. Throws Error(Usage) on a dataset without traces
/// in `split`, Error(Precondition) when a position lacks two classes.
SnrGridResult snr_grid(const std::string &path, const LeakageModel &target, Split split = Split::Train,
                       unsigned threads = 1, size_t memory_budget_bytes = size_t{256} << 20);

} // namespace emgrid
