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

#include "emgrid/leakage.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace emgrid {

/// One score per key candidate; larger means more likely.
using ScoreVector = std::array<double, kCandidates>;

/// Per-class Welford statistics for the signal-to-noise ratio
///
///   SNR_t = Var_c(mean_{c,t}) / Mean_c(var_{c,t})
///
/// Classes contribute once they hold at least two traces. The between-class
/// term is the population variance of the class means; the within-class
/// term averages unbiased (n_c - 1) variances.
class SnrAccumulator {
  public:
    SnrAccumulator(size_t classes, size_t m);

    void update(size_t label, std::span<const float> samples);
    void update(size_t label, std::span<const double> samples);

    /// Chan et al. pairwise combination; equivalent to accumulating the
    /// concatenated streams.
    void merge(const SnrAccumulator &other);

    /// Throws Error(Precondition) unless at least two classes have n_c >= 2.
    /// A sample whose mean within-class variance is zero yields +infinity
    /// when the class means differ there, and 0 when they do not.
    std::vector<double> finalize() const;

    size_t classes() const { return classes_; }
    size_t m() const { return m_; }
    uint64_t count(size_t c) const { return n_[c]; }
    double mean(size_t c, size_t t) const { return mean_[c * m_ + t]; }
    double m2(size_t c, size_t t) const { return m2_[c * m_ + t]; }

  private:
    template <typename T> void update_impl(size_t label, std::span<const T> samples);

    size_t classes_;
    size_t m_;
    std::vector<uint64_t> n_;
    std::vector<double> mean_;
    std::vector<double> m2_;
};

/// Pearson correlation of every hypothesis row against every sample column.
struct CorrelationMatrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> r; ///< row-major rows x cols
    /// Zero-variance hypothesis rows / sample columns; their r is 0.
    std::vector<uint8_t> degenerate_row;
    std::vector<uint8_t> degenerate_col;

    double at(size_t j, size_t t) const { return r[j * cols + t]; }
    bool any_degenerate() const;
};

/// Raw-moment CPA state. Memory is O(hypotheses * m) regardless of the
/// number of traces. Every sum carries a compensation term, so the result
/// does not depend on trace order or on how a stream was split for merging.
class CpaAccumulator {
  public:
    explicit CpaAccumulator(size_t m, size_t hypotheses = kCandidates);

    /// Adds one trace. `hypotheses` holds one predicted leakage per candidate.
    void update(std::span<const double> hypotheses, std::span<const float> samples);
    void update(std::span<const double> hypotheses, std::span<const double> samples);

    /// Adds a block of traces. `hyps` is row-major hypotheses x n, `samples`
    /// row-major n x m.
    void update_batch(std::span<const double> hyps, std::span<const double> samples, size_t n);

    void merge(const CpaAccumulator &other);

    /// Throws Error(Precondition) when fewer than two traces were seen.
    CorrelationMatrix finalize() const;

    uint64_t count() const { return n_; }
    size_t m() const { return m_; }
    size_t hypotheses() const { return h_; }

    /// Direct access for engines that compute the same sums another way.
    struct Sums {
        uint64_t n = 0;
        std::vector<double> sum_h, sum_h2; // per hypothesis
        std::vector<double> sum_x, sum_x2; // per sample
        std::vector<double> sum_hx;        // hypotheses x m
    };
    static CpaAccumulator from_sums(Sums sums);
    Sums sums() const;

  private:
    void add_sample_sums(std::span<const double> x);

    size_t m_;
    size_t h_;
    uint64_t n_ = 0;
    Sums s_;
    Sums c_; ///< compensation terms, same shape as s_
};

/// score_j = max_t |r_{j,t}|
ScoreVector cpa_scores(const CorrelationMatrix &corr);

/// Accumulates Lambda_j = sum_i log max(p_i(j), eps).
class LoglikAggregator {
  public:
    static constexpr double kEpsilon = 1e-30;

    /// Throws Error(Precondition) for vectors that are not 256 non-negative
    /// entries summing to 1 within 1e-6.
    void add(std::span<const double> probabilities);
    const ScoreVector &scores() const { return lambda_; }
    uint64_t count() const { return n_; }

  private:
    ScoreVector lambda_{};
    uint64_t n_ = 0;
};

template <typename Vectors> ScoreVector loglik_aggregate(const Vectors &prob_vectors) {
    LoglikAggregator agg;
    for (const auto &p : prob_vectors)
        agg.add(std::span<const double>(p.data(), p.size()));
    return agg.scores();
}

/// Mid-rank of the correct candidate: the number of candidates scoring
/// strictly higher plus half the number of other candidates tying with it.
/// 0 is best; 127.5 is the expectation for an uninformative score vector.
double rank_of(std::span<const double> scores, size_t correct);

/// Running mean of ranks. Throws Error(Precondition) when read empty.
class MeanRank {
  public:
    void add(double rank) {
        sum_ += rank;
        ++n_;
    }
    void add(std::span<const double> scores, size_t correct) { add(rank_of(scores, correct)); }
    double value() const;
    uint64_t count() const { return n_; }

  private:
    double sum_ = 0.0;
    uint64_t n_ = 0;
};

double mean_rank(std::span<const double> ranks);

/// Sixteen per-byte CPA accumulators driven by one leakage model family.
///
/// First-round targets bucket traces by the attacked public byte so an
/// update costs O(m) per byte; the 256 hypotheses are expanded only at
/// finalization. LastRoundHD depends on two ciphertext bytes and uses
/// blocked matrix products instead.
class KeyCpa {
  public:
    KeyCpa(LeakageKind kind, Reduce reduce, size_t m);

    /// `samples` is row-major n x m.
    void add(std::span<const Block> publics, std::span<const float> samples);
    void add(std::span<const Block> publics, std::span<const double> samples);
    void merge(const KeyCpa &other);

    CpaAccumulator accumulator(unsigned byte_index) const;
    std::array<ScoreVector, 16> scores() const;

    uint64_t count() const { return n_; }
    size_t m() const { return m_; }
    LeakageKind kind() const { return kind_; }

  private:
    template <typename T> void add_impl(std::span<const Block> publics, std::span<const T> samples);

    LeakageKind kind_;
    Reduce reduce_;
    size_t m_;
    uint64_t n_ = 0;
    // First-round path: per byte, per public value: count and sample sums.
    std::vector<uint64_t> bucket_n_;   // 16 x 256
    std::vector<double> bucket_sum_;   // 16 x 256 x m
    std::vector<double> bucket_comp_;
    std::vector<double> sum_x_, sum_x2_, comp_x_, comp_x2_;
    // LastRoundHD path.
    std::vector<CpaAccumulator> direct_;
};

/// Outcome of a cumulative attack. Counts are traces; nullopt means the
/// correct value never reached rank 0 within the budget (printed "inf").
struct DisclosureResult {
    std::array<std::optional<uint64_t>, 16> byte_traces{};
    std::optional<uint64_t> full_key_traces;
    std::array<double, 16> final_ranks{};
    double average_rank = 127.5;
    uint64_t traces_processed = 0;
    /// Best-scoring candidate per byte at the last checkpoint.
    std::array<uint8_t, 16> best_guess{};
};

struct DisclosureOptions {
    uint64_t budget = 128000;
    uint64_t checkpoint_interval = 1000;
};

/// Feeds up to `max_traces` more traces into the underlying score source and
/// returns how many were consumed; 0 signals exhaustion.
using TraceFeeder = std::function<uint64_t(uint64_t max_traces)>;
using KeyScores = std::function<std::array<ScoreVector, 16>()>;

/// Processes traces cumulatively and checks ranks at every multiple of the
/// checkpoint interval and at the final trace. Full disclosure is the first
/// checkpoint where every byte's correct value is strictly top scored.
DisclosureResult traces_to_disclosure(const TraceFeeder &feed, const KeyScores &scores,
                                      const std::array<uint8_t, 16> &correct,
                                      const DisclosureOptions &options);

/// Correct guesses of all 16 bytes for a leakage family under `key`.
std::array<uint8_t, 16> correct_guesses(LeakageKind kind, const Block &key);

/// Assembles the cipher key from per-byte best guesses (inverting the key
/// schedule for LastRoundHD).
Block recovered_key(LeakageKind kind, const std::array<uint8_t, 16> &best_guess);

} // namespace emgrid
