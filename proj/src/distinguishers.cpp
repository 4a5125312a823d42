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

#include "emgrid/distinguishers.hpp"

#include "emgrid/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace emgrid {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Knuth's TwoSum: sum += y, with the rounding error added to comp.
inline void add_compensated(double &sum, double &comp, double y) {
    const double t = sum + y;
    const double bp = t - sum;
    comp += (sum - (t - bp)) + (y - bp);
    sum = t;
}

void add_compensated(std::vector<double> &sum, std::vector<double> &comp, const double *y) {
    for (size_t i = 0; i < sum.size(); ++i)
        add_compensated(sum[i], comp[i], y[i]);
}

void merge_compensated(std::vector<double> &sum, std::vector<double> &comp,
                       const std::vector<double> &other_sum, const std::vector<double> &other_comp) {
    for (size_t i = 0; i < sum.size(); ++i) {
        add_compensated(sum[i], comp[i], other_sum[i]);
        comp[i] += other_comp[i];
    }
}

std::vector<double> resolve(const std::vector<double> &sum, const std::vector<double> &comp) {
    std::vector<double> out(sum.size());
    for (size_t i = 0; i < sum.size(); ++i)
        out[i] = sum[i] + comp[i];
    return out;
}

} // namespace

// ------------------------------------------------------------------- SNR

SnrAccumulator::SnrAccumulator(size_t classes, size_t m)
    : classes_(classes), m_(m), n_(classes, 0), mean_(classes * m, 0.0), m2_(classes * m, 0.0) {
    if (classes == 0 || m == 0)
        fail(ErrorKind::Usage, "SNR accumulator needs at least one class and one sample");
}

template <typename T> void SnrAccumulator::update_impl(size_t label, std::span<const T> samples) {
    if (label >= classes_)
        fail(ErrorKind::Usage, "class label " + std::to_string(label) + " out of range (" +
                                   std::to_string(classes_) + " classes)");
    if (samples.size() != m_)
        fail(ErrorKind::Usage, "sample count mismatch in SNR update");
    const double n = static_cast<double>(++n_[label]);
    double *mu = &mean_[label * m_];
    double *m2 = &m2_[label * m_];
    for (size_t t = 0; t < m_; ++t) {
        const double x = samples[t];
        const double delta = x - mu[t];
        mu[t] += delta / n;
        m2[t] += delta * (x - mu[t]);
    }
}

void SnrAccumulator::update(size_t label, std::span<const float> samples) {
    update_impl(label, samples);
}

void SnrAccumulator::update(size_t label, std::span<const double> samples) {
    update_impl(label, samples);
}

void SnrAccumulator::merge(const SnrAccumulator &other) {
    if (other.classes_ != classes_ || other.m_ != m_)
        fail(ErrorKind::Usage, "cannot merge SNR accumulators of different shapes");
    for (size_t c = 0; c < classes_; ++c) {
        const uint64_t nb = other.n_[c];
        if (nb == 0)
            continue;
        const uint64_t na = n_[c];
        double *mu = &mean_[c * m_];
        double *m2 = &m2_[c * m_];
        const double *mub = &other.mean_[c * m_];
        const double *m2b = &other.m2_[c * m_];
        if (na == 0) {
            std::copy(mub, mub + m_, mu);
            std::copy(m2b, m2b + m_, m2);
        } else {
            const double fa = static_cast<double>(na);
            const double fb = static_cast<double>(nb);
            const double fn = fa + fb;
            for (size_t t = 0; t < m_; ++t) {
                const double delta = mub[t] - mu[t];
                mu[t] += delta * fb / fn;
                m2[t] += m2b[t] + delta * delta * fa * fb / fn;
            }
        }
        n_[c] = na + nb;
    }
}

std::vector<double> SnrAccumulator::finalize() const {
    std::vector<size_t> used;
    for (size_t c = 0; c < classes_; ++c)
        if (n_[c] >= 2)
            used.push_back(c);
    if (used.size() < 2)
        fail(ErrorKind::Precondition,
             "SNR needs at least two classes with two or more traces each (have " +
                 std::to_string(used.size()) + ")");
    const double k = static_cast<double>(used.size());
    std::vector<double> snr(m_);
    for (size_t t = 0; t < m_; ++t) {
        double mean_of_means = 0.0;
        double mean_var = 0.0;
        for (const size_t c : used) {
            mean_of_means += mean_[c * m_ + t];
            mean_var += m2_[c * m_ + t] / static_cast<double>(n_[c] - 1);
        }
        mean_of_means /= k;
        mean_var /= k;
        double between = 0.0;
        for (const size_t c : used) {
            const double d = mean_[c * m_ + t] - mean_of_means;
            between += d * d;
        }
        between /= k;
        if (mean_var > 0.0)
            snr[t] = between / mean_var;
        else
            snr[t] = between > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    return snr;
}

// ------------------------------------------------------------------- CPA

bool CorrelationMatrix::any_degenerate() const {
    return std::any_of(degenerate_row.begin(), degenerate_row.end(), [](uint8_t v) { return v; }) ||
           std::any_of(degenerate_col.begin(), degenerate_col.end(), [](uint8_t v) { return v; });
}

CpaAccumulator::CpaAccumulator(size_t m, size_t hypotheses) : m_(m), h_(hypotheses) {
    if (m == 0 || hypotheses == 0)
        fail(ErrorKind::Usage, "CPA accumulator needs at least one hypothesis and one sample");
    for (Sums *s : {&s_, &c_}) {
        s->sum_h.assign(h_, 0.0);
        s->sum_h2.assign(h_, 0.0);
        s->sum_x.assign(m_, 0.0);
        s->sum_x2.assign(m_, 0.0);
        s->sum_hx.assign(h_ * m_, 0.0);
    }
}

void CpaAccumulator::update(std::span<const double> hyps, std::span<const float> samples) {
    std::vector<double> x(samples.begin(), samples.end());
    update(hyps, std::span<const double>(x));
}

void CpaAccumulator::add_sample_sums(std::span<const double> x) {
    for (size_t t = 0; t < m_; ++t) {
        add_compensated(s_.sum_x[t], c_.sum_x[t], x[t]);
        add_compensated(s_.sum_x2[t], c_.sum_x2[t], x[t] * x[t]);
    }
}

void CpaAccumulator::update(std::span<const double> hyps, std::span<const double> x) {
    if (hyps.size() != h_ || x.size() != m_)
        fail(ErrorKind::Usage, "CPA update length mismatch");
    add_sample_sums(x);
    for (size_t j = 0; j < h_; ++j) {
        const double h = hyps[j];
        add_compensated(s_.sum_h[j], c_.sum_h[j], h);
        add_compensated(s_.sum_h2[j], c_.sum_h2[j], h * h);
        if (h == 0.0)
            continue;
        double *row = &s_.sum_hx[j * m_];
        double *comp = &c_.sum_hx[j * m_];
        for (size_t t = 0; t < m_; ++t)
            add_compensated(row[t], comp[t], h * x[t]);
    }
    ++n_;
    s_.n = n_;
}

void CpaAccumulator::update_batch(std::span<const double> hyps, std::span<const double> samples,
                                  size_t n) {
    if (hyps.size() != h_ * n || samples.size() != n * m_)
        fail(ErrorKind::Usage, "CPA batch update shape mismatch");
    if (n == 0)
        return;
    Eigen::Map<const RowMatrix> H(hyps.data(), static_cast<Eigen::Index>(h_),
                                  static_cast<Eigen::Index>(n));
    const RowMatrix HX = H * Eigen::Map<const RowMatrix>(samples.data(), static_cast<Eigen::Index>(n),
                                                         static_cast<Eigen::Index>(m_));
    add_compensated(s_.sum_hx, c_.sum_hx, HX.data());
    for (size_t j = 0; j < h_; ++j)
        for (size_t i = 0; i < n; ++i) {
            const double h = hyps[j * n + i];
            add_compensated(s_.sum_h[j], c_.sum_h[j], h);
            add_compensated(s_.sum_h2[j], c_.sum_h2[j], h * h);
        }
    for (size_t i = 0; i < n; ++i)
        add_sample_sums(samples.subspan(i * m_, m_));
    n_ += n;
    s_.n = n_;
}

void CpaAccumulator::merge(const CpaAccumulator &o) {
    if (o.m_ != m_ || o.h_ != h_)
        fail(ErrorKind::Usage, "cannot merge CPA accumulators of different shapes");
    merge_compensated(s_.sum_h, c_.sum_h, o.s_.sum_h, o.c_.sum_h);
    merge_compensated(s_.sum_h2, c_.sum_h2, o.s_.sum_h2, o.c_.sum_h2);
    merge_compensated(s_.sum_x, c_.sum_x, o.s_.sum_x, o.c_.sum_x);
    merge_compensated(s_.sum_x2, c_.sum_x2, o.s_.sum_x2, o.c_.sum_x2);
    merge_compensated(s_.sum_hx, c_.sum_hx, o.s_.sum_hx, o.c_.sum_hx);
    n_ += o.n_;
    s_.n = n_;
}

CpaAccumulator CpaAccumulator::from_sums(Sums sums) {
    CpaAccumulator acc(sums.sum_x.size(), sums.sum_h.size());
    if (sums.sum_h2.size() != acc.h_ || sums.sum_x2.size() != acc.m_ ||
        sums.sum_hx.size() != acc.h_ * acc.m_)
        fail(ErrorKind::Usage, "inconsistent CPA sums");
    acc.n_ = sums.n;
    acc.s_ = std::move(sums);
    return acc;
}

CpaAccumulator::Sums CpaAccumulator::sums() const {
    Sums out;
    out.n = n_;
    out.sum_h = resolve(s_.sum_h, c_.sum_h);
    out.sum_h2 = resolve(s_.sum_h2, c_.sum_h2);
    out.sum_x = resolve(s_.sum_x, c_.sum_x);
    out.sum_x2 = resolve(s_.sum_x2, c_.sum_x2);
    out.sum_hx = resolve(s_.sum_hx, c_.sum_hx);
    return out;
}

CorrelationMatrix CpaAccumulator::finalize() const {
    if (n_ < 2)
        fail(ErrorKind::Precondition, "correlation undefined for fewer than two traces");
    const double n = static_cast<double>(n_);
    CorrelationMatrix c;
    c.rows = h_;
    c.cols = m_;
    c.r.assign(h_ * m_, 0.0);
    c.degenerate_row.assign(h_, 0);
    c.degenerate_col.assign(m_, 0);

    // A variance is treated as zero when it is at rounding level relative to
    // the squared mean term it was computed from.
    using wide = long double;
    const wide n_w = n;
    auto value = [](const std::vector<double> &sum, const std::vector<double> &comp, size_t i) {
        return static_cast<wide>(sum[i]) + comp[i];
    };
    auto centered = [n_w](wide sum, wide sum_sq, uint8_t &degenerate) {
        const wide v = n_w * sum_sq - sum * sum;
        const wide scale = std::max(n_w * sum_sq, sum * sum);
        if (!(v > 1e-12L * scale) || v <= 0.0L) {
            degenerate = 1;
            return wide{0};
        }
        return std::sqrt(v);
    };
    std::vector<wide> mean_x(m_), sx(m_), mean_h(h_), sh(h_);
    for (size_t t = 0; t < m_; ++t) {
        mean_x[t] = value(s_.sum_x, c_.sum_x, t);
        sx[t] = centered(mean_x[t], value(s_.sum_x2, c_.sum_x2, t), c.degenerate_col[t]);
    }
    for (size_t j = 0; j < h_; ++j) {
        mean_h[j] = value(s_.sum_h, c_.sum_h, j);
        sh[j] = centered(mean_h[j], value(s_.sum_h2, c_.sum_h2, j), c.degenerate_row[j]);
    }

    for (size_t j = 0; j < h_; ++j) {
        if (c.degenerate_row[j])
            continue;
        double *out = &c.r[j * m_];
        for (size_t t = 0; t < m_; ++t) {
            if (c.degenerate_col[t])
                continue;
            const wide hx = value(s_.sum_hx, c_.sum_hx, j * m_ + t);
            out[t] = static_cast<double>((n_w * hx - mean_h[j] * mean_x[t]) / (sh[j] * sx[t]));
        }
    }
    return c;
}

ScoreVector cpa_scores(const CorrelationMatrix &corr) {
    if (corr.rows != kCandidates)
        fail(ErrorKind::Usage, "CPA scores need a 256-row correlation matrix");
    ScoreVector s{};
    for (size_t j = 0; j < corr.rows; ++j) {
        double best = 0.0;
        for (size_t t = 0; t < corr.cols; ++t)
            best = std::max(best, std::abs(corr.at(j, t)));
        s[j] = best;
    }
    return s;
}

// ----------------------------------------------------------- likelihoods

void LoglikAggregator::add(std::span<const double> p) {
    if (p.size() != kCandidates)
        fail(ErrorKind::Precondition, "probability vector must have 256 entries");
    double total = 0.0;
    for (const double v : p) {
        if (!(v >= 0.0) || !std::isfinite(v))
            fail(ErrorKind::Precondition, "probability vector has a negative or non-finite entry");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-6)
        fail(ErrorKind::Precondition, "probability vector does not sum to 1");
    for (size_t j = 0; j < kCandidates; ++j)
        lambda_[j] += std::log(std::max(p[j], kEpsilon));
    ++n_;
}

// ----------------------------------------------------------------- ranks

double rank_of(std::span<const double> scores, size_t correct) {
    const double c = scores[correct];
    size_t greater = 0;
    size_t equal = 0;
    for (size_t j = 0; j < scores.size(); ++j) {
        if (j == correct)
            continue;
        if (scores[j] > c)
            ++greater;
        else if (scores[j] == c)
            ++equal;
    }
    return static_cast<double>(greater) + 0.5 * static_cast<double>(equal);
}

double MeanRank::value() const {
    if (n_ == 0)
        fail(ErrorKind::Precondition, "mean rank of an empty stream");
    return sum_ / static_cast<double>(n_);
}

double mean_rank(std::span<const double> ranks) {
    MeanRank acc;
    for (const double r : ranks)
        acc.add(r);
    return acc.value();
}

// --------------------------------------------------------------- key CPA

KeyCpa::KeyCpa(LeakageKind kind, Reduce reduce, size_t m) : kind_(kind), reduce_(reduce), m_(m) {
    if (m == 0)
        fail(ErrorKind::Usage, "KeyCpa needs m > 0");
    if (kind_ == LeakageKind::LastRoundHD) {
        direct_.reserve(16);
        for (size_t b = 0; b < 16; ++b)
            direct_.emplace_back(m_);
    } else {
        bucket_n_.assign(16 * 256, 0);
        bucket_sum_.assign(16 * 256 * m_, 0.0);
        bucket_comp_.assign(16 * 256 * m_, 0.0);
        sum_x_.assign(m_, 0.0);
        sum_x2_.assign(m_, 0.0);
        comp_x_.assign(m_, 0.0);
        comp_x2_.assign(m_, 0.0);
    }
}

template <typename T>
void KeyCpa::add_impl(std::span<const Block> publics, std::span<const T> samples) {
    const size_t n = publics.size();
    if (samples.size() != n * m_)
        fail(ErrorKind::Usage, "KeyCpa::add shape mismatch");
    if (n == 0)
        return;
    if (kind_ == LeakageKind::LastRoundHD) {
        std::vector<double> x(samples.begin(), samples.end());
        std::vector<double> h(kCandidates * n);
        for (unsigned b = 0; b < 16; ++b) {
            const LeakageModel model{kind_, b};
            for (size_t j = 0; j < kCandidates; ++j)
                for (size_t i = 0; i < n; ++i)
                    h[j * n + i] = predict_leakage(model, reduce_, publics[i], static_cast<uint8_t>(j));
            direct_[b].update_batch(h, x, n);
        }
    } else {
        for (size_t i = 0; i < n; ++i) {
            const T *x = samples.data() + i * m_;
            for (size_t t = 0; t < m_; ++t) {
                const double v = x[t];
                add_compensated(sum_x_[t], comp_x_[t], v);
                add_compensated(sum_x2_[t], comp_x2_[t], v * v);
            }
            for (size_t b = 0; b < 16; ++b) {
                const size_t bucket = b * 256 + publics[i][b];
                ++bucket_n_[bucket];
                double *acc = &bucket_sum_[bucket * m_];
                double *comp = &bucket_comp_[bucket * m_];
                for (size_t t = 0; t < m_; ++t)
                    add_compensated(acc[t], comp[t], static_cast<double>(x[t]));
            }
        }
    }
    n_ += n;
}

void KeyCpa::add(std::span<const Block> publics, std::span<const float> samples) {
    add_impl(publics, samples);
}

void KeyCpa::add(std::span<const Block> publics, std::span<const double> samples) {
    add_impl(publics, samples);
}

void KeyCpa::merge(const KeyCpa &o) {
    if (o.kind_ != kind_ || o.reduce_ != reduce_ || o.m_ != m_)
        fail(ErrorKind::Usage, "cannot merge KeyCpa of different configuration");
    if (kind_ == LeakageKind::LastRoundHD) {
        for (size_t b = 0; b < 16; ++b)
            direct_[b].merge(o.direct_[b]);
    } else {
        for (size_t i = 0; i < bucket_n_.size(); ++i)
            bucket_n_[i] += o.bucket_n_[i];
        merge_compensated(bucket_sum_, bucket_comp_, o.bucket_sum_, o.bucket_comp_);
        merge_compensated(sum_x_, comp_x_, o.sum_x_, o.comp_x_);
        merge_compensated(sum_x2_, comp_x2_, o.sum_x2_, o.comp_x2_);
    }
    n_ += o.n_;
}

CpaAccumulator KeyCpa::accumulator(unsigned byte_index) const {
    if (byte_index >= 16)
        fail(ErrorKind::Usage, "byte index out of range");
    if (kind_ == LeakageKind::LastRoundHD)
        return direct_[byte_index];

    // h(u, j) for public byte value u and guess j.
    RowMatrix H(kCandidates, 256);
    const LeakageModel model{kind_, byte_index};
    Block pt{};
    for (size_t u = 0; u < 256; ++u) {
        pt[byte_index] = static_cast<uint8_t>(u);
        for (size_t j = 0; j < kCandidates; ++j)
            H(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(u)) =
                predict_leakage(model, reduce_, pt, static_cast<uint8_t>(j));
    }
    Eigen::VectorXd counts(256);
    for (size_t u = 0; u < 256; ++u)
        counts(static_cast<Eigen::Index>(u)) = static_cast<double>(bucket_n_[byte_index * 256 + u]);
    RowMatrix S(256, static_cast<Eigen::Index>(m_));
    const size_t base = size_t{byte_index} * 256 * m_;
    for (size_t i = 0; i < 256 * m_; ++i)
        S.data()[i] = bucket_sum_[base + i] + bucket_comp_[base + i];

    CpaAccumulator::Sums sums;
    sums.n = n_;
    sums.sum_x = resolve(sum_x_, comp_x_);
    sums.sum_x2 = resolve(sum_x2_, comp_x2_);
    sums.sum_h.resize(kCandidates);
    sums.sum_h2.resize(kCandidates);
    Eigen::Map<Eigen::VectorXd>(sums.sum_h.data(), kCandidates) = H * counts;
    Eigen::Map<Eigen::VectorXd>(sums.sum_h2.data(), kCandidates) = H.array().square().matrix() * counts;
    sums.sum_hx.resize(kCandidates * m_);
    Eigen::Map<RowMatrix>(sums.sum_hx.data(), kCandidates, static_cast<Eigen::Index>(m_)).noalias() =
        H * S;
    return CpaAccumulator::from_sums(std::move(sums));
}

std::array<ScoreVector, 16> KeyCpa::scores() const {
    std::array<ScoreVector, 16> out{};
    for (unsigned b = 0; b < 16; ++b) {
        if (n_ < 2) {
            out[b].fill(0.0);
            continue;
        }
        out[b] = cpa_scores(accumulator(b).finalize());
    }
    return out;
}

// ------------------------------------------------------------ disclosure

DisclosureResult traces_to_disclosure(const TraceFeeder &feed, const KeyScores &scores,
                                      const std::array<uint8_t, 16> &correct,
                                      const DisclosureOptions &options) {
    if (options.checkpoint_interval == 0)
        fail(ErrorKind::Usage, "checkpoint interval must be >= 1");
    DisclosureResult result;
    result.final_ranks.fill(127.5);

    auto evaluate = [&](uint64_t processed) {
        const auto s = scores();
        bool all = true;
        double total = 0.0;
        for (size_t b = 0; b < 16; ++b) {
            const double r = rank_of(s[b], correct[b]);
            result.final_ranks[b] = r;
            total += r;
            result.best_guess[b] =
                static_cast<uint8_t>(std::max_element(s[b].begin(), s[b].end()) - s[b].begin());
            if (r == 0.0) {
                if (!result.byte_traces[b])
                    result.byte_traces[b] = processed;
            } else {
                all = false;
            }
        }
        result.average_rank = total / 16.0;
        if (all && !result.full_key_traces)
            result.full_key_traces = processed;
    };

    uint64_t processed = 0;
    while (processed < options.budget && !result.full_key_traces) {
        const uint64_t next_checkpoint =
            std::min(options.budget, (processed / options.checkpoint_interval + 1) *
                                         options.checkpoint_interval);
        const uint64_t wanted = next_checkpoint - processed;
        const uint64_t got = feed(wanted);
        if (got == 0)
            break;
        processed += got;
        evaluate(processed);
        if (got < wanted)
            break;
    }
    result.traces_processed = processed;
    return result;
}

std::array<uint8_t, 16> correct_guesses(LeakageKind kind, const Block &key) {
    std::array<uint8_t, 16> out{};
    for (unsigned b = 0; b < 16; ++b)
        out[b] = correct_guess(LeakageModel{kind, b}, key);
    return out;
}

Block recovered_key(LeakageKind kind, const std::array<uint8_t, 16> &best) {
    Block k{};
    if (kind != LeakageKind::LastRoundHD) {
        std::copy(best.begin(), best.end(), k.begin());
        return k;
    }
    Block round10{};
    for (unsigned b = 0; b < 16; ++b)
        round10[kLastRoundShiftMap[b]] = best[b];
    return invert_key_schedule(round10);
}

} // namespace emgrid
