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
#include "emgrid/trace_model.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace emgrid {

/// Per-sample mean and unbiased standard deviation of the training traces.
struct StandardizationParams {
    static constexpr double kMinStd = 1e-12;

    std::vector<double> mean;
    std::vector<double> std;

    size_t m() const { return mean.size(); }
    void apply(std::span<const float> trace, std::span<double> out) const;
    bool operator==(const StandardizationParams &) const = default;
};

/// Streaming Welford fit; std entries below kMinStd become 1.
class StandardizationFitter {
  public:
    explicit StandardizationFitter(size_t m) : mean_(m, 0.0), m2_(m, 0.0) {}
    void add(std::span<const float> trace);
    /// Throws Error(Precondition) on an empty stream.
    StandardizationParams finish() const;

  private:
    uint64_t n_ = 0;
    std::vector<double> mean_;
    std::vector<double> m2_;
};

StandardizationParams fit_standardization(const TraceTable &table);

enum class ModelKind { Classifier256, HdRegressor16 };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

/// Linear model over standardized traces: outputs = W * z + b.
struct ProfilingModel {
    ModelKind kind = ModelKind::Classifier256;
    uint32_t m = 0;
    /// Classifier target; LastRoundHD for regressors.
    LeakageModel target{};
    std::vector<double> weights; ///< row-major outputs x m
    std::vector<double> bias;
    StandardizationParams standardization;
    std::vector<uint16_t> positions;
    uint64_t seed = 0;

    size_t outputs() const { return kind == ModelKind::Classifier256 ? kCandidates : 16; }
    /// Throws Error(Format) when array sizes disagree with kind and m.
    void validate() const;
    bool operator==(const ProfilingModel &) const = default;
};

/// Zero weights and bias, identity standardization.
ProfilingModel make_model(ModelKind kind, uint32_t m, LeakageModel target = {});

struct TrainConfig {
    double learning_rate = 0.01;
    size_t batch_size = 64;
    size_t epochs = 50;
    size_t steps_per_epoch = 400;
    uint64_t seed = 0;
    std::optional<uint64_t> data_cap;

    /// Throws Error(Usage) for non-positive knobs or data_cap < batch_size.
    void validate() const;
};

struct TrainResult {
    ProfilingModel model;
    /// Validation metric after each epoch: mean rank (classifier) or mean
    /// squared error (regressor). Empty without validation traces.
    std::vector<double> val_history;
    size_t train_traces = 0;

    /// Mean of the history over epochs ceil(E/2)..E (1-based); NaN if empty.
    double second_half_mean() const;
};

/// Softmax cross-entropy training with Adam on mini-batches drawn from a
/// seeded per-epoch permutation. `target` must be a first-round model; the
/// label is its unreduced intermediate.
TrainResult train_classifier(const TraceTable &train, const TraceTable &val,
                             const LeakageModel &target, const TrainConfig &config);

/// Squared-error training of the 16 true last-round Hamming distances.
TrainResult train_hd_regressor(const TraceTable &train, const TraceTable &val,
                               const TrainConfig &config);

TrainResult train_model(ModelKind kind, const TraceTable &train, const TraceTable &val,
                        const LeakageModel &target, const TrainConfig &config);

/// Throws Error(Usage) on kind or length mismatch.
std::vector<double> predict_proba(const ProfilingModel &model, std::span<const float> trace);
std::array<double, 16> predict_hd(const ProfilingModel &model, std::span<const float> trace);

/// Raw outputs for rows of `table`, row-major rows.size() x outputs.
std::vector<double> predict_batch(const ProfilingModel &model, const TraceTable &table,
                                  std::span<const size_t> rows);

/// Ascending indices of positions whose value is at most `threshold`.
std::vector<size_t> select_leaky_positions(const Heatmap &mean_rank, double threshold = 120.0);

/// The n positions with the smallest values, ties by ascending index.
/// Throws Error(Usage) if n exceeds the number of finite cells.
std::vector<size_t> select_top_n_positions(const Heatmap &mean_rank, size_t n);

/// Rows of `table` in `split` at the given positions, in table order.
std::vector<size_t> rows_at(const TraceTable &table, std::span<const size_t> positions, Split split);

/// Uniform subset of `rows` of size cap (order kept); all rows when cap
/// is unset or not smaller.
std::vector<size_t> apply_data_cap(std::span<const size_t> rows, std::optional<uint64_t> cap,
                                   uint64_t seed);

/// Trains on the union of train-split traces at `positions`, validating on
/// their test split. Throws Error(Precondition) on an empty union.
TrainResult multiplace_train(const TraceTable &data, std::span<const size_t> positions,
                             ModelKind kind, const LeakageModel &target,
                             const TrainConfig &config);

/// Regressor outputs fed as 16-sample pseudo-traces to LastRoundHD CPA.
/// Rows must share one key. Throws Error(Precondition) on an empty set or
/// mixed keys, Error(Usage) on a non-regressor.
DisclosureResult hybrid_attack(const ProfilingModel &regressor, const TraceTable &traces,
                               std::span<const size_t> rows, const DisclosureOptions &options);

struct ClassifyResult {
    double mean_rank = 127.5;
    std::vector<double> ranks;
};

/// Rank of each trace's true label under the classifier's probabilities.
ClassifyResult classify_attack(const ProfilingModel &classifier, const TraceTable &traces,
                               std::span<const size_t> rows);

/// Probability of each key-byte value implied by a label distribution.
std::array<double, kCandidates> key_probabilities(const LeakageModel &target,
                                                  std::span<const double> label_proba,
                                                  const Block &plaintext);

/// Model file: "EMMD", u16 version, u32 JSON header length, JSON header,
/// then weights, bias, mean and std as little-endian f64 arrays.
void save_model(const ProfilingModel &model, const std::string &path);
ProfilingModel load_model(const std::string &path);

} // namespace emgrid
