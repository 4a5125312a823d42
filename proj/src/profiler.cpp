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

#include "emgrid/profiler.hpp"

#include "emgrid/error.hpp"
#include "emgrid/rng.hpp"

#include "json.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace emgrid {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using nlohmann::json;

constexpr std::array<char, 4> kModelMagic{'E', 'M', 'M', 'D'};
constexpr uint16_t kModelVersion = 1;
constexpr double kInitScale = 0.01;
constexpr size_t kEvalBlock = 1024;

// Substream tags under the training seed.
constexpr uint64_t kInitStream = 1;
constexpr uint64_t kEpochStream = 2;
constexpr uint64_t kCapStream = 3;

struct Adam {
    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEps = 1e-8;

    std::vector<double> m, v;
    uint64_t t = 0;

    explicit Adam(size_t n) : m(n, 0.0), v(n, 0.0) {}

    void begin_step() { ++t; }

    void apply(double *param, const double *grad, size_t offset, size_t n, double lr) {
        const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t));
        for (size_t i = 0; i < n; ++i) {
            double &mi = m[offset + i];
            double &vi = v[offset + i];
            mi = kBeta1 * mi + (1.0 - kBeta1) * grad[i];
            vi = kBeta2 * vi + (1.0 - kBeta2) * grad[i] * grad[i];
            param[i] -= lr * (mi / c1) / (std::sqrt(vi / c2) + kEps);
        }
    }
};

std::vector<size_t> all_rows(const TraceTable &table) {
    std::vector<size_t> rows(table.size());
    std::iota(rows.begin(), rows.end(), size_t{0});
    return rows;
}

StandardizationParams fit_standardization(const TraceTable &table, std::span<const size_t> rows) {
    StandardizationFitter fit(table.m());
    for (size_t r : rows)
        fit.add(table.row(r));
    return fit.finish();
}

void standardize_rows(const ProfilingModel &model, const TraceTable &table,
                      std::span<const size_t> rows, RowMatrix &out) {
    const size_t m = model.m;
    out.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m));
    for (size_t i = 0; i < rows.size(); ++i)
        model.standardization.apply(table.row(rows[i]),
                                    std::span<double>(out.row(static_cast<Eigen::Index>(i)).data(), m));
}

void softmax_rows(RowMatrix &z) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
        auto row = z.row(i);
        const double mx = row.maxCoeff();
        row = (row.array() - mx).exp();
        row /= row.sum();
    }
}

void check_m(const ProfilingModel &model, size_t m) {
    if (m != model.m)
        fail(ErrorKind::Usage, "trace length " + std::to_string(m) + " does not match model m=" +
                                   std::to_string(model.m));
}

RowMatrix outputs_for(const ProfilingModel &model, const RowMatrix &z) {
    const auto k = static_cast<Eigen::Index>(model.outputs());
    Eigen::Map<const RowMatrix> w(model.weights.data(), k, static_cast<Eigen::Index>(model.m));
    Eigen::Map<const Eigen::RowVectorXd> b(model.bias.data(), k);
    RowMatrix out = z * w.transpose();
    out.rowwise() += b;
    return out;
}

std::array<double, 16> true_hds(const Block &plaintext, const Block &key) {
    const TracedEncryption t = aes128_encrypt_traced(plaintext, key);
    std::array<double, 16> out{};
    for (size_t i = 0; i < 16; ++i)
        out[i] = hamming_weight(static_cast<uint8_t>(t.ciphertext[i] ^ t.round9_state[i]));
    return out;
}

// Validation metric over a table: classifier mean rank or regressor MSE.
double validation_metric(const ProfilingModel &model, const TraceTable &val,
                         std::span<const size_t> all) {
    double total = 0.0;
    RowMatrix z;
    for (size_t first = 0; first < all.size(); first += kEvalBlock) {
        const size_t count = std::min(kEvalBlock, all.size() - first);
        const std::span<const size_t> rows(all.data() + first, count);
        standardize_rows(model, val, rows, z);
        RowMatrix out = outputs_for(model, z);
        if (model.kind == ModelKind::Classifier256) {
            softmax_rows(out);
            for (size_t i = 0; i < count; ++i) {
                const size_t r = rows[i];
                const unsigned label = true_intermediate(model.target, val.plaintext[r], val.key[r]);
                total += rank_of(std::span<const double>(out.row(static_cast<Eigen::Index>(i)).data(),
                                                         kCandidates),
                                 label);
            }
        } else {
            for (size_t i = 0; i < count; ++i) {
                const size_t r = rows[i];
                const auto y = true_hds(val.plaintext[r], val.key[r]);
                for (size_t k = 0; k < 16; ++k) {
                    const double d = out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) - y[k];
                    total += d * d;
                }
            }
        }
    }
    const double n = static_cast<double>(all.size());
    return model.kind == ModelKind::Classifier256 ? total / n : total / (16.0 * n);
}

} // namespace

// -------------------------------------------------------- standardization

void StandardizationParams::apply(std::span<const float> trace, std::span<double> out) const {
    const size_t n = mean.size();
    for (size_t t = 0; t < n; ++t)
        out[t] = (static_cast<double>(trace[t]) - mean[t]) / std[t];
}

void StandardizationFitter::add(std::span<const float> trace) {
    if (trace.size() != mean_.size())
        fail(ErrorKind::Usage, "trace length mismatch while fitting standardization");
    ++n_;
    const double inv = 1.0 / static_cast<double>(n_);
    for (size_t t = 0; t < mean_.size(); ++t) {
        const double x = trace[t];
        const double d = x - mean_[t];
        mean_[t] += d * inv;
        m2_[t] += d * (x - mean_[t]);
    }
}

StandardizationParams StandardizationFitter::finish() const {
    if (n_ == 0)
        fail(ErrorKind::Precondition, "cannot fit standardization on an empty stream");
    StandardizationParams p;
    p.mean = mean_;
    p.std.resize(mean_.size());
    for (size_t t = 0; t < mean_.size(); ++t) {
        const double s = n_ > 1 ? std::sqrt(m2_[t] / static_cast<double>(n_ - 1)) : 0.0;
        p.std[t] = s < StandardizationParams::kMinStd ? 1.0 : s;
    }
    return p;
}

StandardizationParams fit_standardization(const TraceTable &table) {
    return fit_standardization(table, all_rows(table));
}

// ------------------------------------------------------------------ model

std::string_view to_string(ModelKind kind) {
    return kind == ModelKind::Classifier256 ? "classifier" : "hd-regressor";
}

ModelKind parse_model_kind(std::string_view name) {
    if (name == "classifier")
        return ModelKind::Classifier256;
    if (name == "hd-regressor")
        return ModelKind::HdRegressor16;
    fail(ErrorKind::Usage,
         "unknown model kind '" + std::string(name) + "' (expected classifier, hd-regressor)");
}

void ProfilingModel::validate() const {
    const size_t k = outputs();
    if (m == 0 || weights.size() != k * m || bias.size() != k || standardization.mean.size() != m ||
        standardization.std.size() != m)
        fail(ErrorKind::Format, "model arrays do not match its kind and trace length");
    if (kind == ModelKind::Classifier256 && target.kind == LeakageKind::LastRoundHD)
        fail(ErrorKind::Format, "classifier target must be a first-round intermediate");
    if (target.byte_index >= 16)
        fail(ErrorKind::Format, "model byte index out of range");
}

ProfilingModel make_model(ModelKind kind, uint32_t m, LeakageModel target) {
    ProfilingModel model;
    model.kind = kind;
    model.m = m;
    model.target = kind == ModelKind::HdRegressor16 ? LeakageModel{LeakageKind::LastRoundHD, 0} : target;
    model.weights.assign(model.outputs() * m, 0.0);
    model.bias.assign(model.outputs(), 0.0);
    model.standardization.mean.assign(m, 0.0);
    model.standardization.std.assign(m, 1.0);
    return model;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
        fail(ErrorKind::Usage, "learning_rate must be positive");
    if (batch_size == 0 || steps_per_epoch == 0)
        fail(ErrorKind::Usage, "batch_size and steps_per_epoch must be positive");
    if (data_cap && *data_cap < batch_size)
        fail(ErrorKind::Usage, "data_cap must be at least batch_size");
}

double TrainResult::second_half_mean() const {
    const size_t e = val_history.size();
    if (e == 0)
        return std::numeric_limits<double>::quiet_NaN();
    const size_t first = (e + 1) / 2; // epoch ceil(E/2), 1-based
    double sum = 0.0;
    for (size_t i = first - 1; i < e; ++i)
        sum += val_history[i];
    return sum / static_cast<double>(e - first + 1);
}

// --------------------------------------------------------------- training

namespace {

TrainResult train_on_rows(ModelKind kind, const TraceTable &train, std::span<const size_t> train_rows,
                          const TraceTable &val, std::span<const size_t> val_rows,
                          const LeakageModel &target, const TrainConfig &config) {
    config.validate();
    if (train_rows.empty())
        fail(ErrorKind::Precondition, "empty training set");
    if (kind == ModelKind::Classifier256 && target.kind == LeakageKind::LastRoundHD)
        fail(ErrorKind::Usage, "classifier target must be sbox-in or sbox-out");
    if (target.byte_index >= 16)
        fail(ErrorKind::Usage, "byte index must be in 0..15");
    const uint32_t m = train.header.m;
    if (!val_rows.empty() && val.header.m != m)
        fail(ErrorKind::Usage, "validation traces have a different length");

    TrainResult result;
    result.train_traces = train_rows.size();
    ProfilingModel &model = result.model;
    model = make_model(kind, m, target);
    model.seed = config.seed;
    model.standardization = fit_standardization(train, train_rows);

    const size_t n = train_rows.size();
    const size_t k = model.outputs();
    std::vector<uint16_t> labels;
    RowMatrix targets;
    if (kind == ModelKind::Classifier256) {
        labels.resize(n);
        for (size_t i = 0; i < n; ++i)
            labels[i] = static_cast<uint16_t>(true_intermediate(
                model.target, train.plaintext[train_rows[i]], train.key[train_rows[i]]));
    } else {
        targets.resize(static_cast<Eigen::Index>(n), 16);
        for (size_t i = 0; i < n; ++i) {
            const auto y = true_hds(train.plaintext[train_rows[i]], train.key[train_rows[i]]);
            for (size_t j = 0; j < 16; ++j)
                targets(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = y[j];
        }
        for (size_t j = 0; j < 16; ++j)
            model.bias[j] = targets.col(static_cast<Eigen::Index>(j)).mean();
    }

    CounterRng init = CounterRng(config.seed).derive(kInitStream);
    for (double &w : model.weights)
        w = kInitScale * init.normal();

    const size_t batch = config.batch_size;
    Adam adam(k * m + k);
    RowMatrix xb;
    std::vector<size_t> perm(n);
    std::vector<size_t> idx(batch);
    std::vector<size_t> rows(batch);
    RowMatrix grad_w(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(m));
    Eigen::RowVectorXd grad_b(static_cast<Eigen::Index>(k));

    for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::iota(perm.begin(), perm.end(), size_t{0});
        CounterRng shuffle_rng = CounterRng(config.seed).derive(kEpochStream, epoch);
        shuffle_rng.shuffle(std::span<size_t>(perm));
        for (size_t step = 0; step < config.steps_per_epoch; ++step) {
            for (size_t j = 0; j < batch; ++j) {
                idx[j] = perm[(step * batch + j) % n];
                rows[j] = train_rows[idx[j]];
            }
            standardize_rows(model, train, rows, xb);
            RowMatrix g = outputs_for(model, xb);
            if (kind == ModelKind::Classifier256) {
                softmax_rows(g);
                for (size_t j = 0; j < batch; ++j)
                    g(static_cast<Eigen::Index>(j), labels[idx[j]]) -= 1.0;
            } else {
                for (size_t j = 0; j < batch; ++j)
                    g.row(static_cast<Eigen::Index>(j)) -= targets.row(static_cast<Eigen::Index>(idx[j]));
            }
            g /= static_cast<double>(batch);
            grad_w.noalias() = g.transpose() * xb;
            grad_b = g.colwise().sum();
            adam.begin_step();
            adam.apply(model.weights.data(), grad_w.data(), 0, k * m, config.learning_rate);
            adam.apply(model.bias.data(), grad_b.data(), k * m, k, config.learning_rate);
        }
        if (!val_rows.empty())
            result.val_history.push_back(validation_metric(model, val, val_rows));
    }
    return result;
}

} // namespace

TrainResult train_model(ModelKind kind, const TraceTable &train, const TraceTable &val,
                        const LeakageModel &target, const TrainConfig &config) {
    return train_on_rows(kind, train, all_rows(train), val, all_rows(val), target, config);
}

TrainResult train_classifier(const TraceTable &train, const TraceTable &val,
                             const LeakageModel &target, const TrainConfig &config) {
    return train_model(ModelKind::Classifier256, train, val, target, config);
}

TrainResult train_hd_regressor(const TraceTable &train, const TraceTable &val,
                               const TrainConfig &config) {
    return train_model(ModelKind::HdRegressor16, train, val, {LeakageKind::LastRoundHD, 0}, config);
}

// ------------------------------------------------------------- prediction

std::vector<double> predict_proba(const ProfilingModel &model, std::span<const float> trace) {
    if (model.kind != ModelKind::Classifier256)
        fail(ErrorKind::Usage, "predict_proba needs a classifier model");
    check_m(model, trace.size());
    RowMatrix z(1, static_cast<Eigen::Index>(model.m));
    model.standardization.apply(trace, std::span<double>(z.data(), model.m));
    RowMatrix out = outputs_for(model, z);
    softmax_rows(out);
    return std::vector<double>(out.data(), out.data() + kCandidates);
}

std::array<double, 16> predict_hd(const ProfilingModel &model, std::span<const float> trace) {
    if (model.kind != ModelKind::HdRegressor16)
        fail(ErrorKind::Usage, "predict_hd needs an hd-regressor model");
    check_m(model, trace.size());
    RowMatrix z(1, static_cast<Eigen::Index>(model.m));
    model.standardization.apply(trace, std::span<double>(z.data(), model.m));
    const RowMatrix out = outputs_for(model, z);
    std::array<double, 16> y{};
    std::copy(out.data(), out.data() + 16, y.begin());
    return y;
}

std::vector<double> predict_batch(const ProfilingModel &model, const TraceTable &table,
                                  std::span<const size_t> rows) {
    check_m(model, table.m());
    const size_t k = model.outputs();
    std::vector<double> out(rows.size() * k);
    RowMatrix z;
    for (size_t first = 0; first < rows.size(); first += kEvalBlock) {
        const size_t count = std::min(kEvalBlock, rows.size() - first);
        standardize_rows(model, table, rows.subspan(first, count), z);
        RowMatrix y = outputs_for(model, z);
        if (model.kind == ModelKind::Classifier256)
            softmax_rows(y);
        std::copy(y.data(), y.data() + count * k, out.begin() + static_cast<std::ptrdiff_t>(first * k));
    }
    return out;
}

// -------------------------------------------------------------- selection

std::vector<size_t> select_leaky_positions(const Heatmap &mean_rank, double threshold) {
    std::vector<size_t> out;
    for (size_t p = 0; p < mean_rank.values.size(); ++p)
        if (mean_rank.values[p] <= threshold)
            out.push_back(p);
    return out;
}

std::vector<size_t> select_top_n_positions(const Heatmap &mean_rank, size_t n) {
    std::vector<size_t> finite;
    for (size_t p = 0; p < mean_rank.values.size(); ++p)
        if (std::isfinite(mean_rank.values[p]))
            finite.push_back(p);
    if (n > finite.size())
        fail(ErrorKind::Usage, "requested " + std::to_string(n) + " positions but only " +
                                   std::to_string(finite.size()) + " were evaluated");
    std::stable_sort(finite.begin(), finite.end(), [&](size_t a, size_t b) {
        return mean_rank.values[a] < mean_rank.values[b];
    });
    finite.resize(n);
    return finite;
}

std::vector<size_t> rows_at(const TraceTable &table, std::span<const size_t> positions, Split split) {
    std::vector<uint8_t> wanted(65536, 0);
    for (size_t p : positions)
        if (p < wanted.size())
            wanted[p] = 1;
    std::vector<size_t> rows;
    for (size_t i = 0; i < table.size(); ++i)
        if (table.split[i] == split && wanted[table.position[i]])
            rows.push_back(i);
    return rows;
}

std::vector<size_t> apply_data_cap(std::span<const size_t> rows, std::optional<uint64_t> cap,
                                   uint64_t seed) {
    if (!cap || *cap >= rows.size())
        return {rows.begin(), rows.end()};
    std::vector<size_t> order(rows.size());
    std::iota(order.begin(), order.end(), size_t{0});
    CounterRng rng = CounterRng(seed).derive(kCapStream);
    rng.shuffle(std::span<size_t>(order));
    order.resize(*cap);
    std::sort(order.begin(), order.end());
    std::vector<size_t> out;
    out.reserve(order.size());
    for (size_t i : order)
        out.push_back(rows[i]);
    return out;
}

TrainResult multiplace_train(const TraceTable &data, std::span<const size_t> positions,
                             ModelKind kind, const LeakageModel &target,
                             const TrainConfig &config) {
    if (positions.empty())
        fail(ErrorKind::Precondition, "no training positions selected");
    const auto train_rows = apply_data_cap(rows_at(data, positions, Split::Train), config.data_cap,
                                           config.seed);
    if (train_rows.empty())
        fail(ErrorKind::Precondition, "no train-split traces at the selected positions");
    const auto val_rows = rows_at(data, positions, Split::Test);
    TrainResult result = train_on_rows(kind, data, train_rows, data, val_rows, target, config);
    for (size_t p : positions)
        result.model.positions.push_back(static_cast<uint16_t>(p));
    return result;
}

// ----------------------------------------------------------------- attacks

DisclosureResult hybrid_attack(const ProfilingModel &regressor, const TraceTable &traces,
                               std::span<const size_t> rows, const DisclosureOptions &options) {
    if (regressor.kind != ModelKind::HdRegressor16)
        fail(ErrorKind::Usage, "hybrid attack needs an hd-regressor model");
    check_m(regressor, traces.m());
    if (rows.empty())
        fail(ErrorKind::Precondition, "hybrid attack needs at least one trace");
    const Block key = traces.key[rows.front()];
    for (size_t r : rows)
        if (traces.key[r] != key)
            fail(ErrorKind::Precondition,
                 "attack traces use more than one key; simulate a fixed-key holdout split");

    KeyCpa cpa(LeakageKind::LastRoundHD, Reduce::Value, 16);
    size_t cursor = 0;
    auto feed = [&](uint64_t max_traces) -> uint64_t {
        const size_t count = std::min<size_t>(max_traces, rows.size() - cursor);
        if (count == 0)
            return 0;
        const auto chunk = rows.subspan(cursor, count);
        const std::vector<double> pseudo = predict_batch(regressor, traces, chunk);
        std::vector<Block> publics(count);
        for (size_t i = 0; i < count; ++i)
            publics[i] = traces.ciphertext[chunk[i]];
        cpa.add(publics, std::span<const double>(pseudo));
        cursor += count;
        return count;
    };
    auto scores = [&] { return cpa.scores(); };
    return traces_to_disclosure(feed, scores, correct_guesses(LeakageKind::LastRoundHD, key),
                                options);
}

ClassifyResult classify_attack(const ProfilingModel &classifier, const TraceTable &traces,
                               std::span<const size_t> rows) {
    if (classifier.kind != ModelKind::Classifier256)
        fail(ErrorKind::Usage, "classify attack needs a classifier model");
    ClassifyResult result;
    if (rows.empty())
        return result;
    const std::vector<double> proba = predict_batch(classifier, traces, rows);
    MeanRank mean;
    result.ranks.reserve(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) {
        const size_t r = rows[i];
        const unsigned label = true_intermediate(classifier.target, traces.plaintext[r], traces.key[r]);
        const double rank =
            rank_of(std::span<const double>(proba.data() + i * kCandidates, kCandidates), label);
        result.ranks.push_back(rank);
        mean.add(rank);
    }
    result.mean_rank = mean.value();
    return result;
}

std::array<double, kCandidates> key_probabilities(const LeakageModel &target,
                                                  std::span<const double> label_proba,
                                                  const Block &plaintext) {
    if (label_proba.size() != kCandidates || target.kind == LeakageKind::LastRoundHD)
        fail(ErrorKind::Usage, "key_probabilities needs 256 first-round label probabilities");
    std::array<double, kCandidates> out{};
    Block key{};
    for (size_t k = 0; k < kCandidates; ++k) {
        key[target.byte_index] = static_cast<uint8_t>(k);
        out[k] = label_proba[true_intermediate(target, plaintext, key)];
    }
    return out;
}

// -------------------------------------------------------------------- I/O

void save_model(const ProfilingModel &model, const std::string &path) {
    model.validate();
    const json header{{"kind", to_string(model.kind)},
                      {"m", model.m},
                      {"target", to_string(model.target.kind)},
                      {"byte_index", model.target.byte_index},
                      {"positions", model.positions},
                      {"seed", model.seed},
                      {"outputs", model.outputs()}};
    const std::string text = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorKind::Io, "cannot create model file '" + path + "'");
    const uint16_t version = kModelVersion;
    const auto length = static_cast<uint32_t>(text.size());
    out.write(kModelMagic.data(), 4);
    out.write(reinterpret_cast<const char *>(&version), sizeof version);
    out.write(reinterpret_cast<const char *>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto *v : {&model.weights, &model.bias, &model.standardization.mean,
                          &model.standardization.std})
        out.write(reinterpret_cast<const char *>(v->data()),
                  static_cast<std::streamsize>(v->size() * sizeof(double)));
    if (!out)
        fail(ErrorKind::Io, "failed writing model file '" + path + "'");
}

ProfilingModel load_model(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorKind::Io, "cannot open model file '" + path + "'");
    std::array<char, 4> magic{};
    uint16_t version = 0;
    uint32_t length = 0;
    in.read(magic.data(), 4);
    in.read(reinterpret_cast<char *>(&version), sizeof version);
    in.read(reinterpret_cast<char *>(&length), sizeof length);
    if (!in || magic != kModelMagic)
        fail(ErrorKind::Format, "'" + path + "' is not a model file");
    if (version != kModelVersion)
        fail(ErrorKind::Format, "unsupported model format version " + std::to_string(version));
    std::string text(length, '\0');
    in.read(text.data(), length);
    if (!in)
        fail(ErrorKind::Format, "truncated model header in '" + path + "'");

    ProfilingModel model;
    try {
        const json h = json::parse(text);
        model.kind = parse_model_kind(h.at("kind").get<std::string>());
        model.m = h.at("m").get<uint32_t>();
        model.target.kind = parse_leakage_kind(h.at("target").get<std::string>());
        model.target.byte_index = h.at("byte_index").get<unsigned>();
        model.positions = h.at("positions").get<std::vector<uint16_t>>();
        model.seed = h.at("seed").get<uint64_t>();
    } catch (const json::exception &e) {
        fail(ErrorKind::Format, std::string("malformed model header: ") + e.what());
    } catch (const Error &e) {
        fail(ErrorKind::Format, std::string("malformed model header: ") + e.what());
    }
    if (model.m == 0 || model.m > (1u << 24))
        fail(ErrorKind::Format, "implausible model trace length");
    const size_t k = model.outputs();
    model.weights.resize(k * model.m);
    model.bias.resize(k);
    model.standardization.mean.resize(model.m);
    model.standardization.std.resize(model.m);
    for (auto *v : {&model.weights, &model.bias, &model.standardization.mean,
                    &model.standardization.std}) {
        in.read(reinterpret_cast<char *>(v->data()),
                static_cast<std::streamsize>(v->size() * sizeof(double)));
        if (!in)
            fail(ErrorKind::Format, "truncated model file '" + path + "'");
    }
    if (in.peek() != std::char_traits<char>::eof())
        fail(ErrorKind::Format, "trailing bytes after model data in '" + path + "'");
    model.validate();
    return model;
}

} // namespace emgrid
