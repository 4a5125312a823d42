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

#include "emgrid/cli.hpp"

#include "emgrid/evaluation.hpp"
#include "emgrid/heatmap.hpp"
#include "emgrid/parallel.hpp"
#include "emgrid/profiler.hpp"
#include "emgrid/simulator.hpp"
#include "emgrid/trace_model.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

namespace emgrid::cli {

namespace {

using nlohmann::json;

class Log {
  public:
    explicit Log(std::ostream &os) : os_(os) {}
    void emit(const json &event) { os_ << event.dump() << '\n' << std::flush; }

  private:
    std::ostream &os_;
};

json number(double v) {
    if (std::isfinite(v))
        return v;
    return format_value(v);
}

std::string kind_name(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Io:
        return "io";
    case ErrorKind::Format:
        return "format";
    case ErrorKind::Usage:
        return "usage";
    case ErrorKind::Precondition:
        return "precondition";
    }
    return "unknown";
}

void write_text(const std::string &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        fail(ErrorKind::Io, "cannot create '" + path + "'");
    out << text;
    if (!out)
        fail(ErrorKind::Io, "failed writing '" + path + "'");
}

std::string read_text(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(ErrorKind::Io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

TraceTable load(const std::string &path, RecordPredicate pred, bool normalize, Log &log) {
    LoadOptions options;
    options.predicate = std::move(pred);
    if (normalize) {
        options.normalization = compute_global_extrema(path);
        log.emit({{"event", "normalization"},
                  {"dataset", path},
                  {"global_min", options.normalization->global_min},
                  {"global_max", options.normalization->global_max}});
    }
    TraceTable t = load_table(path, options);
    log.emit({{"event", "loaded"}, {"dataset", path}, {"traces", t.size()}, {"m", t.m()}});
    return t;
}

FileEvaluation file_evaluation(const std::string &path, const std::string &split, bool normalize,
                               Log &log) {
    FileEvaluation how;
    how.split = parse_split(split);
    if (normalize) {
        how.normalization = compute_global_extrema(path);
        log.emit({{"event", "normalization"},
                  {"dataset", path},
                  {"global_min", how.normalization->global_min},
                  {"global_max", how.normalization->global_max}});
    }
    return how;
}

void write_grid(const CpaGridResult &r, const std::string &prefix, Log &log) {
    write_text(prefix + "_disclosure.csv", heatmap_to_csv(r.disclosure));
    write_text(prefix + "_avg_rank.csv", heatmap_to_csv(r.average_rank));
    size_t disclosed = 0;
    for (double v : r.disclosure.values)
        disclosed += std::isfinite(v) ? 1 : 0;
    log.emit({{"event", "heatmaps"},
              {"disclosure", prefix + "_disclosure.csv"},
              {"average_rank", prefix + "_avg_rank.csv"},
              {"positions_disclosed", disclosed},
              {"positions", r.disclosure.values.size()}});
}

// ------------------------------------------------------------- simulate

struct SimulateArgs {
    std::string config;
    std::string out;
    std::optional<uint64_t> seed;
    unsigned threads = 1;
};

void cmd_simulate(const SimulateArgs &a, Log &log) {
    sim::ConfigFile file = sim::load_config(a.config);
    sim::SimConfig config = file.config;
    if (a.seed)
        config.seed = *a.seed;
    if (file.perturbation)
        config = sim::derive_device_b(config, *file.perturbation);
    sim::simulate_grid_dataset(config, a.out, a.threads);
    const size_t positions = config.geometry.position_count();
    for (Split s : {Split::Train, Split::Test, Split::Holdout})
        log.emit({{"event", "counts"},
                  {"split", to_string(s)},
                  {"per_position", config.traces.of(s)},
                  {"positions", positions},
                  {"total", config.traces.of(s) * positions}});
    log.emit({{"event", "simulated"},
              {"out", a.out},
              {"traces", config.header().trace_count},
              {"seed", config.seed},
              {"device_b", file.perturbation.has_value()}});
}

// ------------------------------------------------------------------ snr

struct SnrArgs {
    std::string in;
    std::string target = "sbox-in";
    unsigned byte = 0;
    std::string split = "train";
    std::string out;
    unsigned threads = 1;
};

void cmd_snr(const SnrArgs &a, Log &log) {
    const LeakageModel target{parse_leakage_kind(a.target), a.byte};
    if (a.byte >= 16)
        fail(ErrorKind::Usage, "--byte must be in 0..15");
    const SnrGridResult r = snr_grid(a.in, target, parse_split(a.split), a.threads);
    write_text(a.out, heatmap_to_csv(r.peak_snr));
    size_t best = 0;
    for (size_t p = 1; p < r.peak_snr.values.size(); ++p)
        if (r.peak_snr.values[p] > r.peak_snr.values[best])
            best = p;
    const auto cell = r.peak_snr.geometry.cell(best);
    log.emit({{"event", "snr"},
              {"out", a.out},
              {"argmax_position", best},
              {"argmax_cell", {cell.ix, cell.iy, cell.iz}},
              {"peak_snr", number(r.peak_snr.values[best])},
              {"peak_sample", r.peak_sample[best]}});
}

// ------------------------------------------------------------------ cpa

struct CpaArgs {
    std::string in;
    std::string split = "holdout";
    std::string target = "sbox-out";
    std::string reduce = "hw";
    uint64_t budget = 128000;
    uint64_t checkpoint = 1000;
    std::string out;
    bool simulate_fixed_key = false;
    unsigned threads = 1;
};

void cmd_cpa(const CpaArgs &a, Log &log) {
    CpaGridOptions o;
    o.target = parse_leakage_kind(a.target);
    o.reduce = parse_reduce(a.reduce);
    o.disclosure = {a.budget, a.checkpoint};
    o.simulate_fixed_key = a.simulate_fixed_key;
    o.threads = a.threads;
    FileEvaluation how;
    how.split = parse_split(a.split);
    write_grid(evaluate_cpa_grid(a.in, how, o), a.out, log);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::string in;
    std::string mode = "single";
    std::vector<size_t> positions;
    size_t n = 0;
    double threshold = 120.0;
    std::string rank_heatmap;
    std::string out_rank_heatmap;
    std::string model_kind = "classifier";
    std::string target = "sbox-in";
    unsigned byte = 0;
    std::optional<uint64_t> data_cap;
    std::string out_model;
    double learning_rate = 0.01;
    size_t batch = 64;
    size_t epochs = 50;
    size_t steps = 400;
    uint64_t seed = 0;
    bool normalize = true;
    unsigned threads = 1;
};

Heatmap per_position_ranks(const TraceTable &data, ModelKind kind, const LeakageModel &target,
                           const TrainConfig &config, unsigned threads, Log &log) {
    const GridGeometry &g = data.header.geometry;
    Heatmap h = make_heatmap(g, kind == ModelKind::Classifier256 ? "validation mean rank"
                                                                  : "validation mse",
                             std::numeric_limits<double>::infinity());
    std::vector<uint8_t> has_train(g.position_count(), 0);
    for (size_t i = 0; i < data.size(); ++i)
        if (data.split[i] == Split::Train)
            has_train[data.position[i]] = 1;
    parallel_for(g.position_count(), threads, [&](size_t p) {
        if (!has_train[p])
            return;
        const size_t one[] = {p};
        const TrainResult r = multiplace_train(data, one, kind, target, config);
        if (r.val_history.empty())
            fail(ErrorKind::Precondition,
                 "position selection needs test-split traces at position " + std::to_string(p));
        h.values[p] = r.second_half_mean();
    });
    for (size_t p = 0; p < g.position_count(); ++p)
        log.emit({{"event", "position_rank"}, {"position", p}, {"value", number(h.values[p])}});
    return h;
}

void cmd_train(const TrainArgs &a, Log &log) {
    if (a.byte >= 16)
        fail(ErrorKind::Usage, "--byte must be in 0..15");
    const ModelKind kind = parse_model_kind(a.model_kind);
    const LeakageModel target{parse_leakage_kind(a.target), a.byte};
    TrainConfig config;
    config.learning_rate = a.learning_rate;
    config.batch_size = a.batch;
    config.epochs = a.epochs;
    config.steps_per_epoch = a.steps;
    config.seed = a.seed;
    config.data_cap = a.data_cap;
    config.validate();

    const TraceTable data =
        load(a.in, [](uint16_t, Split s) { return s != Split::Holdout; }, a.normalize, log);
    const GridGeometry &g = data.header.geometry;
    for (size_t p : a.positions)
        if (p >= g.position_count())
            fail(ErrorKind::Usage, "position " + std::to_string(p) + " outside the grid");

    std::vector<size_t> positions;
    if (a.mode == "single") {
        if (a.positions.size() != 1)
            fail(ErrorKind::Usage, "--mode single needs exactly one --positions entry");
        positions = a.positions;
    } else if (a.mode == "all") {
        positions.resize(g.position_count());
        std::iota(positions.begin(), positions.end(), size_t{0});
    } else if (a.mode == "multiplace" || a.mode == "topn") {
        if (a.mode == "multiplace" && !a.positions.empty()) {
            positions = a.positions;
        } else {
            Heatmap ranks;
            if (!a.rank_heatmap.empty()) {
                ranks = heatmap_from_csv(read_text(a.rank_heatmap));
                if (ranks.geometry.position_count() != g.position_count())
                    fail(ErrorKind::Usage, "--rank-heatmap does not match the dataset grid");
            } else {
                ranks = per_position_ranks(data, kind, target, config, a.threads, log);
            }
            if (!a.out_rank_heatmap.empty())
                write_text(a.out_rank_heatmap, heatmap_to_csv(ranks));
            if (a.mode == "multiplace") {
                positions = select_leaky_positions(ranks, a.threshold);
            } else {
                if (a.n == 0)
                    fail(ErrorKind::Usage, "--mode topn needs --n >= 1");
                positions = select_top_n_positions(ranks, a.n);
            }
        }
    } else {
        fail(ErrorKind::Usage, "unknown --mode '" + a.mode + "' (single, multiplace, topn, all)");
    }
    log.emit({{"event", "selection"}, {"mode", a.mode}, {"positions", positions}});

    const TrainResult r = multiplace_train(data, positions, kind, target, config);
    for (size_t e = 0; e < r.val_history.size(); ++e)
        log.emit({{"event", "epoch"},
                  {"epoch", e + 1},
                  {kind == ModelKind::Classifier256 ? "val_mean_rank" : "val_mse", r.val_history[e]}});
    save_model(r.model, a.out_model);
    log.emit({{"event", "trained"},
              {"model", a.out_model},
              {"kind", to_string(kind)},
              {"train_traces", r.train_traces},
              {"second_half_mean", number(r.second_half_mean())}});
}

// ------------------------------------------------------------- evaluate

struct EvaluateArgs {
    std::string model;
    std::string in;
    std::string split = "test";
    std::string out;
    bool normalize = true;
    unsigned threads = 1;
};

void cmd_evaluate(const EvaluateArgs &a, Log &log) {
    const ProfilingModel model = load_model(a.model);
    if (model.kind != ModelKind::Classifier256)
        fail(ErrorKind::Usage, "evaluate needs a classifier model; use hybrid for regressors");
    const Heatmap h =
        evaluate_classifier_grid(model, a.in, file_evaluation(a.in, a.split, a.normalize, log), a.threads);
    write_text(a.out, heatmap_to_csv(h));
    double best = std::numeric_limits<double>::infinity();
    for (double v : h.values)
        best = std::min(best, v);
    log.emit({{"event", "evaluated"}, {"out", a.out}, {"best_mean_rank", number(best)}});
}

// --------------------------------------------------------------- hybrid

struct HybridArgs {
    std::string model;
    std::string in;
    std::string split = "holdout";
    uint64_t budget = 128000;
    uint64_t checkpoint = 1000;
    std::string out;
    bool normalize = true;
    unsigned threads = 1;
};

void cmd_hybrid(const HybridArgs &a, Log &log) {
    const ProfilingModel model = load_model(a.model);
    write_grid(evaluate_hybrid_grid(model, a.in, file_evaluation(a.in, a.split, a.normalize, log),
                                    {a.budget, a.checkpoint}, a.threads),
               a.out, log);
}

// --------------------------------------------------------------- render

struct RenderArgs {
    std::string csv;
    std::string svg;
    std::optional<double> mask_threshold;
    std::optional<double> vmin;
    std::optional<double> vmax;
    std::string title;
    bool flip_y = false;
    bool values = true;
};

void cmd_render(const RenderArgs &a, Log &log) {
    Heatmap h = heatmap_from_csv(read_text(a.csv), a.title);
    h.mask_threshold = a.mask_threshold;
    SvgOptions o;
    o.vmin = a.vmin;
    o.vmax = a.vmax;
    o.flip_y = a.flip_y;
    o.show_values = a.values;
    write_text(a.svg, heatmap_to_svg(h, o));
    size_t masked = 0;
    for (size_t p = 0; p < h.values.size(); ++p)
        masked += h.masked(p) ? 1 : 0;
    log.emit({{"event", "rendered"}, {"svg", a.svg}, {"cells", h.values.size()}, {"masked", masked}});
}

} // namespace

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Io:
        return kExitIo;
    case ErrorKind::Format:
    case ErrorKind::Usage:
        return kExitUsage;
    case ErrorKind::Precondition:
        return kExitPrecondition;
    }
    return kExitIo;
}

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    Log log(err);
    CLI::App app{"Grid-positioned EM side-channel analysis on simulated or captured traces.",
                 "emgrid"};
    app.require_subcommand(1);

    SimulateArgs sa;
    auto *sim = app.add_subcommand("simulate", "Generate a grid dataset from a JSON config");
    sim->add_option("--config", sa.config, "Simulator config file")->required();
    sim->add_option("--out", sa.out, "Output dataset (.emgd)")->required();
    sim->add_option("--seed", sa.seed, "Override the config seed");
    sim->add_option("--threads", sa.threads, "Worker threads")->check(CLI::PositiveNumber);

    SnrArgs na;
    auto *snr = app.add_subcommand("snr", "Per-position peak SNR heatmap");
    snr->add_option("--in", na.in, "Dataset")->required();
    snr->add_option("--target", na.target, "sbox-in, sbox-out or last-round-hd");
    snr->add_option("--byte", na.byte, "Key byte index");
    snr->add_option("--split", na.split, "train, test or holdout");
    snr->add_option("--out-heatmap", na.out, "Output CSV")->required();
    snr->add_option("--threads", na.threads, "Worker threads")->check(CLI::PositiveNumber);

    CpaArgs ca;
    auto *cpa = app.add_subcommand("cpa", "Per-position CPA disclosure and average-rank heatmaps");
    cpa->add_option("--in", ca.in, "Dataset")->required();
    cpa->add_option("--split", ca.split, "train, test or holdout");
    cpa->add_option("--target", ca.target, "sbox-in, sbox-out or last-round-hd");
    cpa->add_option("--reduce", ca.reduce, "hw or value");
    cpa->add_option("--budget", ca.budget, "Maximum traces per position");
    cpa->add_option("--checkpoint", ca.checkpoint, "Rank check interval")->check(CLI::PositiveNumber);
    cpa->add_option("--out-heatmaps", ca.out, "Output prefix")->required();
    cpa->add_flag("--simulate-fixed-key", ca.simulate_fixed_key,
                  "Re-key random-key traces for first-round targets");
    cpa->add_option("--threads", ca.threads, "Worker threads")->check(CLI::PositiveNumber);

    TrainArgs ta;
    auto *train = app.add_subcommand("train", "Train a profiling model");
    train->add_option("--in", ta.in, "Dataset")->required();
    train->add_option("--mode", ta.mode, "single, multiplace, topn or all");
    train->add_option("--positions", ta.positions, "Position indices")->delimiter(',');
    train->add_option("--n", ta.n, "Positions for topn");
    train->add_option("--threshold", ta.threshold, "Leaky-position threshold for multiplace");
    train->add_option("--rank-heatmap", ta.rank_heatmap, "Per-position ranks CSV for selection");
    train->add_option("--out-rank-heatmap", ta.out_rank_heatmap, "Write the selection ranks CSV");
    train->add_option("--model-kind", ta.model_kind, "classifier or hd-regressor");
    train->add_option("--target", ta.target, "Classifier target: sbox-in or sbox-out");
    train->add_option("--byte", ta.byte, "Classifier key byte index");
    train->add_option("--data-cap", ta.data_cap, "Maximum training traces");
    train->add_option("--out-model", ta.out_model, "Output model (.emmod)")->required();
    train->add_option("--learning-rate", ta.learning_rate, "Adam step size");
    train->add_option("--batch-size", ta.batch, "Mini-batch size");
    train->add_option("--epochs", ta.epochs, "Epochs");
    train->add_option("--steps-per-epoch", ta.steps, "Batches per epoch");
    train->add_option("--seed", ta.seed, "Training seed");
    train->add_flag("--normalize,!--no-normalize", ta.normalize,
                    "Scale the dataset to [-1, 1] by its global extrema (default on)");
    train->add_option("--threads", ta.threads, "Worker threads")->check(CLI::PositiveNumber);

    EvaluateArgs ea;
    auto *eval = app.add_subcommand("evaluate", "Mean-rank heatmap of a classifier");
    eval->add_option("--model", ea.model, "Model file")->required();
    eval->add_option("--in", ea.in, "Dataset")->required();
    eval->add_option("--split", ea.split, "train, test or holdout");
    eval->add_option("--out-heatmap", ea.out, "Output CSV")->required();
    eval->add_flag("--normalize,!--no-normalize", ea.normalize, "Per-dataset [-1, 1] scaling");
    eval->add_option("--threads", ea.threads, "Worker threads")->check(CLI::PositiveNumber);

    HybridArgs ha;
    auto *hyb = app.add_subcommand("hybrid", "Regressor outputs fed to last-round CPA per position");
    hyb->add_option("--model", ha.model, "HD regressor model file")->required();
    hyb->add_option("--in", ha.in, "Dataset")->required();
    hyb->add_option("--split", ha.split, "train, test or holdout");
    hyb->add_option("--budget", ha.budget, "Maximum traces per position");
    hyb->add_option("--checkpoint", ha.checkpoint, "Rank check interval")->check(CLI::PositiveNumber);
    hyb->add_option("--out-heatmaps", ha.out, "Output prefix")->required();
    hyb->add_flag("--normalize,!--no-normalize", ha.normalize, "Per-dataset [-1, 1] scaling");
    hyb->add_option("--threads", ha.threads, "Worker threads")->check(CLI::PositiveNumber);

    RenderArgs ra;
    auto *render = app.add_subcommand("render", "Render a heatmap CSV as SVG");
    render->add_option("--csv", ra.csv, "Input CSV")->required();
    render->add_option("--svg", ra.svg, "Output SVG")->required();
    render->add_option("--mask-threshold", ra.mask_threshold, "Hatch cells above this value");
    render->add_option("--vmin", ra.vmin, "Color scale minimum");
    render->add_option("--vmax", ra.vmax, "Color scale maximum");
    render->add_option("--title", ra.title, "Metric name shown above the grid");
    render->add_flag("--flip-y", ra.flip_y, "Draw y increasing bottom to top");
    render->add_flag("--values,!--no-values", ra.values, "Print cell values (default on)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError &e) {
        if (e.get_exit_code() == 0)
            return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
        log.emit({{"event", "error"}, {"kind", "usage"}, {"message", e.what()}});
        return kExitUsage;
    }

    try {
        if (sim->parsed())
            cmd_simulate(sa, log);
        else if (snr->parsed())
            cmd_snr(na, log);
        else if (cpa->parsed())
            cmd_cpa(ca, log);
        else if (train->parsed())
            cmd_train(ta, log);
        else if (eval->parsed())
            cmd_evaluate(ea, log);
        else if (hyb->parsed())
            cmd_hybrid(ha, log);
        else if (render->parsed())
            cmd_render(ra, log);
    } catch (const Error &e) {
        log.emit({{"event", "error"}, {"kind", kind_name(e.kind())}, {"message", e.what()}});
        return exit_code(e.kind());
    } catch (const std::bad_alloc &) {
        log.emit({{"event", "error"}, {"kind", "io"}, {"message", "out of memory"}});
        return kExitIo;
    } catch (const std::exception &e) {
        log.emit({{"event", "error"}, {"kind", "io"}, {"message", e.what()}});
        return kExitIo;
    }
    return kExitOk;
}

} // namespace emgrid::cli
