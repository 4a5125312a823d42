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

#include "emgrid/trace_model.hpp"

#include "json_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

namespace emgrid {

using nlohmann::json;

namespace detail {

json geometry_to_json(const GridGeometry &g) {
    return json{{"nx", g.nx},
                {"ny", g.ny},
                {"nz", g.nz},
                {"step_mm", g.step_mm},
                {"z_step_mm", g.z_step_mm},
                {"origin_mm", {g.origin_mm[0], g.origin_mm[1], g.origin_mm[2]}}};
}

GridGeometry geometry_from_json(const json &j) {
    GridGeometry g;
    g.nx = j.at("nx").get<uint32_t>();
    g.ny = j.at("ny").get<uint32_t>();
    g.nz = j.value("nz", uint32_t{1});
    g.step_mm = j.at("step_mm").get<double>();
    g.z_step_mm = j.value("z_step_mm", 0.0);
    if (j.contains("origin_mm")) {
        const auto &o = j.at("origin_mm");
        if (!o.is_array() || o.size() != 3)
            fail(ErrorKind::Format, "origin_mm must be a 3-element array");
        for (size_t i = 0; i < 3; ++i)
            g.origin_mm[i] = o[i].get<double>();
    }
    return g;
}

} // namespace detail

using detail::geometry_from_json;
using detail::geometry_to_json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "the .emgd codec assumes a little-endian host");

template <typename T> void put(char *&p, T v) {
    std::memcpy(p, &v, sizeof(T));
    p += sizeof(T);
}

template <typename T> T get(const char *&p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    p += sizeof(T);
    return v;
}

std::string header_json(const DatasetHeader &h) {
    const json j{{"geometry", geometry_to_json(h.geometry)},
                 {"m", h.m},
                 {"trace_count", h.trace_count},
                 {"description", h.description},
                 {"adc_bits", h.adc_bits}};
    return j.dump();
}

DatasetHeader header_from_json(const std::string &text) {
    DatasetHeader h;
    try {
        const json j = json::parse(text);
        h.geometry = geometry_from_json(j.at("geometry"));
        h.m = j.at("m").get<uint32_t>();
        h.trace_count = j.at("trace_count").get<uint64_t>();
        h.description = j.value("description", std::string{});
        h.adc_bits = j.value("adc_bits", 0);
    } catch (const json::exception &e) {
        fail(ErrorKind::Format, std::string("malformed dataset header: ") + e.what());
    }
    return h;
}

} // namespace

std::array<double, 3> GridGeometry::position_mm(size_t p) const {
    const Cell c = cell(p);
    return {origin_mm[0] + c.ix * step_mm, origin_mm[1] + c.iy * step_mm,
            origin_mm[2] + c.iz * z_step_mm};
}

void GridGeometry::validate() const {
    if (nx == 0 || ny == 0 || nz == 0)
        fail(ErrorKind::Usage, "grid dimensions must be positive");
    if (position_count() > 65536)
        fail(ErrorKind::Usage, "grid has more than 65536 positions");
    if (!(step_mm > 0.0) || !std::isfinite(step_mm))
        fail(ErrorKind::Usage, "step_mm must be > 0");
    if (!(z_step_mm >= 0.0) || !std::isfinite(z_step_mm))
        fail(ErrorKind::Usage, "z_step_mm must be >= 0");
}

Split parse_split(std::string_view name) {
    if (name == "train")
        return Split::Train;
    if (name == "test")
        return Split::Test;
    if (name == "holdout")
        return Split::Holdout;
    fail(ErrorKind::Usage, "unknown split '" + std::string(name) + "'");
}

std::string_view to_string(Split split) {
    switch (split) {
    case Split::Train:
        return "train";
    case Split::Test:
        return "test";
    case Split::Holdout:
        return "holdout";
    }
    return "?";
}

void DatasetHeader::validate() const {
    geometry.validate();
    if (m == 0)
        fail(ErrorKind::Usage, "samples per trace (m) must be > 0");
}

// ---------------------------------------------------------------- writer

DatasetWriter::DatasetWriter(const std::string &path, DatasetHeader header)
    : path_(path), header_(std::move(header)) {
    header_.validate();
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_)
        fail(ErrorKind::Io, "cannot open '" + path + "' for writing");

    const std::string text = header_json(header_);
    std::vector<char> prefix(10);
    char *p = prefix.data();
    std::memcpy(p, DatasetHeader::kMagic.data(), 4);
    p += 4;
    put<uint16_t>(p, DatasetHeader::kFormatVersion);
    put<uint32_t>(p, static_cast<uint32_t>(text.size()));
    out_.write(prefix.data(), static_cast<std::streamsize>(prefix.size()));
    out_.write(text.data(), static_cast<std::streamsize>(text.size()));
    buffer_.resize(record_size(header_.m));
    if (!out_)
        fail(ErrorKind::Io, "write failed on '" + path + "'");
}

DatasetWriter::~DatasetWriter() = default;

void DatasetWriter::write(const TraceRecord &r) {
    if (finished_)
        fail(ErrorKind::Usage, "write after finish on '" + path_ + "'");
    if (r.samples.size() != header_.m || r.position_index >= header_.geometry.position_count() ||
        static_cast<uint8_t>(r.split) > 2 || written_ >= header_.trace_count)
        fail(ErrorKind::Usage, "record/header mismatch at index " + std::to_string(written_));
    char *p = buffer_.data();
    put<uint16_t>(p, r.position_index);
    put<uint8_t>(p, static_cast<uint8_t>(r.split));
    std::memcpy(p, r.key.data(), 16);
    std::memcpy(p + 16, r.plaintext.data(), 16);
    std::memcpy(p + 32, r.ciphertext.data(), 16);
    p += 48;
    std::memcpy(p, r.samples.data(), 4 * r.samples.size());
    out_.write(buffer_.data(), static_cast<std::streamsize>(buffer_.size()));
    if (!out_)
        fail(ErrorKind::Io, "write failed on '" + path_ + "'");
    ++written_;
}

void DatasetWriter::finish() {
    if (finished_)
        return;
    finished_ = true;
    if (written_ != header_.trace_count)
        fail(ErrorKind::Usage, "record/header mismatch: header declares " +
                                   std::to_string(header_.trace_count) + " traces, " +
                                   std::to_string(written_) + " written");
    out_.flush();
    out_.close();
    if (!out_)
        fail(ErrorKind::Io, "closing '" + path_ + "' failed");
}

// ---------------------------------------------------------------- reader

DatasetReader::DatasetReader(const std::string &path) : path_(path) {
    in_.open(path, std::ios::binary);
    if (!in_)
        fail(ErrorKind::Io, "cannot open '" + path + "'");
    in_.seekg(0, std::ios::end);
    file_size_ = static_cast<uint64_t>(in_.tellg());
    in_.seekg(0, std::ios::beg);
    char prefix[10];
    read_exact(prefix, 4, "magic");
    if (std::memcmp(prefix, DatasetHeader::kMagic.data(), 4) != 0)
        fail(ErrorKind::Format, "bad magic in '" + path + "' (expected EMGD)");
    read_exact(prefix + 4, 6, "header prefix");
    const char *p = prefix + 4;
    const auto version = get<uint16_t>(p);
    const auto json_len = get<uint32_t>(p);
    if (version != DatasetHeader::kFormatVersion)
        fail(ErrorKind::Format, "unsupported format version " + std::to_string(version));
    std::string text(json_len, '\0');
    read_exact(text.data(), json_len, "header");
    header_ = header_from_json(text);
    try {
        header_.validate();
    } catch (const Error &e) {
        fail(ErrorKind::Format, std::string("invalid dataset header: ") + e.what());
    }
    buffer_.resize(record_size(header_.m));
}

void DatasetReader::read_exact(char *dst, size_t n, const char *what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<size_t>(in_.gcount());
    if (got != n)
        fail(ErrorKind::Format, "truncated file '" + path_ + "' at byte offset " +
                                    std::to_string(offset_ + got) + " while reading " + what);
    offset_ += n;
}

bool DatasetReader::next_if(TraceRecord &r, const std::function<bool(uint16_t, Split)> &pred) {
    constexpr size_t kPrefix = 3;
    while (index_ < header_.trace_count) {
        read_exact(buffer_.data(), kPrefix, "record");
        const char *p = buffer_.data();
        const auto pos = get<uint16_t>(p);
        const auto split = get<uint8_t>(p);
        if (split > 2)
            fail(ErrorKind::Format, "invalid split tag " + std::to_string(split) + " in record " +
                                        std::to_string(index_));
        ++index_;
        if (pred && !pred(pos, static_cast<Split>(split))) {
            const size_t rest = buffer_.size() - kPrefix;
            if (offset_ + rest > file_size_)
                fail(ErrorKind::Format, "truncated file '" + path_ + "' at byte offset " +
                                            std::to_string(file_size_) + " while reading record");
            in_.seekg(static_cast<std::streamoff>(rest), std::ios::cur);
            offset_ += rest;
            continue;
        }
        read_exact(buffer_.data() + kPrefix, buffer_.size() - kPrefix, "record");
        r.position_index = pos;
        r.split = static_cast<Split>(split);
        std::memcpy(r.key.data(), p, 16);
        std::memcpy(r.plaintext.data(), p + 16, 16);
        std::memcpy(r.ciphertext.data(), p + 32, 16);
        p += 48;
        r.samples.resize(header_.m);
        std::memcpy(r.samples.data(), p, 4 * size_t{header_.m});
        return true;
    }
    return false;
}

bool DatasetReader::next(TraceRecord &record) { return next_if(record, nullptr); }

std::optional<TraceRecord> DatasetReader::next() {
    TraceRecord r;
    if (!next(r))
        return std::nullopt;
    return r;
}

DatasetHeader read_header(const std::string &path) { return DatasetReader(path).header(); }

// ---------------------------------------------------------- normalization

void NormalizationParams::validate() const {
    if (!(global_min < global_max) || !std::isfinite(global_min) || !std::isfinite(global_max))
        fail(ErrorKind::Precondition, "normalization requires global_min < global_max");
}

void ExtremaScanner::add(std::span<const float> samples) {
    for (const float s : samples) {
        const double v = s;
        if (!any_) {
            min_ = max_ = v;
            any_ = true;
        } else {
            min_ = std::min(min_, v);
            max_ = std::max(max_, v);
        }
    }
}

NormalizationParams ExtremaScanner::finish() const {
    if (!any_)
        fail(ErrorKind::Precondition, "cannot compute extrema of an empty stream");
    if (min_ == max_)
        fail(ErrorKind::Precondition, "constant dataset: every sample equals " + std::to_string(min_));
    return {min_, max_};
}

NormalizationParams compute_global_extrema(const std::string &path) {
    DatasetReader reader(path);
    return compute_global_extrema(reader);
}

void normalize_samples(std::span<float> samples, const NormalizationParams &params,
                       uint64_t *out_of_range) {
    const double lo = params.global_min;
    const double range = params.global_max - params.global_min;
    if (!(range > 0.0))
        fail(ErrorKind::Precondition, "normalization needs global_max > global_min");
    uint64_t outside = 0;
    for (float &s : samples) {
        const double v = s;
        if (v < lo || v > params.global_max)
            ++outside;
        s = static_cast<float>(2.0 * (v - lo) / range - 1.0);
    }
    if (out_of_range)
        *out_of_range += outside;
}

TraceRecord apply_normalization(TraceRecord trace, const NormalizationParams &params,
                                uint64_t *out_of_range) {
    normalize_samples(trace.samples, params, out_of_range);
    return trace;
}

// ----------------------------------------------------------------- table

void TraceTable::push_back(const TraceRecord &r) {
    position.push_back(r.position_index);
    split.push_back(r.split);
    key.push_back(r.key);
    plaintext.push_back(r.plaintext);
    ciphertext.push_back(r.ciphertext);
    samples.insert(samples.end(), r.samples.begin(), r.samples.end());
}

TraceRecord TraceTable::record(size_t i) const {
    TraceRecord r;
    r.position_index = position[i];
    r.split = split[i];
    r.key = key[i];
    r.plaintext = plaintext[i];
    r.ciphertext = ciphertext[i];
    const auto s = row(i);
    r.samples.assign(s.begin(), s.end());
    return r;
}

TraceTable TraceTable::select(std::span<const size_t> rows) const {
    TraceTable out;
    out.header = header;
    out.samples.reserve(rows.size() * m());
    for (const size_t i : rows) {
        out.position.push_back(position[i]);
        out.split.push_back(split[i]);
        out.key.push_back(key[i]);
        out.plaintext.push_back(plaintext[i]);
        out.ciphertext.push_back(ciphertext[i]);
        const auto s = row(i);
        out.samples.insert(out.samples.end(), s.begin(), s.end());
    }
    out.header.trace_count = out.size();
    return out;
}

TraceTable load_table(const std::string &path, const LoadOptions &options) {
    DatasetReader reader(path);
    TraceTable table;
    table.header = reader.header();
    if (options.normalization)
        options.normalization->validate();
    TraceRecord r;
    while (reader.next_if(r, options.predicate)) {
        if (options.normalization)
            normalize_samples(r.samples, *options.normalization);
        table.push_back(r);
    }
    table.header.trace_count = table.size();
    return table;
}

} // namespace emgrid
