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

#include "emgrid/aes.hpp"
#include "emgrid/error.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace emgrid {

/// Regular probe lattice. Index p maps to (ix, iy, iz) by
/// p = iz * nx * ny + iy * nx + ix.
struct GridGeometry {
    uint32_t nx = 1;
    uint32_t ny = 1;
    uint32_t nz = 1;
    double step_mm = 0.5;
    double z_step_mm = 0.0;
    std::array<double, 3> origin_mm{0.0, 0.0, 0.0};

    struct Cell {
        uint32_t ix, iy, iz;
        bool operator==(const Cell &) const = default;
    };

    size_t position_count() const { return size_t{nx} * ny * nz; }
    size_t layer_size() const { return size_t{nx} * ny; }
    size_t index(uint32_t ix, uint32_t iy, uint32_t iz = 0) const {
        return size_t{iz} * nx * ny + size_t{iy} * nx + ix;
    }
    Cell cell(size_t p) const {
        return {static_cast<uint32_t>(p % nx), static_cast<uint32_t>((p / nx) % ny),
                static_cast<uint32_t>(p / (size_t{nx} * ny))};
    }
    /// Probe location of a grid position in millimeters.
    std::array<double, 3> position_mm(size_t p) const;

    /// Throws Error(Usage) if counts are zero, too large for a u16 index,
    /// or steps are out of range.
    void validate() const;

    bool operator==(const GridGeometry &) const = default;
};

enum class Split : uint8_t { Train = 0, Test = 1, Holdout = 2 };

Split parse_split(std::string_view name);
std::string_view to_string(Split split);

struct TraceRecord {
    uint16_t position_index = 0;
    Split split = Split::Train;
    Block key{};
    Block plaintext{};
    Block ciphertext{};
    std::vector<float> samples;

    bool operator==(const TraceRecord &) const = default;
};

struct DatasetHeader {
    static constexpr std::array<char, 4> kMagic{'E', 'M', 'G', 'D'};
    static constexpr uint16_t kFormatVersion = 1;

    GridGeometry geometry;
    uint32_t m = 0;
    uint64_t trace_count = 0;
    std::string description;
    int adc_bits = 0;

    void validate() const;
    bool operator==(const DatasetHeader &) const = default;
};

/// Size in bytes of one serialized record for `m` samples.
constexpr size_t record_size(size_t m) { return 2 + 1 + 3 * 16 + 4 * m; }

/// Streaming writer for the .emgd format. The header's trace_count is
/// written up front and `finish` checks that exactly that many records
/// were appended.
class DatasetWriter {
  public:
    DatasetWriter(const std::string &path, DatasetHeader header);
    ~DatasetWriter();

    DatasetWriter(const DatasetWriter &) = delete;
    DatasetWriter &operator=(const DatasetWriter &) = delete;

    void write(const TraceRecord &record);
    void finish();

    uint64_t written() const { return written_; }

  private:
    std::string path_;
    DatasetHeader header_;
    std::ofstream out_;
    std::vector<char> buffer_;
    uint64_t written_ = 0;
    bool finished_ = false;
};

template <typename Records>
void write_dataset(const DatasetHeader &header, Records &&records, const std::string &path) {
    DatasetWriter writer(path, header);
    for (const TraceRecord &r : records)
        writer.write(r);
    writer.finish();
}

/// Single-pass reader. Only the record being decoded is held in memory.
class DatasetReader {
  public:
    explicit DatasetReader(const std::string &path);

    const DatasetHeader &header() const { return header_; }

    /// Reads the next record into `record`, reusing its sample buffer.
    bool next(TraceRecord &record);
    std::optional<TraceRecord> next();

    /// Like next(), but decodes samples only for records accepted by `pred`.
    /// `pred` is called exactly once per record in the file.
    bool next_if(TraceRecord &record, const std::function<bool(uint16_t, Split)> &pred);

    uint64_t records_read() const { return index_; }

    class iterator {
      public:
        using iterator_category = std::input_iterator_tag;
        using value_type = TraceRecord;
        using difference_type = std::ptrdiff_t;
        using pointer = const TraceRecord *;
        using reference = const TraceRecord &;

        iterator() = default;
        explicit iterator(DatasetReader *reader) : reader_(reader) { ++*this; }

        reference operator*() const { return current_; }
        pointer operator->() const { return &current_; }
        iterator &operator++() {
            if (reader_ && !reader_->next(current_))
                reader_ = nullptr;
            return *this;
        }
        void operator++(int) { ++*this; }
        bool operator==(const iterator &other) const { return reader_ == other.reader_; }

      private:
        DatasetReader *reader_ = nullptr;
        TraceRecord current_;
    };

    iterator begin() { return iterator(this); }
    iterator end() { return iterator(); }

  private:
    void read_exact(char *dst, size_t n, const char *what);

    std::string path_;
    std::ifstream in_;
    DatasetHeader header_;
    uint64_t index_ = 0;
    uint64_t offset_ = 0;
    uint64_t file_size_ = 0;
    std::vector<char> buffer_;
};

DatasetHeader read_header(const std::string &path);

using RecordPredicate = std::function<bool(uint16_t position_index, Split split)>;

/// Order-preserving filtered view over a reader. The predicate sees each
/// record's (position, split) exactly once.
class FilteredStream {
  public:
    FilteredStream(DatasetReader &reader, RecordPredicate pred)
        : reader_(&reader), pred_(std::move(pred)) {}

    bool next(TraceRecord &record) { return reader_->next_if(record, pred_); }

    class iterator {
      public:
        using iterator_category = std::input_iterator_tag;
        using value_type = TraceRecord;
        using difference_type = std::ptrdiff_t;
        using pointer = const TraceRecord *;
        using reference = const TraceRecord &;

        iterator() = default;
        explicit iterator(FilteredStream *s) : stream_(s) { ++*this; }
        reference operator*() const { return current_; }
        pointer operator->() const { return &current_; }
        iterator &operator++() {
            if (stream_ && !stream_->next(current_))
                stream_ = nullptr;
            return *this;
        }
        void operator++(int) { ++*this; }
        bool operator==(const iterator &other) const { return stream_ == other.stream_; }

      private:
        FilteredStream *stream_ = nullptr;
        TraceRecord current_;
    };

    iterator begin() { return iterator(this); }
    iterator end() { return iterator(); }

  private:
    DatasetReader *reader_;
    RecordPredicate pred_;
};

inline FilteredStream filter(DatasetReader &reader, RecordPredicate pred) {
    return FilteredStream(reader, std::move(pred));
}

/// Global extrema used for [-1, 1] normalization.
struct NormalizationParams {
    double global_min = -1.0;
    double global_max = 1.0;

    /// Throws Error(Precondition) unless global_min < global_max.
    void validate() const;
    bool operator==(const NormalizationParams &) const = default;
};

class ExtremaScanner {
  public:
    void add(std::span<const float> samples);
    /// Throws Error(Precondition) on an empty stream or a constant dataset.
    NormalizationParams finish() const;

  private:
    double min_ = 0.0;
    double max_ = 0.0;
    bool any_ = false;
};

template <typename Records>
    requires(!std::is_convertible_v<Records, std::string>)
NormalizationParams compute_global_extrema(Records &&records) {
    ExtremaScanner scan;
    for (const TraceRecord &r : records)
        scan.add(r.samples);
    return scan.finish();
}

NormalizationParams compute_global_extrema(const std::string &path);

/// Affine map onto [-1, 1]. Samples outside [min, max] are extrapolated by
/// the same rule; their number is added to `*out_of_range` when given.
void normalize_samples(std::span<float> samples, const NormalizationParams &params,
                       uint64_t *out_of_range = nullptr);

TraceRecord apply_normalization(TraceRecord trace, const NormalizationParams &params,
                                uint64_t *out_of_range = nullptr);

/// Column-oriented in-memory copy of (a subset of) a dataset. Samples are
/// row-major n x m.
struct TraceTable {
    DatasetHeader header;
    std::vector<uint16_t> position;
    std::vector<Split> split;
    std::vector<Block> key;
    std::vector<Block> plaintext;
    std::vector<Block> ciphertext;
    std::vector<float> samples;

    size_t m() const { return header.m; }
    size_t size() const { return position.size(); }
    std::span<const float> row(size_t i) const { return {samples.data() + i * m(), m()}; }
    std::span<float> row(size_t i) { return {samples.data() + i * m(), m()}; }

    void push_back(const TraceRecord &record);
    TraceRecord record(size_t i) const;
    /// Rows whose index appears in `rows`, in that order.
    TraceTable select(std::span<const size_t> rows) const;
};

struct LoadOptions {
    RecordPredicate predicate;
    /// Normalization applied while loading; none when empty.
    std::optional<NormalizationParams> normalization;
};

TraceTable load_table(const std::string &path, const LoadOptions &options = {});

} // namespace emgrid
