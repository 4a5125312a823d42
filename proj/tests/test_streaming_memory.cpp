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

// Global allocation counting for the streaming-read contract. Lives in its
// own binary because it replaces operator new for the whole process.

#include "emgrid/trace_model.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <new>

namespace {

std::atomic<size_t> g_live{0};
std::atomic<size_t> g_peak{0};

constexpr size_t kHeader = alignof(std::max_align_t);

void *counted_alloc(size_t n) {
    void *base = std::malloc(n + kHeader);
    if (!base)
        throw std::bad_alloc();
    *static_cast<size_t *>(base) = n;
    const size_t live = g_live.fetch_add(n) + n;
    size_t peak = g_peak.load();
    while (live > peak && !g_peak.compare_exchange_weak(peak, live)) {
    }
    return static_cast<char *>(base) + kHeader;
}

void counted_free(void *p) noexcept {
    if (!p)
        return;
    void *base = static_cast<char *>(p) - kHeader;
    g_live.fetch_sub(*static_cast<size_t *>(base));
    std::free(base);
}

} // namespace

void *operator new(size_t n) { return counted_alloc(n); }
void *operator new[](size_t n) { return counted_alloc(n); }
void operator delete(void *p) noexcept { counted_free(p); }
void operator delete[](void *p) noexcept { counted_free(p); }
void operator delete(void *p, size_t) noexcept { counted_free(p); }
void operator delete[](void *p, size_t) noexcept { counted_free(p); }

namespace emgrid {
namespace {

TEST(StreamingRead, HoldsOneRecordAtATime) {
    testing::TempDir dir("stream_mem");
    const auto path = dir.file("big.emgd");
    constexpr uint32_t m = 4096;
    constexpr uint64_t n = 1500; // ~24 MiB of samples
    DatasetHeader h;
    h.m = m;
    h.trace_count = n;
    {
        DatasetWriter writer(path, h);
        TraceRecord r;
        r.samples.assign(m, 1.5f);
        for (uint64_t i = 0; i < n; ++i) {
            r.samples[i % m] = static_cast<float>(i);
            writer.write(r);
        }
        writer.finish();
    }

    const size_t bytes_per_record = record_size(m);
    DatasetReader reader(path);
    const size_t baseline = g_live.load();
    g_peak.store(baseline);
    uint64_t count = 0;
    double checksum = 0.0;
    TraceRecord r;
    while (reader.next(r)) {
        checksum += r.samples[count % m];
        ++count;
    }
    const size_t growth = g_peak.load() - baseline;
    EXPECT_EQ(count, n);
    EXPECT_GT(checksum, 0.0);
    // One decoded sample vector plus slack; the whole file is 1500x larger.
    EXPECT_LE(growth, 2 * bytes_per_record) << "peak growth " << growth << " bytes";

    // The iterator interface keeps the same bound.
    DatasetReader again(path);
    const size_t base2 = g_live.load();
    g_peak.store(base2);
    count = 0;
    for (const auto &rec : again) {
        (void)rec;
        ++count;
    }
    EXPECT_EQ(count, n);
    EXPECT_LE(g_peak.load() - base2, 2 * bytes_per_record);
}

} // namespace
} // namespace emgrid
