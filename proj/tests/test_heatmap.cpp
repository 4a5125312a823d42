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

#include "emgrid/heatmap.hpp"

#include "emgrid/error.hpp"
#include "emgrid/rng.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <regex>

namespace emgrid {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

GridGeometry grid(uint32_t nx, uint32_t ny, uint32_t nz = 1) {
    GridGeometry g;
    g.nx = nx;
    g.ny = ny;
    g.nz = nz;
    g.z_step_mm = nz > 1 ? 0.2 : 0.0;
    return g;
}

size_t count(const std::string &text, const std::string &needle) {
    size_t n = 0;
    for (size_t at = text.find(needle); at != std::string::npos; at = text.find(needle, at + 1))
        ++n;
    return n;
}

TEST(HeatmapCsv, SmallestCase) {
    Heatmap h = make_heatmap(grid(1, 1), "m", 5.0);
    EXPECT_EQ(heatmap_to_csv(h), "y\\x,0\n0,5\n");
}

TEST(HeatmapCsv, InfinityToken) {
    Heatmap h = make_heatmap(grid(2, 1), "m");
    h.values = {kInf, 1.5};
    EXPECT_EQ(heatmap_to_csv(h), "y\\x,0,1\n0,inf,1.5\n");
    EXPECT_EQ(format_value(-kInf), "-inf");
    EXPECT_EQ(format_value(std::nan("")), "nan");
    EXPECT_EQ(format_value(0.1), "0.10000000000000001");
}

TEST(HeatmapCsv, RowsAndLayers) {
    Heatmap h = make_heatmap(grid(2, 3, 2), "m");
    for (size_t i = 0; i < h.values.size(); ++i)
        h.values[i] = static_cast<double>(i);
    EXPECT_EQ(heatmap_to_csv(h), "y\\x,0,1\n0,0,1\n1,2,3\n2,4,5\n"
                                 "\n"
                                 "y\\x,0,1\n0,6,7\n1,8,9\n2,10,11\n");
    EXPECT_EQ(heatmap_to_csv(h.layer(1)), "y\\x,0,1\n0,6,7\n1,8,9\n2,10,11\n");
    EXPECT_EQ(heatmap_to_csv(h.layer(0), true), "y\\x,0,1\n2,4,5\n1,2,3\n0,0,1\n");
}

TEST(HeatmapCsv, RoundTripIsExact) {
    CounterRng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        const auto nx = static_cast<uint32_t>(1 + rng.below(9));
        const auto ny = static_cast<uint32_t>(1 + rng.below(9));
        const auto nz = static_cast<uint32_t>(1 + rng.below(2));
        Heatmap h = make_heatmap(grid(nx, ny, nz), "m");
        for (double &v : h.values) {
            const uint64_t kind = rng.below(10);
            v = kind == 0 ? kInf : std::ldexp(rng.normal(), static_cast<int>(rng.below(80)) - 40);
        }
        for (bool flip : {false, true}) {
            const Heatmap back = heatmap_from_csv(heatmap_to_csv(h, flip), "m");
            EXPECT_EQ(back.geometry.nx, nx);
            EXPECT_EQ(back.geometry.ny, ny);
            EXPECT_EQ(back.geometry.nz, nz);
            ASSERT_EQ(back.values.size(), h.values.size());
            for (size_t i = 0; i < h.values.size(); ++i)
                EXPECT_EQ(back.values[i], h.values[i]);
        }
    }
}

TEST(HeatmapCsv, RejectsMalformedText) {
    for (const char *bad : {"", "x\\y,0\n0,1\n", "y\\x,0,1\n0,1\n", "y\\x,0\n0,abc\n",
                            "y\\x,0\n5,1\n", "y\\x,1\n0,1\n", "y\\x,0\n0,1\n\ny\\x,0,1\n0,1,2\n"}) {
        try {
            heatmap_from_csv(bad);
            ADD_FAILURE() << bad;
        } catch (const Error &e) {
            EXPECT_EQ(e.kind(), ErrorKind::Format) << bad;
        }
    }
}

TEST(Heatmap, ValidateAndMask) {
    Heatmap h = make_heatmap(grid(2, 2), "m");
    h.values = {0.0, 120.0, 120.5, kInf};
    EXPECT_NO_THROW(h.validate());
    EXPECT_FALSE(h.masked(3));
    h.mask_threshold = 120.0;
    EXPECT_FALSE(h.masked(0));
    EXPECT_FALSE(h.masked(1));
    EXPECT_TRUE(h.masked(2));
    EXPECT_TRUE(h.masked(3));
    h.values.pop_back();
    EXPECT_THROW(h.validate(), Error);
}

// ------------------------------------------------------------ color ramp

uint32_t hex(const char *s) { return static_cast<uint32_t>(std::strtoul(s, nullptr, 16)); }

TEST(Viridis, MatchesReferenceSamples) {
    // Reference entries of the 256-colour viridis map, rounded to 8 bits.
    EXPECT_EQ(kViridis[0], hex("440154"));
    EXPECT_EQ(kViridis[1], hex("440256"));
    EXPECT_EQ(kViridis[64], hex("3b528b"));
    EXPECT_EQ(kViridis[128], hex("21918c"));
    EXPECT_EQ(kViridis[192], hex("5ec962"));
    EXPECT_EQ(kViridis[254], hex("fbe723"));
    EXPECT_EQ(kViridis[255], hex("fde725"));
}

TEST(Viridis, DarkToLight) {
    auto luma = [](uint32_t c) {
        return 0.2126 * ((c >> 16) & 255) + 0.7152 * ((c >> 8) & 255) + 0.0722 * (c & 255);
    };
    for (size_t i = 1; i < 256; ++i)
        EXPECT_GE(luma(kViridis[i]), luma(kViridis[i - 1]) - 1.0) << i;
    EXPECT_GT(luma(kViridis[255]) - luma(kViridis[0]), 150.0);
}

TEST(ColorIndex, Mapping) {
    EXPECT_EQ(color_index(0.0, 0.0, 10.0), 0u);
    EXPECT_EQ(color_index(10.0, 0.0, 10.0), 255u);
    EXPECT_EQ(color_index(-5.0, 0.0, 10.0), 0u);
    EXPECT_EQ(color_index(50.0, 0.0, 10.0), 255u);
    EXPECT_EQ(color_index(kInf, 0.0, 10.0), 255u);
    EXPECT_EQ(color_index(-kInf, 0.0, 10.0), 0u);
    size_t prev = 0;
    for (int i = 0; i <= 100; ++i) {
        const size_t c = color_index(i / 10.0, 0.0, 10.0);
        EXPECT_GE(c, prev);
        prev = c;
    }
}

// ------------------------------------------------------------------- SVG

Heatmap fixture() {
    Heatmap h = make_heatmap(grid(4, 3), "mean rank");
    h.values = {3.0, 15.5, 60.0, 127.5, 99.0, 121.0, kInf, 0.25, 140.0, 42.0, 7.0, 119.9};
    h.mask_threshold = 120.0;
    return h;
}

TEST(HeatmapSvg, OneRectPerCellWithMaskedHatching) {
    const Heatmap h = fixture();
    const std::string svg = heatmap_to_svg(h, {15.0, 140.0});
    // cells + hatch background + colour bar
    EXPECT_EQ(count(svg, "<rect x="), h.values.size() + 1);
    EXPECT_EQ(count(svg, "fill=\"url(#hatch)\""), 4u);
    EXPECT_NE(svg.find(">inf<"), std::string::npos);
    EXPECT_EQ(svg.rfind("</svg>\n"), svg.size() - 7);
}

TEST(HeatmapSvg, ByteStableAndMaskIdempotent) {
    Heatmap h = fixture();
    const std::string a = heatmap_to_svg(h);
    EXPECT_EQ(heatmap_to_svg(h), a);
    Heatmap twice = h;
    twice.mask_threshold = *h.mask_threshold;
    EXPECT_EQ(heatmap_to_svg(twice), a);
}

TEST(HeatmapSvg, ClampsColoursToRange) {
    Heatmap h = make_heatmap(grid(3, 1), "m");
    h.values = {-100.0, 50.0, 1e9};
    const std::string svg = heatmap_to_svg(h, {0.0, 100.0, false, false});
    const std::regex fill("<rect x=\"[0-9]+\" y=\"[0-9]+\" width=\"32\" height=\"32\" fill=\"(#[0-9a-f]{6})\"");
    std::vector<std::string> fills;
    for (std::sregex_iterator it(svg.begin(), svg.end(), fill), end; it != end; ++it)
        fills.push_back((*it)[1]);
    ASSERT_EQ(fills.size(), 3u);
    EXPECT_EQ(fills[0], "#440154");
    EXPECT_EQ(fills[2], "#fde725");
}

TEST(HeatmapSvg, EscapesTitle) {
    Heatmap h = make_heatmap(grid(1, 1), "a<b & c");
    const std::string svg = heatmap_to_svg(h);
    EXPECT_NE(svg.find("a&lt;b &amp; c"), std::string::npos);
}

TEST(HeatmapSvg, GoldenFile) {
    const std::string path = std::string(EMGRID_GOLDEN_DIR) + "/heatmap_fixture.svg";
    const std::string svg = heatmap_to_svg(fixture(), {15.0, 140.0});
    if (std::getenv("EMGRID_UPDATE_GOLDEN"))
        testing::write_file(path, svg);
    ASSERT_TRUE(std::filesystem::exists(path)) << "missing golden file " << path;
    EXPECT_EQ(svg, testing::read_file(path));
}

} // namespace
} // namespace emgrid
