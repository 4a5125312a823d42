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

#include "emgrid/trace_model.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace emgrid {

/// Per-position metric over a probe grid. Lower is better for every metric
/// this library produces; +infinity marks "never" (no disclosure, no data).
struct Heatmap {
    GridGeometry geometry;
    std::vector<double> values;
    /// Cells strictly above the threshold are masked.
    std::optional<double> mask_threshold;
    std::string metric;

    bool masked(size_t p) const { return mask_threshold && !(values[p] <= *mask_threshold); }
    double at(uint32_t ix, uint32_t iy, uint32_t iz = 0) const {
        return values[geometry.index(ix, iy, iz)];
    }
    /// One z-layer as a single-layer heatmap.
    Heatmap layer(uint32_t iz) const;
    /// Throws Error(Usage) when the value count does not match the geometry.
    void validate() const;
};

Heatmap make_heatmap(const GridGeometry &geometry, std::string metric, double fill = 0.0);

/// "y\x,0,1,..." followed by one row per y index, values printed with 17
/// significant digits and infinities as "inf". Layers of a 3D grid follow
/// one another separated by a blank line. Rows run y = 0 downwards unless
/// `flip_y` is set.
std::string heatmap_to_csv(const Heatmap &h, bool flip_y = false);

/// Inverse of heatmap_to_csv for the grid shape. Step and origin are not
/// stored in CSV and come back as defaults. Throws Error(Format).
Heatmap heatmap_from_csv(std::string_view text, std::string metric = {});

/// 256-entry viridis ramp, 0xRRGGBB, dark to light.
extern const std::array<uint32_t, 256> kViridis;

struct SvgOptions {
    std::optional<double> vmin;
    std::optional<double> vmax;
    bool flip_y = false;
    bool show_values = true;
    int cell_px = 32;
};

/// Ramp index of a value for the given range. Infinite values map to the
/// end of the ramp on their side.
size_t color_index(double value, double vmin, double vmax);

/// One rect per cell; masked cells are grey and hatched. Output depends
/// only on the inputs.
std::string heatmap_to_svg(const Heatmap &h, const SvgOptions &options = {});

/// Formats a value as the CSV does ("inf", "-inf", "nan" or %.17g).
std::string format_value(double v);

} // namespace emgrid
