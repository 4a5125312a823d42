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

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

namespace emgrid {

const std::array<uint32_t, 256> kViridis = {
    0x440154, 0x440256, 0x450457, 0x450559, 0x46075a, 0x46085c, 0x460a5d, 0x460b5e,
    0x470d60, 0x470e61, 0x471063, 0x471164, 0x471365, 0x481467, 0x481668, 0x481769,
    0x48186a, 0x481a6c, 0x481b6d, 0x481c6e, 0x481d6f, 0x481f70, 0x482071, 0x482173,
    0x482374, 0x482475, 0x482576, 0x482677, 0x482878, 0x482979, 0x472a7a, 0x472c7a,
    0x472d7b, 0x472e7c, 0x472f7d, 0x46307e, 0x46327e, 0x46337f, 0x463480, 0x453581,
    0x453781, 0x453882, 0x443983, 0x443a83, 0x443b84, 0x433d84, 0x433e85, 0x423f85,
    0x424086, 0x424186, 0x414287, 0x414487, 0x404588, 0x404688, 0x3f4788, 0x3f4889,
    0x3e4989, 0x3e4a89, 0x3e4c8a, 0x3d4d8a, 0x3d4e8a, 0x3c4f8a, 0x3c508b, 0x3b518b,
    0x3b528b, 0x3a538b, 0x3a548c, 0x39558c, 0x39568c, 0x38588c, 0x38598c, 0x375a8c,
    0x375b8d, 0x365c8d, 0x365d8d, 0x355e8d, 0x355f8d, 0x34608d, 0x34618d, 0x33628d,
    0x33638d, 0x32648e, 0x32658e, 0x31668e, 0x31678e, 0x31688e, 0x30698e, 0x306a8e,
    0x2f6b8e, 0x2f6c8e, 0x2e6d8e, 0x2e6e8e, 0x2e6f8e, 0x2d708e, 0x2d718e, 0x2c718e,
    0x2c728e, 0x2c738e, 0x2b748e, 0x2b758e, 0x2a768e, 0x2a778e, 0x2a788e, 0x29798e,
    0x297a8e, 0x297b8e, 0x287c8e, 0x287d8e, 0x277e8e, 0x277f8e, 0x27808e, 0x26818e,
    0x26828e, 0x26828e, 0x25838e, 0x25848e, 0x25858e, 0x24868e, 0x24878e, 0x23888e,
    0x23898e, 0x238a8d, 0x228b8d, 0x228c8d, 0x228d8d, 0x218e8d, 0x218f8d, 0x21908d,
    0x21918c, 0x20928c, 0x20928c, 0x20938c, 0x1f948c, 0x1f958b, 0x1f968b, 0x1f978b,
    0x1f988b, 0x1f998a, 0x1f9a8a, 0x1e9b8a, 0x1e9c89, 0x1e9d89, 0x1f9e89, 0x1f9f88,
    0x1fa088, 0x1fa188, 0x1fa187, 0x1fa287, 0x20a386, 0x20a486, 0x21a585, 0x21a685,
    0x22a785, 0x22a884, 0x23a983, 0x24aa83, 0x25ab82, 0x25ac82, 0x26ad81, 0x27ad81,
    0x28ae80, 0x29af7f, 0x2ab07f, 0x2cb17e, 0x2db27d, 0x2eb37c, 0x2fb47c, 0x31b57b,
    0x32b67a, 0x34b679, 0x35b779, 0x37b878, 0x38b977, 0x3aba76, 0x3bbb75, 0x3dbc74,
    0x3fbc73, 0x40bd72, 0x42be71, 0x44bf70, 0x46c06f, 0x48c16e, 0x4ac16d, 0x4cc26c,
    0x4ec36b, 0x50c46a, 0x52c569, 0x54c568, 0x56c667, 0x58c765, 0x5ac864, 0x5cc863,
    0x5ec962, 0x60ca60, 0x63cb5f, 0x65cb5e, 0x67cc5c, 0x69cd5b, 0x6ccd5a, 0x6ece58,
    0x70cf57, 0x73d056, 0x75d054, 0x77d153, 0x7ad151, 0x7cd250, 0x7fd34e, 0x81d34d,
    0x84d44b, 0x86d549, 0x89d548, 0x8bd646, 0x8ed645, 0x90d743, 0x93d741, 0x95d840,
    0x98d83e, 0x9bd93c, 0x9dd93b, 0xa0da39, 0xa2da37, 0xa5db36, 0xa8db34, 0xaadc32,
    0xaddc30, 0xb0dd2f, 0xb2dd2d, 0xb5de2b, 0xb8de29, 0xbade28, 0xbddf26, 0xc0df25,
    0xc2df23, 0xc5e021, 0xc8e020, 0xcae11f, 0xcde11d, 0xd0e11c, 0xd2e21b, 0xd5e21a,
    0xd8e219, 0xdae319, 0xdde318, 0xdfe318, 0xe2e418, 0xe5e419, 0xe7e419, 0xeae51a,
    0xece51b, 0xefe51c, 0xf1e51d, 0xf4e61e, 0xf6e620, 0xf8e621, 0xfbe723, 0xfde725,
};

namespace {

std::string fmt(const char *pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

std::string xml_escape(std::string_view text) {
    std::string out;
    for (char c : text) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '"': out += "&quot;"; break;
        default: out += c;
        }
    }
    return out;
}

std::string hex_color(uint32_t rgb) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "#%06x", static_cast<unsigned>(rgb));
    return buf;
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    size_t start = 0;
    while (start <= text.size()) {
        size_t end = text.find('\n', start);
        if (end == std::string_view::npos)
            end = text.size();
        std::string_view line = text.substr(start, end - start);
        if (!line.empty() && line.back() == '\r')
            line.remove_suffix(1);
        lines.push_back(line);
        if (end == text.size())
            break;
        start = end + 1;
    }
    while (!lines.empty() && lines.back().empty())
        lines.pop_back();
    return lines;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    size_t start = 0;
    for (;;) {
        const size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

double parse_number(std::string_view field) {
    if (field == "inf")
        return std::numeric_limits<double>::infinity();
    if (field == "-inf")
        return -std::numeric_limits<double>::infinity();
    if (field == "nan")
        return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size())
        fail(ErrorKind::Format, "invalid heatmap value '" + std::string(field) + "'");
    return v;
}

uint32_t parse_index(std::string_view field) {
    uint32_t v = 0;
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
    if (ec != std::errc() || ptr != field.data() + field.size())
        fail(ErrorKind::Format, "invalid heatmap index '" + std::string(field) + "'");
    return v;
}

} // namespace

std::string format_value(double v) {
    if (std::isnan(v))
        return "nan";
    if (std::isinf(v))
        return v > 0 ? "inf" : "-inf";
    return fmt("%.17g", v);
}

Heatmap Heatmap::layer(uint32_t iz) const {
    if (iz >= geometry.nz)
        fail(ErrorKind::Usage, "layer index out of range");
    Heatmap h;
    h.geometry = geometry;
    h.geometry.nz = 1;
    h.geometry.origin_mm[2] += iz * geometry.z_step_mm;
    h.mask_threshold = mask_threshold;
    h.metric = metric;
    const size_t n = geometry.layer_size();
    h.values.assign(values.begin() + static_cast<std::ptrdiff_t>(iz * n),
                    values.begin() + static_cast<std::ptrdiff_t>((iz + 1) * n));
    return h;
}

void Heatmap::validate() const {
    if (values.size() != geometry.position_count())
        fail(ErrorKind::Usage, "heatmap has " + std::to_string(values.size()) +
                                   " values for " + std::to_string(geometry.position_count()) +
                                   " positions");
}

Heatmap make_heatmap(const GridGeometry &geometry, std::string metric, double fill) {
    Heatmap h;
    h.geometry = geometry;
    h.values.assign(geometry.position_count(), fill);
    h.metric = std::move(metric);
    return h;
}

std::string heatmap_to_csv(const Heatmap &h, bool flip_y) {
    h.validate();
    const GridGeometry &g = h.geometry;
    std::string out;
    for (uint32_t iz = 0; iz < g.nz; ++iz) {
        if (iz > 0)
            out += '\n';
        out += "y\\x";
        for (uint32_t ix = 0; ix < g.nx; ++ix)
            out += ',' + std::to_string(ix);
        out += '\n';
        for (uint32_t row = 0; row < g.ny; ++row) {
            const uint32_t iy = flip_y ? g.ny - 1 - row : row;
            out += std::to_string(iy);
            for (uint32_t ix = 0; ix < g.nx; ++ix)
                out += ',' + format_value(h.at(ix, iy, iz));
            out += '\n';
        }
    }
    return out;
}

Heatmap heatmap_from_csv(std::string_view text, std::string metric) {
    const auto lines = split_lines(text);
    std::vector<std::vector<std::vector<std::string_view>>> blocks(1);
    for (std::string_view line : lines) {
        if (line.empty()) {
            if (!blocks.back().empty())
                blocks.emplace_back();
            continue;
        }
        blocks.back().push_back(split_fields(line));
    }
    if (blocks.back().empty())
        blocks.pop_back();
    if (blocks.empty())
        fail(ErrorKind::Format, "empty heatmap CSV");

    Heatmap h;
    h.metric = std::move(metric);
    const auto &first = blocks.front();
    if (first.front().empty() || first.front()[0] != "y\\x")
        fail(ErrorKind::Format, "heatmap CSV must start with 'y\\x'");
    h.geometry.nx = static_cast<uint32_t>(first.front().size() - 1);
    h.geometry.ny = static_cast<uint32_t>(first.size() - 1);
    h.geometry.nz = static_cast<uint32_t>(blocks.size());
    if (h.geometry.nx == 0 || h.geometry.ny == 0)
        fail(ErrorKind::Format, "heatmap CSV has no cells");
    h.values.assign(h.geometry.position_count(), std::numeric_limits<double>::quiet_NaN());

    for (uint32_t iz = 0; iz < h.geometry.nz; ++iz) {
        const auto &rows = blocks[iz];
        if (rows.size() != size_t{h.geometry.ny} + 1)
            fail(ErrorKind::Format, "heatmap CSV layers differ in row count");
        const auto &header = rows.front();
        if (header.size() != size_t{h.geometry.nx} + 1 || header[0] != "y\\x")
            fail(ErrorKind::Format, "malformed heatmap CSV header");
        for (uint32_t ix = 0; ix < h.geometry.nx; ++ix)
            if (parse_index(header[ix + 1]) != ix)
                fail(ErrorKind::Format, "heatmap CSV x indices must be 0..nx-1");
        std::vector<bool> seen(h.geometry.ny, false);
        for (size_t r = 1; r < rows.size(); ++r) {
            const auto &fields = rows[r];
            if (fields.size() != size_t{h.geometry.nx} + 1)
                fail(ErrorKind::Format, "heatmap CSV row has the wrong number of cells");
            const uint32_t iy = parse_index(fields[0]);
            if (iy >= h.geometry.ny || seen[iy])
                fail(ErrorKind::Format, "heatmap CSV y indices must be a permutation of 0..ny-1");
            seen[iy] = true;
            for (uint32_t ix = 0; ix < h.geometry.nx; ++ix)
                h.values[h.geometry.index(ix, iy, iz)] = parse_number(fields[ix + 1]);
        }
    }
    return h;
}

size_t color_index(double value, double vmin, double vmax) {
    if (std::isnan(value))
        return 0;
    if (value == std::numeric_limits<double>::infinity())
        return 255;
    if (value == -std::numeric_limits<double>::infinity())
        return 0;
    if (!(vmax > vmin))
        return 0;
    const double u = std::clamp((value - vmin) / (vmax - vmin), 0.0, 1.0);
    return static_cast<size_t>(std::lround(u * 255.0));
}

std::string heatmap_to_svg(const Heatmap &h, const SvgOptions &options) {
    h.validate();
    const GridGeometry &g = h.geometry;

    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : h.values)
        if (std::isfinite(v)) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!std::isfinite(lo)) {
        lo = 0.0;
        hi = 1.0;
    }
    const double vmin = options.vmin.value_or(lo);
    const double vmax = options.vmax.value_or(hi);

    const int cell = std::max(4, options.cell_px);
    const int margin_left = 40;
    const int margin_top = 40;
    const int layer_gap = 30;
    const int bar_width = 16;
    const int layer_height = static_cast<int>(g.ny) * cell;
    const int grid_width = static_cast<int>(g.nx) * cell;
    const int height_px = margin_top + static_cast<int>(g.nz) * (layer_height + layer_gap);
    const int bar_x = margin_left + grid_width + 20;
    const int width_px = bar_x + bar_width + 90;

    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(width_px) +
         "\" height=\"" + std::to_string(height_px) + "\" viewBox=\"0 0 " +
         std::to_string(width_px) + " " + std::to_string(height_px) +
         "\" font-family=\"sans-serif\">\n";
    s += "<defs>\n"
         "<pattern id=\"hatch\" patternUnits=\"userSpaceOnUse\" width=\"6\" height=\"6\">"
         "<rect width=\"6\" height=\"6\" fill=\"#bdbdbd\"/>"
         "<path d=\"M0,6 L6,0 M-1,1 L1,-1 M5,7 L7,5\" stroke=\"#636363\" stroke-width=\"1\"/>"
         "</pattern>\n";
    s += "<linearGradient id=\"ramp\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">\n";
    for (size_t i = 0; i < 256; i += 15) {
        s += "<stop offset=\"" + fmt("%.4f", static_cast<double>(i) / 255.0) +
             "\" stop-color=\"" + hex_color(kViridis[i]) + "\"/>\n";
    }
    s += "</linearGradient>\n</defs>\n";
    s += "<text x=\"" + std::to_string(margin_left) + "\" y=\"16\" font-size=\"13\">" +
         (h.metric.empty() ? std::string("heatmap") : xml_escape(h.metric));
    if (h.mask_threshold)
        s += " (masked above " + format_value(*h.mask_threshold) + ")";
    s += "</text>\n";

    for (uint32_t iz = 0; iz < g.nz; ++iz) {
        const int top = margin_top + static_cast<int>(iz) * (layer_height + layer_gap);
        if (g.nz > 1)
            s += "<text x=\"4\" y=\"" + std::to_string(top - 4) + "\" font-size=\"10\">z=" +
                 std::to_string(iz) + "</text>\n";
        for (uint32_t ix = 0; ix < g.nx; ++ix)
            s += "<text x=\"" + std::to_string(margin_left + static_cast<int>(ix) * cell + cell / 2) +
                 "\" y=\"" + std::to_string(top - 4) +
                 "\" font-size=\"9\" text-anchor=\"middle\">" + std::to_string(ix) + "</text>\n";
        for (uint32_t row = 0; row < g.ny; ++row) {
            const uint32_t iy = options.flip_y ? g.ny - 1 - row : row;
            const int y = top + static_cast<int>(row) * cell;
            s += "<text x=\"" + std::to_string(margin_left - 4) + "\" y=\"" +
                 std::to_string(y + cell / 2 + 3) + "\" font-size=\"9\" text-anchor=\"end\">" +
                 std::to_string(iy) + "</text>\n";
            for (uint32_t ix = 0; ix < g.nx; ++ix) {
                const size_t p = g.index(ix, iy, iz);
                const double v = h.values[p];
                const int x = margin_left + static_cast<int>(ix) * cell;
                const bool is_masked = h.masked(p) || std::isnan(v);
                const size_t ci = color_index(v, vmin, vmax);
                const std::string fill = is_masked ? "url(#hatch)" : hex_color(kViridis[ci]);
                s += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) +
                     "\" width=\"" + std::to_string(cell) + "\" height=\"" + std::to_string(cell) +
                     "\" fill=\"" + fill + "\" stroke=\"#ffffff\" stroke-width=\"0.5\"/>\n";
                if (options.show_values) {
                    const std::string label =
                        std::isinf(v) ? (v > 0 ? "inf" : "-inf") : fmt("%.3g", v);
                    const char *ink = (!is_masked && ci < 128) ? "#ffffff" : "#000000";
                    s += "<text x=\"" + std::to_string(x + cell / 2) + "\" y=\"" +
                         std::to_string(y + cell / 2 + 3) + "\" font-size=\"" +
                         std::to_string(std::max(6, cell / 4)) + "\" text-anchor=\"middle\" fill=\"" +
                         ink + "\">" + label + "</text>\n";
                }
            }
        }
    }

    const int bar_top = margin_top;
    const int bar_height = std::max(layer_height, 60);
    s += "<rect x=\"" + std::to_string(bar_x) + "\" y=\"" + std::to_string(bar_top) +
         "\" width=\"" + std::to_string(bar_width) + "\" height=\"" +
         std::to_string(bar_height) + "\" fill=\"url(#ramp)\"/>\n";
    s += "<text x=\"" + std::to_string(bar_x + bar_width + 4) + "\" y=\"" +
         std::to_string(bar_top + 8) + "\" font-size=\"9\">" + fmt("%.4g", vmax) + "</text>\n";
    s += "<text x=\"" + std::to_string(bar_x + bar_width + 4) + "\" y=\"" +
         std::to_string(bar_top + bar_height) + "\" font-size=\"9\">" + fmt("%.4g", vmin) +
         "</text>\n";
    s += "</svg>\n";
    return s;
}

} // namespace emgrid
