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

#include <bit>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace emgrid {

constexpr size_t kCandidates = 256;

enum class LeakageKind { FirstRoundSboxInput, FirstRoundSboxOutput, LastRoundHD };

/// Reduction applied to an intermediate value before it is used as a
/// hypothesis or class label.
enum class Reduce { Value, HammingWeight };

struct LeakageModel {
    LeakageKind kind = LeakageKind::FirstRoundSboxInput;
    unsigned byte_index = 0;

    bool uses_ciphertext() const { return kind == LeakageKind::LastRoundHD; }
    bool operator==(const LeakageModel &) const = default;
};

constexpr unsigned hamming_weight(uint8_t v) noexcept { return std::popcount(v); }

constexpr uint8_t first_round_sbox_input(const Block &plaintext, uint8_t guess,
                                         unsigned byte_index) noexcept {
    return plaintext[byte_index] ^ guess;
}

uint8_t first_round_sbox_output(const Block &plaintext, uint8_t guess, unsigned byte_index);

/// Hamming distance of the final-round register update at `byte_index`:
///
///   HW(ct[i] ^ InvSbox[ct[kLastRoundShiftMap[i]] ^ guess])
///
/// The guess is the round-10 key byte at kLastRoundShiftMap[i]. The map is
/// inverse ShiftRows:
///
///   i:   0  1  2  3  4  5  6  7  8  9 10 11 12 13 14 15
///   map: 0 13 10  7  4  1 14 11  8  5  2 15 12  9  6  3
unsigned last_round_hd_hypothesis(const Block &ciphertext, uint8_t guess, unsigned byte_index);

extern const std::array<uint8_t, 16> &kLastRoundShiftMap;

/// Value of the hypothesis for one (public input, guess) pair under `model`,
/// after reduction. LastRoundHD is already a distance and ignores `reduce`.
unsigned predict_leakage(const LeakageModel &model, Reduce reduce, const Block &public_input,
                         uint8_t guess);

/// The guess that is correct for `model` given the cipher key: the key byte
/// for first-round targets, the matching round-10 key byte for LastRoundHD.
uint8_t correct_guess(const LeakageModel &model, const Block &key);

/// The true (unreduced for first-round targets) intermediate a trace
/// processed with `key` leaks under `model`.
unsigned true_intermediate(const LeakageModel &model, const Block &plaintext, const Block &key);

/// Row-major 256 x n matrix of hypothesis values.
struct HypothesisMatrix {
    size_t n = 0;
    std::vector<uint8_t> values;

    uint8_t at(size_t guess, size_t trace) const { return values[guess * n + trace]; }
};

/// Builds H from public inputs: plaintexts for first-round models,
/// ciphertexts for LastRoundHD.
HypothesisMatrix build_hypothesis_matrix(std::span<const Block> publics, const LeakageModel &model,
                                         Reduce reduce);

LeakageKind parse_leakage_kind(std::string_view name);
std::string_view to_string(LeakageKind kind);
Reduce parse_reduce(std::string_view name);
std::string_view to_string(Reduce reduce);

} // namespace emgrid
