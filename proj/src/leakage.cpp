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

#include "emgrid/leakage.hpp"

#include "emgrid/error.hpp"

namespace emgrid {

const std::array<uint8_t, 16> &kLastRoundShiftMap = kInvShiftRows;

uint8_t first_round_sbox_output(const Block &plaintext, uint8_t guess, unsigned byte_index) {
    return kSbox[first_round_sbox_input(plaintext, guess, byte_index)];
}

unsigned last_round_hd_hypothesis(const Block &ciphertext, uint8_t guess, unsigned byte_index) {
    const uint8_t before = kInvSbox[ciphertext[kLastRoundShiftMap[byte_index]] ^ guess];
    return hamming_weight(static_cast<uint8_t>(ciphertext[byte_index] ^ before));
}

unsigned predict_leakage(const LeakageModel &model, Reduce reduce, const Block &public_input,
                         uint8_t guess) {
    switch (model.kind) {
    case LeakageKind::FirstRoundSboxInput: {
        const uint8_t v = first_round_sbox_input(public_input, guess, model.byte_index);
        return reduce == Reduce::Value ? v : hamming_weight(v);
    }
    case LeakageKind::FirstRoundSboxOutput: {
        const uint8_t v = first_round_sbox_output(public_input, guess, model.byte_index);
        return reduce == Reduce::Value ? v : hamming_weight(v);
    }
    case LeakageKind::LastRoundHD:
        return last_round_hd_hypothesis(public_input, guess, model.byte_index);
    }
    return 0;
}

uint8_t correct_guess(const LeakageModel &model, const Block &key) {
    if (model.kind == LeakageKind::LastRoundHD)
        return expand_key(key)[10][kLastRoundShiftMap[model.byte_index]];
    return key[model.byte_index];
}

unsigned true_intermediate(const LeakageModel &model, const Block &plaintext, const Block &key) {
    switch (model.kind) {
    case LeakageKind::FirstRoundSboxInput:
        return first_round_sbox_input(plaintext, key[model.byte_index], model.byte_index);
    case LeakageKind::FirstRoundSboxOutput:
        return first_round_sbox_output(plaintext, key[model.byte_index], model.byte_index);
    case LeakageKind::LastRoundHD: {
        const TracedEncryption t = aes128_encrypt_traced(plaintext, key);
        const unsigned i = model.byte_index;
        return hamming_weight(static_cast<uint8_t>(t.ciphertext[i] ^ t.round9_state[i]));
    }
    }
    return 0;
}

HypothesisMatrix build_hypothesis_matrix(std::span<const Block> publics, const LeakageModel &model,
                                         Reduce reduce) {
    HypothesisMatrix h;
    h.n = publics.size();
    h.values.resize(kCandidates * h.n);
    for (size_t j = 0; j < kCandidates; ++j)
        for (size_t i = 0; i < h.n; ++i)
            h.values[j * h.n + i] = static_cast<uint8_t>(
                predict_leakage(model, reduce, publics[i], static_cast<uint8_t>(j)));
    return h;
}

LeakageKind parse_leakage_kind(std::string_view name) {
    if (name == "sbox-in" || name == "FirstRoundSboxInput")
        return LeakageKind::FirstRoundSboxInput;
    if (name == "sbox-out" || name == "FirstRoundSboxOutput")
        return LeakageKind::FirstRoundSboxOutput;
    if (name == "last-round-hd" || name == "LastRoundHD")
        return LeakageKind::LastRoundHD;
    fail(ErrorKind::Usage, "unknown leakage target '" + std::string(name) +
                               "' (expected sbox-in, sbox-out or last-round-hd)");
}

std::string_view to_string(LeakageKind kind) {
    switch (kind) {
    case LeakageKind::FirstRoundSboxInput:
        return "sbox-in";
    case LeakageKind::FirstRoundSboxOutput:
        return "sbox-out";
    case LeakageKind::LastRoundHD:
        return "last-round-hd";
    }
    return "?";
}

Reduce parse_reduce(std::string_view name) {
    if (name == "value")
        return Reduce::Value;
    if (name == "hw" || name == "hamming_weight")
        return Reduce::HammingWeight;
    fail(ErrorKind::Usage, "unknown reduction '" + std::string(name) + "' (expected value or hw)");
}

std::string_view to_string(Reduce reduce) {
    return reduce == Reduce::Value ? "value" : "hw";
}

} // namespace emgrid
