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

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace emgrid {

using Block = std::array<uint8_t, 16>;

/// Round keys 0..10, each 16 bytes in state order.
using KeySchedule = std::array<Block, 11>;

extern const std::array<uint8_t, 256> kSbox;
extern const std::array<uint8_t, 256> kInvSbox;

/// ShiftRows as a byte permutation on the column-major state:
/// after ShiftRows, byte i holds the byte previously at kShiftRows[i].
extern const std::array<uint8_t, 16> kShiftRows;
/// Inverse of kShiftRows: kShiftRows[kInvShiftRows[i]] == i.
extern const std::array<uint8_t, 16> kInvShiftRows;

KeySchedule expand_key(const Block &key);

/// Recovers the cipher key from the last round key by running the key
/// schedule backwards.
Block invert_key_schedule(const Block &round10_key);

Block aes128_encrypt(const Block &plaintext, const Block &key);

/// Encryption that also reports the state entering the final round
/// (i.e. after the round-9 AddRoundKey). The final-round register update
/// overwrites byte i of this state with ciphertext byte i.
struct TracedEncryption {
    Block ciphertext;
    Block round9_state;
};
TracedEncryption aes128_encrypt_traced(const Block &plaintext, const Block &key);

/// Parses 32 hex digits; throws emgrid::Error(Usage) otherwise.
Block parse_block_hex(std::string_view hex);
std::string to_hex(const Block &block);

} // namespace emgrid
