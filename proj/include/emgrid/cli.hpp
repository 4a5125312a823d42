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

#include "emgrid/error.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace emgrid::cli {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitUsage = 2;
constexpr int kExitPrecondition = 3;

int exit_code(ErrorKind kind);

/// Runs one subcommand. `args` excludes the program name. Help text goes
/// to `out`; progress and metrics go to `log` as one JSON object per line.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &log);

} // namespace emgrid::cli
