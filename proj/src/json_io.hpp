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

#include "json.hpp"

namespace emgrid::detail {

nlohmann::json geometry_to_json(const GridGeometry &g);
/// Throws nlohmann::json exceptions or Error(Format) on malformed input.
GridGeometry geometry_from_json(const nlohmann::json &j);

} // namespace emgrid::detail
