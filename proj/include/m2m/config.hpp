// Copyright 2026 The motion2music Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Flat `key = value` configuration text. Blank lines and lines starting with
// '#' are ignored; later assignments override earlier ones.

#ifndef M2M_CONFIG_HPP_
#define M2M_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>

namespace m2m {

using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text);
KeyValues load_key_values(const std::filesystem::path& path);
std::string format_key_values(const KeyValues& values);

/// Applies a single "key=value" override.
void apply_override(KeyValues& values, std::string_view assignment);

/// Throws ConfigError naming the first key not in `known`.
void reject_unknown_keys(const KeyValues& values, const std::set<std::string>& known);

double parse_double(const std::string& key, const std::string& value);
int64_t parse_int(const std::string& key, const std::string& value);
uint64_t parse_uint(const std::string& key, const std::string& value);
/// Accepts true/false/1/0/yes/no/on/off.
bool parse_bool(const std::string& key, const std::string& value);

/// Round-trippable decimal text for a double.
std::string format_double(double value);

}  // namespace m2m

#endif  // M2M_CONFIG_HPP_
