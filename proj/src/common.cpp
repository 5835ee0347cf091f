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

#include "m2m/common.hpp"

namespace m2m {

int64_t hop_length(Level level) { return level == Level::kHigh ? 128 : 32; }

std::string_view to_string(Level level) {
  return level == Level::kHigh ? "high" : "low";
}

Level parse_level(std::string_view text) {
  if (text == "high") return Level::kHigh;
  if (text == "low") return Level::kLow;
  throw ConfigError("unknown level '" + std::string(text) +
                    "' (expected high or low)");
}

}  // namespace m2m
