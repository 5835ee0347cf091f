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

// Command-line front end. Every command resolves a flat key/value config
// (defaults, then --config file, then --set overrides, then flag shortcuts),
// rejects unknown keys and writes the resolved config to
// <out>/config.cfg before doing any work.
//
// Exit status: 0 success, 1 configuration error, 2 data error, 3 numeric
// failure, 4 unexpected internal error.

#ifndef M2M_CLI_HPP_
#define M2M_CLI_HPP_

#include <ostream>
#include <string>
#include <vector>

namespace m2m {

inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitInternal = 4;

/// Environment variable naming the default parent of output directories.
inline constexpr const char* kOutputRootEnv = "M2M_OUTPUT_ROOT";

/// args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace m2m

#endif  // M2M_CLI_HPP_
