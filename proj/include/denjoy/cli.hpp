// Copyright 2026 The denjoy Authors
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

// Experiment driver: JSON configs in, reports out.

#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace denjoy::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPrecondition = 3;
inline constexpr int kExitInvariant = 4;

/// A post-condition the driver re-checks failed.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Report {
  nlohmann::json result;
  // named CSV tables; the first one is printed for --format csv
  std::vector<std::pair<std::string, std::string>> tables;
};

const std::vector<std::string>& commands();
std::string_view version();

/// Every key a command reads, with its default.
nlohmann::json default_config(std::string_view command);
/// Overlays `user` on `defaults`; unknown keys are a ParseError.
nlohmann::json merge_config(const nlohmann::json& defaults, const nlohmann::json& user);
/// Hex SHA-256 of the canonical dump of `config`.
std::string config_hash(const nlohmann::json& config);

/// Runs one command on a merged config.
Report run_command(std::string_view command, const nlohmann::json& config);

/// Full report: command, version, config hash, config and result.
nlohmann::json envelope(std::string_view command, const nlohmann::json& config,
                        const Report& r);

/// Pretty JSON with every floating point value at 17 significant digits.
std::string dump_json(const nlohmann::json& j);

/// Exit code for the current exception (call inside a catch block).
int exit_code_for_current_exception(std::ostream& err);

/// Command line entry point.
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace denjoy::cli
