// Copyright 2026 The medrag Authors.
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

#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace medrag {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Lowercase hex SHA-256 of a file's bytes. Throws Error if unreadable.
std::string sha256_file(const std::filesystem::path& path);

/// Key for a (premise, hypothesis) pair; the unit separator keeps
/// ("ab", "c") and ("a", "bc") apart.
inline std::string pair_hash(std::string_view premise, std::string_view hypothesis) {
  std::string joined;
  joined.reserve(premise.size() + hypothesis.size() + 1);
  joined.append(premise);
  joined.push_back('\x1f');
  joined.append(hypothesis);
  return sha256_hex(joined);
}

}  // namespace medrag
