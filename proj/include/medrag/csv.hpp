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

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "medrag/error.hpp"

namespace medrag::csv {

using Row = std::vector<std::string>;

inline std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline void write_row(std::ostream& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out << ',';
    out << quote(row[i]);
  }
  out << '\n';
}

/// Reads one record; false at end of input. Quoted fields may span lines.
inline bool read_row(std::istream& in, Row& row) {
  row.clear();
  if (in.peek() == std::char_traits<char>::eof()) return false;
  std::string field;
  bool quoted = false;
  bool any = false;
  for (int ch; (ch = in.get()) != std::char_traits<char>::eof();) {
    any = true;
    const char c = static_cast<char>(ch);
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field += c;
    }
  }
  if (quoted) throw ParseError(0, "unterminated quoted CSV field");
  if (any) row.push_back(std::move(field));
  return any;
}

/// All rows after the header, which must equal `expected_header`.
inline std::vector<Row> read_table(std::istream& in, const Row& expected_header) {
  Row header;
  if (!read_row(in, header) || header != expected_header) {
    throw ParseError(1, "unexpected CSV header");
  }
  std::vector<Row> rows;
  Row r;
  std::size_t line = 1;
  while (read_row(in, r)) {
    ++line;
    if (r.size() != expected_header.size()) {
      throw ParseError(line, "expected " + std::to_string(expected_header.size()) + " fields");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace medrag::csv
