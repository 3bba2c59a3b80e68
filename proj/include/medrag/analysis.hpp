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

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace medrag {

inline constexpr std::size_t kBins = 5;

/// Edges 0, .2, .4, .6, .8, 1; bins are [lo, hi) except the last, [0.8, 1].
struct BinSpec {
  std::array<double, kBins + 1> edges = {0.0, 0.2, 0.4, 0.6, 0.8, 1.0};

  /// Bin of v, with values outside [0, 1] clamped to the end bins.
  std::size_t bin_of(double v) const;
  bool in_range(double v) const { return v >= edges.front() && v <= edges.back(); }
  std::string label(std::size_t bin) const;
};

struct JointHistogram {
  // counts[salience bin][score bin]
  std::array<std::array<std::size_t, kBins>, kBins> counts{};
  std::size_t total = 0;
  std::size_t score_out_of_range = 0;
  std::size_t salience_out_of_range = 0;
};

/// Bins (score, salience) points.
JointHistogram joint_histogram(const std::vector<std::pair<double, double>>& score_salience,
                               const BinSpec& bins = {});

struct TemporalRow {
  int first_year = 0;
  int last_year = 0;  // inclusive
  std::size_t documents = 0;
  std::array<double, kBins> proportions{};  // all zero when empty
  bool empty() const { return documents == 0; }
};

struct TemporalDistribution {
  std::vector<TemporalRow> rows;
  std::size_t out_of_range_years = 0;
};

/// Five-year intervals from `anchor`; the last interval also absorbs
/// `last_year` (1975-1979, ..., 2020-2025 by default). Years outside
/// [anchor, last_year] are tallied and skipped.
TemporalDistribution temporal_distribution(const std::vector<std::pair<int, double>>& year_salience,
                                           int anchor = 1975, int last_year = 2025, int width = 5,
                                           const BinSpec& bins = {});

/// 5x5 grid, salience rows by score columns, with bin labels.
void write_table3_csv(std::ostream& out, const JointHistogram& h, const BinSpec& bins = {});

/// interval,documents,empty and one proportion column per salience bin.
void write_fig2_csv(std::ostream& out, const TemporalDistribution& d, const BinSpec& bins = {});

/// Heatmap of the proportions, one row of cells per interval.
void write_heatmap_png(const std::filesystem::path& path, const TemporalDistribution& d);

}  // namespace medrag
