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

#include "medrag/analysis.hpp"

#include <cmath>
#include <fmt/format.h>
#include <ostream>
#include <png.h>

#include "medrag/csv.hpp"
#include "medrag/error.hpp"

namespace medrag {

std::size_t BinSpec::bin_of(double v) const {
  if (std::isnan(v)) throw DomainError("bin_of: NaN");
  for (std::size_t i = kBins; i-- > 1;) {
    if (v >= edges[i]) return std::min(i, kBins - 1);
  }
  return 0;
}

std::string BinSpec::label(std::size_t bin) const {
  return fmt::format("[{:.1f},{:.1f}{}", edges[bin], edges[bin + 1], bin + 1 == kBins ? "]" : ")");
}

JointHistogram joint_histogram(const std::vector<std::pair<double, double>>& score_salience, const BinSpec& bins) {
  JointHistogram h;
  for (const auto& [s, c] : score_salience) {
    if (!bins.in_range(s)) ++h.score_out_of_range;
    if (!bins.in_range(c)) ++h.salience_out_of_range;
    h.counts[bins.bin_of(c)][bins.bin_of(s)]++;
    ++h.total;
  }
  return h;
}

TemporalDistribution temporal_distribution(const std::vector<std::pair<int, double>>& year_salience, int anchor,
                                           int last_year, int width, const BinSpec& bins) {
  if (width < 1 || last_year < anchor) throw DomainError("temporal_distribution: bad interval layout");
  TemporalDistribution d;
  const int n = std::max(1, (last_year - anchor) / width);
  std::vector<std::array<std::size_t, kBins>> counts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    TemporalRow r;
    r.first_year = anchor + i * width;
    r.last_year = i + 1 == n ? last_year : r.first_year + width - 1;
    d.rows.push_back(r);
  }
  for (const auto& [year, sal] : year_salience) {
    if (year < anchor || year > last_year) {
      ++d.out_of_range_years;
      continue;
    }
    const auto row = static_cast<std::size_t>(std::min(n - 1, (year - anchor) / width));
    counts[row][bins.bin_of(sal)]++;
    d.rows[row].documents++;
  }
  for (std::size_t i = 0; i < d.rows.size(); ++i) {
    if (d.rows[i].empty()) continue;
    for (std::size_t b = 0; b < kBins; ++b) {
      d.rows[i].proportions[b] = static_cast<double>(counts[i][b]) / static_cast<double>(d.rows[i].documents);
    }
  }
  return d;
}

void write_table3_csv(std::ostream& out, const JointHistogram& h, const BinSpec& bins) {
  csv::Row header = {"salience\\score"};
  for (std::size_t b = 0; b < kBins; ++b) header.push_back(bins.label(b));
  csv::write_row(out, header);
  for (std::size_t r = 0; r < kBins; ++r) {
    csv::Row row = {bins.label(r)};
    for (std::size_t c = 0; c < kBins; ++c) row.push_back(std::to_string(h.counts[r][c]));
    csv::write_row(out, row);
  }
}

void write_fig2_csv(std::ostream& out, const TemporalDistribution& d, const BinSpec& bins) {
  csv::Row header = {"interval", "documents", "empty"};
  for (std::size_t b = 0; b < kBins; ++b) header.push_back(bins.label(b));
  csv::write_row(out, header);
  for (const auto& r : d.rows) {
    csv::Row row = {fmt::format("{}-{}", r.first_year, r.last_year), std::to_string(r.documents),
                    r.empty() ? "1" : "0"};
    for (double p : r.proportions) row.push_back(fmt::format("{}", p));
    csv::write_row(out, row);
  }
}

void write_heatmap_png(const std::filesystem::path& path, const TemporalDistribution& d) {
  constexpr int kCell = 24;
  const int width = static_cast<int>(kBins) * kCell;
  const int height = static_cast<int>(d.rows.size()) * kCell;
  if (height == 0) throw DomainError("heatmap: no intervals");
  std::vector<unsigned char> pixels(static_cast<std::size_t>(width * height * 3));
  for (int y = 0; y < height; ++y) {
    const auto& row = d.rows[static_cast<std::size_t>(y / kCell)];
    for (int x = 0; x < width; ++x) {
      const double p = row.proportions[static_cast<std::size_t>(x / kCell)];
      auto* px = &pixels[static_cast<std::size_t>((y * width + x) * 3)];
      if (row.empty()) {
        px[0] = px[1] = px[2] = 200;
      } else {
        px[0] = 255;
        px[1] = px[2] = static_cast<unsigned char>(std::lround(255 * (1 - p)));
      }
    }
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels.data(), 0, nullptr)) {
    throw Error("cannot write " + path.string() + ": " + image.message);
  }
}

}  // namespace medrag
