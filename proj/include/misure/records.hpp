// Copyright 2026 The MiSuRe Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Per-(image, class) saliency records and their versioned CSV format.
//
// The first line of every records file is "# misure-records v<major>.<minor>";
// readers accept any minor version of a known major version.

#ifndef MISURE_RECORDS_HPP
#define MISURE_RECORDS_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "misure/errors.hpp"

namespace misure {

inline constexpr int kRecordsMajor = 1;
inline constexpr int kRecordsMinor = 0;

struct SaliencyRecord {
  std::string image_id;
  int class_id = 0;
  std::string method;
  std::string fingerprint;
  std::optional<int> n_dilations;  // MiSuRe only
  std::optional<double> dice_explained;
  std::optional<double> perturbation_ratio;
  double wall_time_s = 0.0;
  long prediction_size_px = 0;
  std::string saliency_path;
  std::string mask_path;
  std::string prediction_path;

  auto key() const { return std::tie(image_id, class_id, method); }
};

inline const std::vector<std::string>& record_columns() {
  static const std::vector<std::string> cols{
      "image_id", "class_id", "method", "fingerprint", "n_dilations", "dice_explained",
      "perturbation_ratio", "wall_time_s", "prediction_size_px", "saliency_path", "mask_path",
      "prediction_path"};
  return cols;
}

inline std::string records_version_line() {
  return "# misure-records v" + std::to_string(kRecordsMajor) + "." +
         std::to_string(kRecordsMinor);
}

namespace detail {

inline std::string fmt_real(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline void check_field(const std::string& s) {
  if (s.find_first_of(",\n\r") != std::string::npos)
    throw RecordError("record field contains a separator: '" + s + "'");
}

/// Checks "# <tag> v<major>.<minor>" against the supported major version.
inline void check_version_line(const std::string& line, const std::string& tag, int major,
                               const std::string& path) {
  const std::string prefix = "# " + tag + " v";
  if (line.rfind(prefix, 0) != 0) throw FormatError(path + ": missing '" + prefix + "' header");
  const auto rest = line.substr(prefix.size());
  int got = -1;
  try {
    got = std::stoi(rest.substr(0, rest.find('.')));
  } catch (const std::exception&) {
    throw FormatError(path + ": malformed version '" + rest + "'");
  }
  if (got != major)
    throw FormatError(path + ": unsupported " + tag + " major version " + std::to_string(got));
}

}  // namespace detail

inline void sort_records(std::vector<SaliencyRecord>& rs) {
  std::stable_sort(rs.begin(), rs.end(),
                   [](const auto& a, const auto& b) { return a.key() < b.key(); });
}

/// Writes the records; `with_timing = false` writes an empty wall_time_s
/// column so that repeated runs compare byte-for-byte.
inline void write_records(std::ostream& out, const std::vector<SaliencyRecord>& rs,
                          bool with_timing = true) {
  out << records_version_line() << "\n";
  const auto& cols = record_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  for (const auto& r : rs) {
    for (const auto* s : {&r.image_id, &r.method, &r.fingerprint, &r.saliency_path, &r.mask_path,
                          &r.prediction_path})
      detail::check_field(*s);
    out << r.image_id << ',' << r.class_id << ',' << r.method << ',' << r.fingerprint << ','
        << (r.n_dilations ? std::to_string(*r.n_dilations) : "") << ','
        << (r.dice_explained ? detail::fmt_real(*r.dice_explained) : "") << ','
        << (r.perturbation_ratio ? detail::fmt_real(*r.perturbation_ratio) : "") << ','
        << (with_timing ? detail::fmt_real(r.wall_time_s) : "") << ',' << r.prediction_size_px
        << ',' << r.saliency_path << ',' << r.mask_path << ',' << r.prediction_path << "\n";
  }
}

inline void save_records(const std::string& path, const std::vector<SaliencyRecord>& rs) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  write_records(out, rs);
}

inline std::vector<SaliencyRecord> read_records(std::istream& in, const std::string& path = "records") {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty records file");
  detail::check_version_line(line, "misure-records", kRecordsMajor, path);
  if (!std::getline(in, line)) throw FormatError(path + ": missing column header");
  const auto cols = detail::split_csv(line);
  if (cols != record_columns()) throw FormatError(path + ": unexpected columns");

  std::vector<SaliencyRecord> rs;
  int lineno = 2;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != cols.size())
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(cols.size()) + " fields");
    try {
      SaliencyRecord r;
      r.image_id = f[0];
      r.class_id = std::stoi(f[1]);
      r.method = f[2];
      r.fingerprint = f[3];
      if (!f[4].empty()) r.n_dilations = std::stoi(f[4]);
      if (!f[5].empty()) r.dice_explained = std::stod(f[5]);
      if (!f[6].empty()) r.perturbation_ratio = std::stod(f[6]);
      r.wall_time_s = f[7].empty() ? 0.0 : std::stod(f[7]);
      r.prediction_size_px = std::stol(f[8]);
      r.saliency_path = f[9];
      r.mask_path = f[10];
      r.prediction_path = f[11];
      rs.push_back(std::move(r));
    } catch (const std::invalid_argument&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": malformed number");
    } catch (const std::out_of_range&) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": number out of range");
    }
  }
  return rs;
}

inline std::vector<SaliencyRecord> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot read " + path);
  return read_records(in, path);
}

}  // namespace misure

#endif  // MISURE_RECORDS_HPP
