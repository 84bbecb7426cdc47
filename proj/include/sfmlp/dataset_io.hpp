#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sfmlp/curve.hpp"
#include "sfmlp/grid.hpp"

namespace sfmlp {

struct LoadReport {
  std::size_t rejected_rows = 0;  // rows with time outside the grid domain
  std::size_t skipped_units = 0;  // units shorter than the sliding window
};

namespace io_detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

inline double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::runtime_error(context + ": cannot parse number '" +
                             std::string(s) + "'");
  return v;
}

inline long parse_long(std::string_view s, const std::string& context) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::runtime_error(context + ": cannot parse integer '" +
                             std::string(s) + "'");
  return v;
}

// 17 significant digits: enough to round-trip any double exactly.
inline std::string format_double(double v) {
  char buf[40];
  auto [ptr, ec] =
      std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  return in;
}

inline Task infer_task(const std::vector<double>& labels) {
  for (double y : labels)
    if (y != 0.0 && y != 1.0) return Task::kRegression;
  return Task::kBinaryClassification;
}

}  // namespace io_detail

// Labels file: header `subject,label`, one row per subject.
inline std::map<std::string, double> load_labels_csv(const std::string& path) {
  auto in = io_detail::open_input(path);
  std::string line;
  if (!std::getline(in, line) ||
      io_detail::trim(line) != std::string_view("subject,label"))
    throw std::runtime_error(path + ": expected header 'subject,label'");
  std::map<std::string, double> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (io_detail::trim(line).empty()) continue;
    auto cells = io_detail::split_csv(line);
    if (cells.size() != 2)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 2 columns");
    std::string subject(cells[0]);
    double y = io_detail::parse_double(cells[1], path);
    if (!labels.emplace(subject, y).second)
      throw std::runtime_error(path + ": duplicate label for subject " + subject);
  }
  return labels;
}

namespace io_detail {

struct RawCurves {
  // subject order of first appearance
  std::vector<std::string> subject_order;
  std::map<std::string, std::map<long, std::vector<std::pair<double, double>>>> data;
  std::set<long> feature_ids;
};

inline RawCurves read_long_rows(const std::string& path, const TimeGrid& grid,
                                LoadReport* report) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line) ||
      trim(line) != std::string_view("subject,feature,time,value"))
    throw std::runtime_error(path +
                             ": expected header 'subject,feature,time,value'");
  RawCurves raw;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != 4)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 4 columns");
    std::string subject(cells[0]);
    long feature = parse_long(cells[1], path);
    double t = parse_double(cells[2], path);
    double z = parse_double(cells[3], path);
    if (!grid.contains(t)) {
      if (report) ++report->rejected_rows;
      continue;
    }
    if (raw.data.find(subject) == raw.data.end())
      raw.subject_order.push_back(subject);
    raw.data[subject][feature].emplace_back(t, z);
    raw.feature_ids.insert(feature);
  }
  if (raw.subject_order.empty())
    throw std::runtime_error(path + ": no data rows");
  return raw;
}

}  // namespace io_detail

// Long-format CSV: `subject,feature,time,value` plus a companion label file.
// Distinct feature ids are mapped in sorted order to the 0-based internal
// indices; rows outside the grid domain are rejected (counted in the report).
inline FunctionalDataset load_long_csv(
    const std::string& data_path, const std::string& labels_path,
    const TimeGrid& grid, std::optional<Task> task_override = std::nullopt,
    LoadReport* report = nullptr) {
  auto raw = io_detail::read_long_rows(data_path, grid, report);
  auto labels = load_labels_csv(labels_path);

  std::vector<std::string> unlabeled;
  for (const auto& s : raw.subject_order)
    if (labels.find(s) == labels.end()) unlabeled.push_back(s);
  if (!unlabeled.empty()) {
    std::string msg = data_path + ": subjects without label:";
    for (const auto& s : unlabeled) msg += " " + s;
    throw std::runtime_error(msg);
  }
  for (const auto& [subject, y] : labels)
    if (raw.data.find(subject) == raw.data.end())
      throw std::runtime_error(labels_path + ": label for unknown subject " +
                               subject);

  std::vector<long> features(raw.feature_ids.begin(), raw.feature_ids.end());
  FunctionalDataset ds;
  ds.grid = grid;
  ds.n_features = static_cast<int>(features.size());
  for (const auto& subject : raw.subject_order) {
    auto& per_feature = raw.data[subject];
    std::vector<SparseCurve> row;
    row.reserve(features.size());
    for (std::size_t r = 0; r < features.size(); ++r) {
      auto it = per_feature.find(features[r]);
      if (it == per_feature.end())
        throw std::runtime_error(data_path + ": subject " + subject +
                                 " has no observations for feature " +
                                 std::to_string(features[r]));
      auto& pts = it->second;
      std::sort(pts.begin(), pts.end());
      for (std::size_t j = 1; j < pts.size(); ++j)
        if (pts[j].first == pts[j - 1].first)
          throw std::runtime_error(data_path + ": duplicate time " +
                                   io_detail::format_double(pts[j].first) +
                                   " for subject " + subject + ", feature " +
                                   std::to_string(features[r]));
      SparseCurve c;
      c.subject_id = subject;
      c.feature_id = static_cast<int>(r);
      c.times.reserve(pts.size());
      c.values.reserve(pts.size());
      for (auto& [t, z] : pts) {
        c.times.push_back(t);
        c.values.push_back(z);
      }
      row.push_back(std::move(c));
    }
    ds.curves.push_back(std::move(row));
    ds.subject_ids.push_back(subject);
    ds.responses.push_back(labels[subject]);
  }
  ds.task = task_override ? *task_override : io_detail::infer_task(ds.responses);
  ds.validate();
  return ds;
}

// Same long format, no label file; responses are NaN and the task must be
// supplied by the caller (prediction-time loading).
inline FunctionalDataset load_long_csv_unlabeled(const std::string& data_path,
                                                 const TimeGrid& grid,
                                                 Task task = Task::kRegression,
                                                 LoadReport* report = nullptr) {
  auto raw = io_detail::read_long_rows(data_path, grid, report);
  std::vector<long> features(raw.feature_ids.begin(), raw.feature_ids.end());
  FunctionalDataset ds;
  ds.grid = grid;
  ds.task = task;
  ds.n_features = static_cast<int>(features.size());
  for (const auto& subject : raw.subject_order) {
    auto& per_feature = raw.data[subject];
    std::vector<SparseCurve> row;
    for (std::size_t r = 0; r < features.size(); ++r) {
      auto it = per_feature.find(features[r]);
      if (it == per_feature.end())
        throw std::runtime_error(data_path + ": subject " + subject +
                                 " has no observations for feature " +
                                 std::to_string(features[r]));
      auto& pts = it->second;
      std::sort(pts.begin(), pts.end());
      SparseCurve c;
      c.subject_id = subject;
      c.feature_id = static_cast<int>(r);
      for (auto& [t, z] : pts) {
        c.times.push_back(t);
        c.values.push_back(z);
      }
      row.push_back(std::move(c));
    }
    ds.curves.push_back(std::move(row));
    ds.subject_ids.push_back(subject);
    ds.responses.push_back(std::numeric_limits<double>::quiet_NaN());
  }
  return ds;
}

inline std::string to_long_csv(const FunctionalDataset& ds) {
  std::string out = "subject,feature,time,value\n";
  for (std::size_t i = 0; i < ds.n_subjects(); ++i)
    for (const auto& c : ds.curves[i])
      for (std::size_t j = 0; j < c.size(); ++j) {
        out += ds.subject_ids[i];
        out += ',';
        out += std::to_string(c.feature_id + 1);
        out += ',';
        out += io_detail::format_double(c.times[j]);
        out += ',';
        out += io_detail::format_double(c.values[j]);
        out += '\n';
      }
  return out;
}

inline std::string to_labels_csv(const FunctionalDataset& ds) {
  std::string out = "subject,label\n";
  for (std::size_t i = 0; i < ds.n_subjects(); ++i) {
    out += ds.subject_ids[i];
    out += ',';
    out += io_detail::format_double(ds.responses[i]);
    out += '\n';
  }
  return out;
}

inline void save_long_csv(const FunctionalDataset& ds,
                          const std::string& data_path,
                          const std::string& labels_path) {
  std::ofstream data(data_path);
  if (!data) throw std::runtime_error("cannot write file: " + data_path);
  data << to_long_csv(ds);
  std::ofstream labels(labels_path);
  if (!labels) throw std::runtime_error("cannot write file: " + labels_path);
  labels << to_labels_csv(ds);
}

// Turbofan degradation text format: whitespace-separated rows of
// unit, cycle, 3 operating settings, 21 sensors. Every contiguous window of
// window_len cycles becomes one subject with times rescaled to [0, 1] and a
// capped RUL response taken at the window's last cycle. Units shorter than
// the window are skipped (counted in the report). When detrend_conditions is
// set, each sensor is centered per operating-condition cluster (settings
// rounded to one decimal) and shifted back to its global mean.
inline FunctionalDataset load_cmapss(const std::string& path,
                                     const TimeGrid& grid, int window_len,
                                     double rul_cap,
                                     bool detrend_conditions = false,
                                     LoadReport* report = nullptr) {
  if (window_len < 2)
    throw std::invalid_argument("load_cmapss: window_len must be >= 2");
  auto in = io_detail::open_input(path);

  struct Row {
    long cycle;
    std::array<double, 3> settings;
    std::array<double, 21> sensors;
  };
  std::map<long, std::vector<Row>> units;
  std::vector<long> unit_order;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::vector<double> cols;
    double v;
    while (ss >> v) cols.push_back(v);
    if (cols.empty()) continue;
    if (cols.size() != 26)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected 26 columns, got " +
                               std::to_string(cols.size()));
    Row row;
    long unit = static_cast<long>(cols[0]);
    row.cycle = static_cast<long>(cols[1]);
    for (int k = 0; k < 3; ++k) row.settings[static_cast<std::size_t>(k)] = cols[static_cast<std::size_t>(2 + k)];
    for (int k = 0; k < 21; ++k) row.sensors[static_cast<std::size_t>(k)] = cols[static_cast<std::size_t>(5 + k)];
    if (units.find(unit) == units.end()) unit_order.push_back(unit);
    units[unit].push_back(row);
  }
  if (unit_order.empty()) throw std::runtime_error(path + ": no data rows");
  for (auto& [unit, rows] : units)
    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return a.cycle < b.cycle; });

  if (detrend_conditions) {
    auto cluster_key = [](const std::array<double, 3>& s) {
      long a = std::lround(s[0] * 10.0);
      long b = std::lround(s[1] * 10.0);
      long c = std::lround(s[2] * 10.0);
      return std::to_string(a) + "/" + std::to_string(b) + "/" +
             std::to_string(c);
    };
    std::array<double, 21> global_sum{};
    std::size_t global_n = 0;
    std::map<std::string, std::pair<std::array<double, 21>, std::size_t>> clusters;
    for (const auto& [unit, rows] : units)
      for (const Row& row : rows) {
        auto& [sum, n] = clusters[cluster_key(row.settings)];
        for (int k = 0; k < 21; ++k) {
          sum[static_cast<std::size_t>(k)] += row.sensors[static_cast<std::size_t>(k)];
          global_sum[static_cast<std::size_t>(k)] += row.sensors[static_cast<std::size_t>(k)];
        }
        ++n;
        ++global_n;
      }
    for (auto& [unit, rows] : units)
      for (Row& row : rows) {
        const auto& [sum, n] = clusters[cluster_key(row.settings)];
        for (int k = 0; k < 21; ++k) {
          auto s = static_cast<std::size_t>(k);
          double cluster_mean = sum[s] / static_cast<double>(n);
          double global_mean = global_sum[s] / static_cast<double>(global_n);
          row.sensors[s] = row.sensors[s] - cluster_mean + global_mean;
        }
      }
  }

  FunctionalDataset ds;
  ds.grid = grid;
  ds.task = Task::kRegression;
  ds.n_features = 21;
  auto window = static_cast<std::size_t>(window_len);
  for (long unit : unit_order) {
    const auto& rows = units[unit];
    if (rows.size() < window) {
      if (report) ++report->skipped_units;
      continue;
    }
    long last_cycle = rows.back().cycle;
    for (std::size_t start = 0; start + window <= rows.size(); ++start) {
      std::string subject =
          "u" + std::to_string(unit) + "w" + std::to_string(start + 1);
      std::vector<SparseCurve> row_curves(21);
      for (int r = 0; r < 21; ++r) {
        auto& c = row_curves[static_cast<std::size_t>(r)];
        c.subject_id = subject;
        c.feature_id = r;
        c.times.reserve(window);
        c.values.reserve(window);
        for (std::size_t j = 0; j < window; ++j) {
          c.times.push_back(static_cast<double>(j) /
                            static_cast<double>(window - 1));
          c.values.push_back(rows[start + j].sensors[static_cast<std::size_t>(r)]);
        }
      }
      double linear_rul =
          static_cast<double>(last_cycle - rows[start + window - 1].cycle);
      ds.subject_ids.push_back(subject);
      ds.responses.push_back(piecewise_rul_label(linear_rul, rul_cap));
      ds.curves.push_back(std::move(row_curves));
    }
  }
  if (ds.subject_ids.empty())
    throw std::runtime_error(path + ": every unit is shorter than the window");
  ds.validate();
  return ds;
}

}  // namespace sfmlp
