#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfmlp/grid.hpp"
#include "sfmlp/rng.hpp"

namespace sfmlp {

enum class Task { kRegression, kBinaryClassification };

inline const char* task_name(Task t) {
  return t == Task::kRegression ? "regression" : "binary_classification";
}

inline Task task_from_name(const std::string& s) {
  if (s == "regression") return Task::kRegression;
  if (s == "binary_classification") return Task::kBinaryClassification;
  throw std::invalid_argument("unknown task: " + s);
}

// Irregular observations of one feature of one subject.
struct SparseCurve {
  std::string subject_id;
  int feature_id = 0;  // 0-based
  std::vector<double> times;
  std::vector<double> values;

  std::size_t size() const { return times.size(); }

  void validate(const TimeGrid& grid) const {
    if (times.size() != values.size())
      throw std::invalid_argument("SparseCurve " + subject_id +
                                  ": times/values length mismatch");
    if (times.empty())
      throw std::invalid_argument("SparseCurve " + subject_id + ": empty");
    for (std::size_t j = 0; j < times.size(); ++j) {
      if (!grid.contains(times[j]))
        throw std::invalid_argument("SparseCurve " + subject_id +
                                    ": time outside grid domain");
      if (j > 0 && !(times[j] > times[j - 1]))
        throw std::invalid_argument("SparseCurve " + subject_id +
                                    ": times not strictly increasing");
    }
  }
};

// N subjects x R features of sparse curves plus one response per subject.
struct FunctionalDataset {
  TimeGrid grid;
  Task task = Task::kRegression;
  int n_features = 0;
  std::vector<std::string> subject_ids;
  std::vector<double> responses;
  std::vector<std::vector<SparseCurve>> curves;  // [subject][feature]

  std::size_t n_subjects() const { return subject_ids.size(); }

  const SparseCurve& curve(std::size_t subject, int feature) const {
    return curves.at(subject).at(static_cast<std::size_t>(feature));
  }

  // Curves of one feature in subject order.
  std::vector<const SparseCurve*> feature_curves(int feature) const {
    std::vector<const SparseCurve*> out;
    out.reserve(n_subjects());
    for (const auto& row : curves)
      out.push_back(&row.at(static_cast<std::size_t>(feature)));
    return out;
  }

  FunctionalDataset subset(const std::vector<std::size_t>& subjects) const {
    FunctionalDataset out;
    out.grid = grid;
    out.task = task;
    out.n_features = n_features;
    out.subject_ids.reserve(subjects.size());
    out.responses.reserve(subjects.size());
    out.curves.reserve(subjects.size());
    for (std::size_t i : subjects) {
      out.subject_ids.push_back(subject_ids.at(i));
      out.responses.push_back(responses.at(i));
      out.curves.push_back(curves.at(i));
    }
    return out;
  }

  void validate() const {
    if (subject_ids.size() != responses.size() ||
        subject_ids.size() != curves.size())
      throw std::invalid_argument("FunctionalDataset: ragged subject arrays");
    for (std::size_t i = 0; i < curves.size(); ++i) {
      if (curves[i].size() != static_cast<std::size_t>(n_features))
        throw std::invalid_argument("FunctionalDataset: subject " +
                                    subject_ids[i] + " lacks feature curves");
      for (const auto& c : curves[i]) c.validate(grid);
      if (task == Task::kBinaryClassification && responses[i] != 0.0 &&
          responses[i] != 1.0)
        throw std::invalid_argument(
            "FunctionalDataset: classification label of subject " +
            subject_ids[i] + " is not 0/1");
    }
  }
};

// Capped remaining-useful-life label: constant early, linear near failure.
inline double piecewise_rul_label(double linear_rul, double cap) {
  if (linear_rul < 0.0) throw std::invalid_argument("linear RUL must be >= 0");
  if (!(cap > 0.0)) throw std::invalid_argument("RUL cap must be > 0");
  return std::min(cap, linear_rul);
}

// Per-feature affine map fitted by minmax_normalize. A degenerate feature
// (max == min) is mapped to the constant 0.5.
struct NormalizationMap {
  std::vector<double> min_value;
  std::vector<double> max_value;

  double apply(int feature, double z) const {
    double lo = min_value.at(static_cast<std::size_t>(feature));
    double hi = max_value.at(static_cast<std::size_t>(feature));
    if (hi == lo) return 0.5;
    return (z - lo) / (hi - lo);
  }

  double invert(int feature, double u) const {
    double lo = min_value.at(static_cast<std::size_t>(feature));
    double hi = max_value.at(static_cast<std::size_t>(feature));
    if (hi == lo) return lo;
    return lo + u * (hi - lo);
  }
};

inline std::pair<FunctionalDataset, NormalizationMap> minmax_normalize(
    const FunctionalDataset& ds) {
  NormalizationMap map;
  map.min_value.assign(static_cast<std::size_t>(ds.n_features),
                       std::numeric_limits<double>::infinity());
  map.max_value.assign(static_cast<std::size_t>(ds.n_features),
                       -std::numeric_limits<double>::infinity());
  for (const auto& row : ds.curves)
    for (const auto& c : row)
      for (double z : c.values) {
        auto r = static_cast<std::size_t>(c.feature_id);
        map.min_value[r] = std::min(map.min_value[r], z);
        map.max_value[r] = std::max(map.max_value[r], z);
      }
  for (int r = 0; r < ds.n_features; ++r)
    if (!std::isfinite(map.min_value[static_cast<std::size_t>(r)]))
      throw std::runtime_error("minmax_normalize: feature " +
                               std::to_string(r + 1) + " has no observations");
  FunctionalDataset out = ds;
  for (auto& row : out.curves)
    for (auto& c : row)
      for (double& z : c.values) z = map.apply(c.feature_id, z);
  return {std::move(out), std::move(map)};
}

// Keeps ceil(keep_fraction * M) points per curve, sampled without replacement
// from a per-(subject, feature) substream of the seed. The kept sets are
// nested across fractions: each curve draws a single permutation which is
// truncated, so a smaller fraction keeps a subset of a larger one.
inline FunctionalDataset sparsify(const FunctionalDataset& ds,
                                  double keep_fraction, std::uint64_t seed,
                                  bool keep_last) {
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0)
    throw std::invalid_argument("sparsify: keep_fraction must be in (0, 1]");
  FunctionalDataset out = ds;
  for (auto& row : out.curves) {
    for (auto& c : row) {
      std::size_t m = c.size();
      if (m == 0)
        throw std::invalid_argument("sparsify: curve " + c.subject_id +
                                    " is empty");
      auto k = static_cast<std::size_t>(
          std::ceil(keep_fraction * static_cast<double>(m) - 1e-9));
      k = std::clamp<std::size_t>(k, 1, m);
      if (k == m) continue;
      CounterRng rng(seed, fnv1a64(c.subject_id),
                     static_cast<std::uint64_t>(c.feature_id) + 1);
      std::vector<std::size_t> pool(keep_last ? m - 1 : m);
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      rng.shuffle(pool);
      std::vector<std::size_t> kept;
      kept.reserve(k);
      if (keep_last) {
        kept.push_back(m - 1);
        kept.insert(kept.end(), pool.begin(),
                    pool.begin() + static_cast<std::ptrdiff_t>(k - 1));
      } else {
        kept.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
      }
      std::sort(kept.begin(), kept.end());
      std::vector<double> t, z;
      t.reserve(k);
      z.reserve(k);
      for (std::size_t idx : kept) {
        t.push_back(c.times[idx]);
        z.push_back(c.values[idx]);
      }
      c.times = std::move(t);
      c.values = std::move(z);
    }
  }
  return out;
}

}  // namespace sfmlp
