#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vetime/common.hpp"

namespace vetime {

/// Raw univariate sequence. Values are unitless after normalization.
struct Series {
  std::vector<double> values;

  Series() = default;
  explicit Series(std::vector<double> v) : values(std::move(v)) {}

  std::size_t length() const { return values.size(); }

  void validate() const {
    require(!values.empty(), "Series must contain at least one value");
    require(all_finite(values), "Series contains non-finite values");
  }
};

/// Series plus optional point-level binary anomaly labels.
struct LabeledSeries {
  Series series;
  std::vector<std::uint8_t> labels;  // empty means unlabeled

  bool has_labels() const { return !labels.empty(); }

  void validate() const {
    series.validate();
    if (!labels.empty()) {
      require(labels.size() == series.length(),
              "label length must match series length");
      for (auto l : labels)
        require(l == 0 || l == 1, "labels must be binary");
    }
  }
};

/// Multivariate series: one equal-length value vector per variable.
struct MultiSeries {
  std::vector<Series> variables;
  std::vector<std::uint8_t> labels;  // shared across variables, may be empty

  std::size_t n_variables() const { return variables.size(); }
  std::size_t length() const {
    return variables.empty() ? 0 : variables.front().length();
  }

  void validate() const {
    require(!variables.empty(), "multivariate series needs >= 1 variable");
    const std::size_t L = variables.front().length();
    for (const auto& v : variables) {
      v.validate();
      require(v.length() == L, "all variables must have equal length");
    }
    if (!labels.empty())
      require(labels.size() == L, "label length must match series length");
  }
};

struct NormStats {
  double mean = 0.0;
  double std = 0.0;
  double epsilon = 1e-8;
};

/// Zero-mean unit-variance scaling (population std). A constant series maps
/// to all zeros instead of raising; NormStats always inverts exactly.
inline std::pair<Series, NormStats> instance_normalize(const Series& s,
                                                       double epsilon = 1e-8) {
  s.validate();
  require(epsilon > 0.0, "epsilon must be positive");
  const std::size_t L = s.length();
  double mean = 0.0;
  for (double x : s.values) mean += x;
  mean /= static_cast<double>(L);
  double var = 0.0;
  for (double x : s.values) var += (x - mean) * (x - mean);
  var /= static_cast<double>(L);
  const double std_dev = std::sqrt(var);

  NormStats stats{mean, std_dev, epsilon};
  Series out;
  out.values.resize(L);
  if (std_dev > epsilon) {
    for (std::size_t i = 0; i < L; ++i)
      out.values[i] = (s.values[i] - mean) / std_dev;
  } else {
    std::fill(out.values.begin(), out.values.end(), 0.0);
  }
  return {std::move(out), stats};
}

inline Series denormalize(const Series& s, const NormStats& stats) {
  Series out;
  out.values.resize(s.length());
  if (stats.std > stats.epsilon) {
    for (std::size_t i = 0; i < s.length(); ++i)
      out.values[i] = s.values[i] * stats.std + stats.mean;
  } else {
    std::fill(out.values.begin(), out.values.end(), stats.mean);
  }
  return out;
}

/// Non-overlapping patches of the series, row i = values [i*p, (i+1)*p).
/// A trailing partial patch is padded by repeating the final observed value.
struct PatchGrid {
  std::vector<std::vector<double>> tokens;  // n_patches x patch_size
  int patch_size = 0;
  int pad_len = 0;

  int n_patches() const { return static_cast<int>(tokens.size()); }
};

inline PatchGrid patchify(const Series& s, int patch_size) {
  s.validate();
  require(patch_size >= 1, "patch_size must be >= 1");
  const std::size_t L = s.length();
  const std::size_t n =
      (L + static_cast<std::size_t>(patch_size) - 1) / patch_size;
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.pad_len = static_cast<int>(n * patch_size - L);
  grid.tokens.assign(n, std::vector<double>(patch_size));
  const double last = s.values.back();
  for (std::size_t i = 0; i < n; ++i) {
    for (int j = 0; j < patch_size; ++j) {
      const std::size_t t = i * patch_size + j;
      grid.tokens[i][j] = t < L ? s.values[t] : last;
    }
  }
  return grid;
}

inline Series unpatchify(const PatchGrid& grid, std::size_t L) {
  Series out;
  out.values.reserve(L);
  for (const auto& row : grid.tokens)
    for (double v : row) {
      if (out.values.size() == L) return out;
      out.values.push_back(v);
    }
  expect(out.values.size() == L, "patch grid shorter than requested length");
  return out;
}

struct PatchLabels {
  std::vector<std::uint8_t> flags;

  int n_patches() const { return static_cast<int>(flags.size()); }
};

/// flag[i] = OR of point labels inside patch i; the padded tail contributes 0.
inline PatchLabels point_labels_to_patch_labels(
    const std::vector<std::uint8_t>& labels, int patch_size) {
  require(patch_size >= 1, "patch_size must be >= 1");
  for (auto l : labels) require(l == 0 || l == 1, "labels must be binary");
  const std::size_t L = labels.size();
  const std::size_t n =
      (L + static_cast<std::size_t>(patch_size) - 1) / patch_size;
  PatchLabels out;
  out.flags.assign(n, 0);
  for (std::size_t t = 0; t < L; ++t)
    if (labels[t]) out.flags[t / patch_size] = 1;
  return out;
}

}  // namespace vetime
