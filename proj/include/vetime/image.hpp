#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "vetime/common.hpp"
#include "vetime/series.hpp"

namespace vetime {

constexpr int kCanvas = 224;

/// Trend / remainder split of a series. remainder = raw - trend exactly.
struct Decomposition {
  Series raw;
  Series trend;
  Series remainder;
  int kernel = 1;
};

/// Centered moving average with edge replication; remainder is the residue.
inline Decomposition decompose_trend_remainder(const Series& s, int kernel) {
  s.validate();
  require(kernel >= 1 && kernel % 2 == 1, "kernel must be odd and >= 1");
  const std::int64_t L = static_cast<std::int64_t>(s.length());
  const std::int64_t half = kernel / 2;
  Decomposition d;
  d.raw = s;
  d.kernel = kernel;
  d.trend.values.resize(L);
  d.remainder.values.resize(L);
  for (std::int64_t i = 0; i < L; ++i) {
    double acc = 0.0;
    for (std::int64_t j = i - half; j <= i + half; ++j) {
      const std::int64_t k = std::clamp<std::int64_t>(j, 0, L - 1);
      acc += s.values[k];
    }
    d.trend.values[i] = acc / double(kernel);
    d.remainder.values[i] = s.values[i] - d.trend.values[i];
  }
  return d;
}

/// One channel's min-max scaling record. A (near-)constant channel maps to
/// intensity 128 everywhere and is flagged so inversion returns the constant.
struct ChannelScale {
  double min = 0.0;
  double max = 0.0;
  bool constant = false;
};

/// 1 x L x 3 intensity row, channels R=raw, G=trend, B=remainder, each
/// independently min-max scaled to [0, 255]. Intensities stay as doubles;
/// nothing is quantized to 8 bits inside the pipeline.
struct RGBRow {
  std::vector<std::array<double, 3>> intensities;
  std::array<ChannelScale, 3> scales;

  std::size_t length() const { return intensities.size(); }
};

namespace detail {

inline bool channel_is_constant(double mn, double mx) {
  const double span = mx - mn;
  const double ref = std::max({1.0, std::abs(mn), std::abs(mx)});
  return span <= 1e-12 * ref;
}

}  // namespace detail

inline RGBRow intensity_map(const Decomposition& d) {
  const std::size_t L = d.raw.length();
  RGBRow row;
  row.intensities.assign(L, {0.0, 0.0, 0.0});
  const std::vector<double>* channels[3] = {&d.raw.values, &d.trend.values,
                                            &d.remainder.values};
  for (int ch = 0; ch < 3; ++ch) {
    const auto& v = *channels[ch];
    const auto [mn_it, mx_it] = std::minmax_element(v.begin(), v.end());
    ChannelScale sc{*mn_it, *mx_it, detail::channel_is_constant(*mn_it, *mx_it)};
    row.scales[ch] = sc;
    for (std::size_t i = 0; i < L; ++i)
      row.intensities[i][ch] =
          sc.constant ? 128.0 : (v[i] - sc.min) * 255.0 / (sc.max - sc.min);
  }
  return row;
}

/// Smallest lag in [2, L/2] whose unbiased autocorrelation clears the 0.3
/// significance cut; otherwise ceil(sqrt(L)). The result is rounded up to a
/// positive multiple of the visual patch edge and kept <= max(patch, L).
inline int estimate_fold_period(const Series& s, int visual_patch) {
  s.validate();
  require(visual_patch >= 1, "visual_patch must be >= 1");
  const std::int64_t L = static_cast<std::int64_t>(s.length());

  auto finalize = [&](std::int64_t candidate) {
    std::int64_t t = ((candidate + visual_patch - 1) / visual_patch) * visual_patch;
    if (t > L) t = (L / visual_patch) * visual_patch;  // largest multiple <= L
    return static_cast<int>(std::max<std::int64_t>(t, visual_patch));
  };

  if (L < 4) return visual_patch;

  double mean = 0.0;
  for (double x : s.values) mean += x;
  mean /= double(L);
  double var = 0.0;
  for (double x : s.values) var += (x - mean) * (x - mean);
  var /= double(L);

  const std::int64_t sqrt_fallback =
      static_cast<std::int64_t>(std::ceil(std::sqrt(double(L))));
  if (var <= 1e-12) return finalize(sqrt_fallback);

  std::int64_t best_lag = 0;
  double best_r = -std::numeric_limits<double>::infinity();
  for (std::int64_t lag = 2; lag <= L / 2; ++lag) {
    double acc = 0.0;
    for (std::int64_t t = 0; t + lag < L; ++t)
      acc += (s.values[t] - mean) * (s.values[t + lag] - mean);
    const double r = (acc / double(L - lag)) / var;
    // strict margin keeps the smallest lag when harmonics tie within fp noise
    if (r > best_r + 1e-9) {
      best_r = r;
      best_lag = lag;
    }
  }
  const std::int64_t candidate = best_r >= 0.3 ? best_lag : sqrt_fallback;
  return finalize(candidate);
}

/// T_fold x n_cols x 3 grid. Rows are within-period phase (vertical axis),
/// columns are successive periods (horizontal time axis).
struct FoldGrid {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;  // (r * cols + c) * 3 + ch

  double& at(int r, int c, int ch) { return data[(std::size_t(r) * cols + c) * 3 + ch]; }
  double at(int r, int c, int ch) const {
    return data[(std::size_t(r) * cols + c) * 3 + ch];
  }
};

enum class VerticalMode { replicate, pool };

/// Geometry + scaling metadata that makes the image conversion invertible.
struct FoldPlan {
  int t_fold = 1;
  int n_cols = 1;
  int pad_len_fold = 0;
  std::int64_t length = 0;  // pre-fold row length (N_v * L for multivariate)
  int canvas = kCanvas;

  std::vector<std::array<ChannelScale, 3>> var_scales;  // one set per variable
  std::vector<double> gammas;                           // per-variable gamma
  int n_variables = 1;

  VerticalMode v_mode = VerticalMode::replicate;
  std::vector<int> v_scale;  // canvas row -> source row

  struct HWeight {
    int c0 = 0;
    int c1 = 0;
    double w0 = 1.0;
    double w1 = 0.0;
  };
  std::vector<HWeight> h_scale;  // canvas col -> source column weights

  bool line_plot = false;  // ablation rendering; geometry not invertible

  std::int64_t var_length() const { return length / n_variables; }
};

/// Folds a 1 x L x 3 row into (T_fold, ceil(L/T_fold), 3). Missing trailing
/// cells take the per-channel mean of the final T_fold observed values.
inline std::pair<FoldGrid, FoldPlan> fold(const RGBRow& row, int t_fold) {
  require(t_fold >= 1, "T_fold must be >= 1");
  const std::int64_t L = static_cast<std::int64_t>(row.length());
  require(L >= 1, "empty intensity row");
  const int n_cols = static_cast<int>((L + t_fold - 1) / t_fold);

  std::array<double, 3> pad{};
  const std::int64_t tail_start = std::max<std::int64_t>(0, L - t_fold);
  for (int ch = 0; ch < 3; ++ch) {
    double acc = 0.0;
    for (std::int64_t i = tail_start; i < L; ++i) acc += row.intensities[i][ch];
    pad[ch] = acc / double(L - tail_start);
  }

  FoldGrid grid;
  grid.rows = t_fold;
  grid.cols = n_cols;
  grid.data.resize(std::size_t(t_fold) * n_cols * 3);
  for (int r = 0; r < t_fold; ++r)
    for (int c = 0; c < n_cols; ++c) {
      const std::int64_t idx = std::int64_t(c) * t_fold + r;
      for (int ch = 0; ch < 3; ++ch)
        grid.at(r, c, ch) = idx < L ? row.intensities[idx][ch] : pad[ch];
    }

  FoldPlan plan;
  plan.t_fold = t_fold;
  plan.n_cols = n_cols;
  plan.pad_len_fold = static_cast<int>(std::int64_t(t_fold) * n_cols - L);
  plan.length = L;
  plan.var_scales = {row.scales};
  plan.gammas = {1.0};
  return {std::move(grid), std::move(plan)};
}

/// Exact inverse of fold on the first L entries.
inline std::vector<std::array<double, 3>> unfold(const FoldGrid& grid,
                                                 std::int64_t L) {
  std::vector<std::array<double, 3>> out(L);
  for (std::int64_t i = 0; i < L; ++i) {
    const int r = static_cast<int>(i % grid.rows);
    const int c = static_cast<int>(i / grid.rows);
    for (int ch = 0; ch < 3; ++ch) out[i][ch] = grid.at(r, c, ch);
  }
  return out;
}

/// 224 x 224 x 3 canvas with the plan that produced it.
struct CanvasImage {
  std::vector<double> pixels;  // (y * 224 + x) * 3 + ch
  FoldPlan plan;

  double& at(int y, int x, int ch) {
    return pixels[(std::size_t(y) * kCanvas + x) * 3 + ch];
  }
  double at(int y, int x, int ch) const {
    return pixels[(std::size_t(y) * kCanvas + x) * 3 + ch];
  }
};

namespace detail {

/// Horizontal weights for resizing n_cols -> canvas: position j maps to
/// u = j * n_cols / canvas, so every source column is hit exactly when
/// n_cols divides the canvas width.
inline std::vector<FoldPlan::HWeight> horizontal_weights(int n_cols, int canvas) {
  std::vector<FoldPlan::HWeight> ws(canvas);
  for (int j = 0; j < canvas; ++j) {
    double u = double(j) * double(n_cols) / double(canvas);
    u = std::min(u, double(n_cols - 1));
    const int c0 = static_cast<int>(std::floor(u));
    const int c1 = std::min(c0 + 1, n_cols - 1);
    const double w1 = u - double(c0);
    ws[j] = {c0, c1, 1.0 - w1, w1};
  }
  return ws;
}

}  // namespace detail

/// Dimension-aware scaling: linear interpolation along the time axis,
/// copy-padding (nearest row replication) along the period axis. When
/// T_fold exceeds the canvas height the vertical axis is average-pooled
/// instead; that degenerate mode is recorded in the plan.
inline CanvasImage scale_to_canvas(const FoldGrid& grid, FoldPlan plan) {
  expect(grid.rows == plan.t_fold && grid.cols == plan.n_cols,
         "grid does not match plan");
  plan.h_scale = detail::horizontal_weights(grid.cols, kCanvas);
  plan.v_scale.resize(kCanvas);
  plan.v_mode =
      grid.rows > kCanvas ? VerticalMode::pool : VerticalMode::replicate;
  for (int y = 0; y < kCanvas; ++y)
    plan.v_scale[y] = std::min<int>(
        grid.rows - 1, static_cast<int>(std::int64_t(y) * grid.rows / kCanvas));

  // Horizontal pass on the source rows.
  std::vector<double> wide(std::size_t(grid.rows) * kCanvas * 3);
  for (int r = 0; r < grid.rows; ++r)
    for (int j = 0; j < kCanvas; ++j) {
      const auto& w = plan.h_scale[j];
      for (int ch = 0; ch < 3; ++ch)
        wide[(std::size_t(r) * kCanvas + j) * 3 + ch] =
            w.w0 * grid.at(r, w.c0, ch) + w.w1 * grid.at(r, w.c1, ch);
    }

  CanvasImage img;
  img.pixels.assign(std::size_t(kCanvas) * kCanvas * 3, 0.0);
  if (plan.v_mode == VerticalMode::replicate) {
    for (int y = 0; y < kCanvas; ++y) {
      const int r = plan.v_scale[y];
      for (int j = 0; j < kCanvas; ++j)
        for (int ch = 0; ch < 3; ++ch)
          img.at(y, j, ch) = wide[(std::size_t(r) * kCanvas + j) * 3 + ch];
    }
  } else {
    for (int y = 0; y < kCanvas; ++y) {
      const std::int64_t r0 = std::int64_t(y) * grid.rows / kCanvas;
      const std::int64_t r1 =
          std::max<std::int64_t>(r0 + 1, std::int64_t(y + 1) * grid.rows / kCanvas);
      for (int j = 0; j < kCanvas; ++j)
        for (int ch = 0; ch < 3; ++ch) {
          double acc = 0.0;
          for (std::int64_t r = r0; r < r1; ++r)
            acc += wide[(std::size_t(r) * kCanvas + j) * 3 + ch];
          img.at(y, j, ch) = acc / double(r1 - r0);
        }
    }
  }
  img.plan = std::move(plan);
  return img;
}

/// Full univariate pipeline with an explicitly chosen fold period.
inline CanvasImage convert_with_period(const Series& s, int t_fold,
                                       int kernel = 25) {
  const Decomposition d = decompose_trend_remainder(s, kernel);
  const RGBRow row = intensity_map(d);
  auto [grid, plan] = fold(row, t_fold);
  return scale_to_canvas(grid, std::move(plan));
}

/// Reversible Image Conversion: decompose -> intensity map -> adaptive fold
/// -> dimension-aware scale. Deterministic and pure.
inline CanvasImage convert(const Series& s, int visual_patch = 16,
                           int kernel = 25) {
  const int t_fold = estimate_fold_period(s, visual_patch);
  return convert_with_period(s, t_fold, kernel);
}

struct GammaCoefficients {
  std::vector<double> gamma;  // one positive coefficient per variable

  void validate(std::size_t n_variables) const {
    require(gamma.size() == n_variables, "one gamma per variable required");
    for (double g : gamma) require(g > 0.0, "gamma must be positive");
  }
};

inline GammaCoefficients default_gammas(std::size_t n_variables) {
  GammaCoefficients g;
  for (std::size_t v = 0; v < n_variables; ++v)
    g.gamma.push_back(0.5 + double(v) / double(n_variables));
  return g;
}

/// Multivariate composite: per-variable decomposition, intensity mapping and
/// gamma correction, concatenated time-wise into a 1 x (N_v * L) x 3 row,
/// then folded and scaled exactly like the univariate path.
inline CanvasImage convert_multivariate(const MultiSeries& ms,
                                        const GammaCoefficients& gammas,
                                        int visual_patch = 16, int kernel = 25) {
  ms.validate();
  const std::size_t n_v = ms.n_variables();
  gammas.validate(n_v);
  const std::size_t L = ms.length();

  RGBRow combined;
  combined.intensities.reserve(n_v * L);
  std::vector<std::array<ChannelScale, 3>> var_scales;
  std::vector<double> concat_raw;
  concat_raw.reserve(n_v * L);
  for (std::size_t v = 0; v < n_v; ++v) {
    const Decomposition d = decompose_trend_remainder(ms.variables[v], kernel);
    RGBRow row = intensity_map(d);
    const double g = gammas.gamma[v];
    for (auto& px : row.intensities)
      for (int ch = 0; ch < 3; ++ch)
        px[ch] = 255.0 * std::pow(px[ch] / 255.0, g);
    combined.intensities.insert(combined.intensities.end(),
                                row.intensities.begin(), row.intensities.end());
    var_scales.push_back(row.scales);
    concat_raw.insert(concat_raw.end(), ms.variables[v].values.begin(),
                      ms.variables[v].values.end());
  }
  combined.scales = var_scales.front();

  const int t_fold = estimate_fold_period(Series(concat_raw), visual_patch);
  auto [grid, plan] = fold(combined, t_fold);
  plan.n_variables = static_cast<int>(n_v);
  plan.var_scales = std::move(var_scales);
  plan.gammas = gammas.gamma;
  return scale_to_canvas(grid, std::move(plan));
}

/// Pulls one channel back through the plan: undo vertical replication,
/// read the exact-hit canvas columns, and unfold. Exact whenever T_fold and
/// n_cols divide the canvas size; otherwise nearest-sample approximation.
inline std::vector<double> invert_channel_intensity(const CanvasImage& img,
                                                    int ch) {
  const FoldPlan& plan = img.plan;
  require(!plan.line_plot, "line-plot canvases are not invertible");
  require(ch >= 0 && ch < 3, "channel out of range");

  FoldGrid grid;
  grid.rows = plan.t_fold;
  grid.cols = plan.n_cols;
  grid.data.assign(std::size_t(grid.rows) * grid.cols * 3, 0.0);

  for (int r = 0; r < grid.rows; ++r) {
    // First canvas row of the replication block (or of the pooled span).
    const int y = static_cast<int>(std::min<std::int64_t>(
        kCanvas - 1,
        (std::int64_t(r) * kCanvas + grid.rows - 1) / grid.rows));
    for (int c = 0; c < grid.cols; ++c) {
      const int j = static_cast<int>(std::min<std::int64_t>(
          kCanvas - 1,
          (std::int64_t(c) * kCanvas + grid.cols / 2) / grid.cols));
      grid.at(r, c, ch) = img.at(y, j, ch);
    }
  }
  const auto row = unfold(grid, plan.length);
  std::vector<double> out(plan.length);
  for (std::int64_t i = 0; i < plan.length; ++i) out[i] = row[i][ch];
  return out;
}

/// Intensity row scaled back to [0, 1] of the channel's min-max range.
inline std::vector<double> invert_channel_normalized(const CanvasImage& img,
                                                     int ch, int variable = 0) {
  std::vector<double> whole = invert_channel_intensity(img, ch);
  const FoldPlan& plan = img.plan;
  require(variable >= 0 && variable < plan.n_variables, "variable out of range");
  const std::int64_t vl = plan.var_length();
  std::vector<double> out(vl);
  const double inv_gamma = 1.0 / plan.gammas[variable];
  for (std::int64_t i = 0; i < vl; ++i) {
    double p = whole[std::int64_t(variable) * vl + i] / 255.0;
    p = std::clamp(p, 0.0, 1.0);
    out[i] = std::pow(p, inv_gamma);
  }
  return out;
}

/// Raw-unit reconstruction using the stored channel scaling factors.
inline std::vector<double> invert_channel_raw(const CanvasImage& img, int ch,
                                              int variable = 0) {
  std::vector<double> out = invert_channel_normalized(img, ch, variable);
  const ChannelScale& sc = img.plan.var_scales[variable][ch];
  for (double& x : out)
    x = sc.constant ? sc.min : sc.min + x * (sc.max - sc.min);
  return out;
}

/// Ablation rendering: a 1-pixel-wide line plot of the min-max normalized
/// series on a white canvas. The plan is marked non-reversible.
inline CanvasImage render_line_plot(const Series& s) {
  s.validate();
  const std::int64_t L = static_cast<std::int64_t>(s.length());
  CanvasImage img;
  img.pixels.assign(std::size_t(kCanvas) * kCanvas * 3, 255.0);
  img.plan.line_plot = true;
  img.plan.length = L;

  const auto [mn_it, mx_it] = std::minmax_element(s.values.begin(), s.values.end());
  const double mn = *mn_it, mx = *mx_it;
  const bool flat = detail::channel_is_constant(mn, mx);

  auto to_xy = [&](std::int64_t t) {
    const int x = L == 1 ? 0
                         : static_cast<int>(std::llround(double(t) * (kCanvas - 1) /
                                                         double(L - 1)));
    const double norm = flat ? 0.5 : (s.values[t] - mn) / (mx - mn);
    const int y = static_cast<int>(std::llround((1.0 - norm) * (kCanvas - 1)));
    return std::pair<int, int>{x, y};
  };
  auto put = [&](int x, int y) {
    x = std::clamp(x, 0, kCanvas - 1);
    y = std::clamp(y, 0, kCanvas - 1);
    for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = 0.0;
  };

  auto [px, py] = to_xy(0);
  put(px, py);
  for (std::int64_t t = 1; t < L; ++t) {
    auto [x, y] = to_xy(t);
    int x0 = px, y0 = py;
    const int dx = std::abs(x - x0), dy = -std::abs(y - y0);
    const int sx = x0 < x ? 1 : -1, sy = y0 < y ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      put(x0, y0);
      if (x0 == x && y0 == y) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
    px = x;
    py = y;
  }
  return img;
}

}  // namespace vetime
