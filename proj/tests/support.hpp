#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "vetime/autodiff.hpp"
#include "vetime/common.hpp"
#include "vetime/nn.hpp"
#include "vetime/series.hpp"

namespace vetime::testing {

inline Series random_series(Rng& rng, int length, double scale = 1.0) {
  Series s;
  s.values.resize(length);
  for (auto& v : s.values) v = rng.normal(0.0, scale);
  return s;
}

inline Series sine_series(int length, int period, double amplitude = 1.0,
                          double noise = 0.0, std::uint64_t seed = 7) {
  Rng rng(seed);
  Series s;
  s.values.resize(length);
  for (int t = 0; t < length; ++t)
    s.values[t] = amplitude * std::sin(2.0 * kPi * t / period) +
                  (noise > 0.0 ? rng.normal(0.0, noise) : 0.0);
  return s;
}

inline double rel_err(double a, double b, double floor = 1e-5) {
  return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

/// Central-difference gradient check of a rebuildable scalar loss against the
/// analytic gradient for selected coordinates of one parameter tensor.
inline double max_grad_rel_err(nn::ParamStore& store, const ad::Value& param,
                               const std::function<ad::Value()>& loss_fn,
                               const std::vector<std::pair<int, int>>& coords) {
  store.zero_grad();
  ad::backward(loss_fn());
  ad::Mat analytic = param.has_grad()
                         ? param.grad()
                         : ad::Mat::Zero(param.rows(), param.cols()).eval();
  double worst = 0.0;
  for (const auto& [r, c] : coords) {
    const double orig = param.val()(r, c);
    const double h = 1e-5 * std::max(1.0, std::abs(orig));
    param.mutable_val()(r, c) = orig + h;
    const double fp = loss_fn().val()(0, 0);
    param.mutable_val()(r, c) = orig - h;
    const double fm = loss_fn().val()(0, 0);
    param.mutable_val()(r, c) = orig;
    const double fd = (fp - fm) / (2.0 * h);
    worst = std::max(worst, rel_err(analytic(r, c), fd));
  }
  return worst;
}

/// Deterministic sample of coordinate positions inside a tensor.
inline std::vector<std::pair<int, int>> sample_coords(const ad::Value& param,
                                                      int count, Rng& rng) {
  std::vector<std::pair<int, int>> coords;
  const int total = static_cast<int>(param.rows() * param.cols());
  count = std::min(count, total);
  for (int k = 0; k < count; ++k) {
    const int flat = static_cast<int>(rng.uniform_int(0, total - 1));
    coords.emplace_back(flat / int(param.cols()), flat % int(param.cols()));
  }
  return coords;
}

}  // namespace vetime::testing
