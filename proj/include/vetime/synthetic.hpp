#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vetime/common.hpp"
#include "vetime/series.hpp"

namespace vetime::synth {

enum class AnomalyKind { spike, dip, level_shift, seasonal_shift, trend_break };

inline const char* anomaly_kind_name(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::spike: return "spike";
    case AnomalyKind::dip: return "dip";
    case AnomalyKind::level_shift: return "level_shift";
    case AnomalyKind::seasonal_shift: return "seasonal_shift";
    case AnomalyKind::trend_break: return "trend_break";
  }
  return "unknown";
}

inline AnomalyKind anomaly_kind_from_name(const std::string& s) {
  if (s == "spike") return AnomalyKind::spike;
  if (s == "dip") return AnomalyKind::dip;
  if (s == "level_shift") return AnomalyKind::level_shift;
  if (s == "seasonal_shift") return AnomalyKind::seasonal_shift;
  if (s == "trend_break") return AnomalyKind::trend_break;
  throw ValidationError("unknown anomaly kind: " + s);
}

struct AnomalyEvent {
  AnomalyKind kind;
  int start = 0;
  int end = 0;  // exclusive
};

struct GeneratorConfig {
  int n_series = 64;
  int min_length = 256;
  int max_length = 1024;
  // base mixture: amplitude/period/phase sampled per series within these ranges
  double amplitude_min = 0.5;
  double amplitude_max = 2.0;
  int period_min = 24;
  int period_max = 96;
  double trend_slope_max = 1.5;   // total drift over the series, in amplitude units
  double noise_sigma_min = 0.05;
  double noise_sigma_max = 0.15;
  double anomaly_rate = 0.1;
  std::vector<AnomalyKind> anomaly_kinds{
      AnomalyKind::spike, AnomalyKind::dip, AnomalyKind::level_shift,
      AnomalyKind::seasonal_shift, AnomalyKind::trend_break};
  std::uint64_t seed = 0;

  void validate() const {
    require(n_series >= 1, "n_series must be >= 1");
    require(min_length >= 64, "min_length must be >= 64");
    require(max_length >= min_length, "length range inverted");
    require(anomaly_rate >= 0.0 && anomaly_rate <= 0.5,
            "anomaly_rate must lie in [0, 0.5]");
    require(!anomaly_kinds.empty() || anomaly_rate == 0.0,
            "anomaly kinds required when anomaly_rate > 0");
    require(period_min >= 2 && period_max >= period_min, "bad period range");
  }
};

struct GeneratedSeries {
  LabeledSeries labeled;
  std::vector<AnomalyEvent> events;
};

/// Deterministic in (config.seed, index). The base signal is
/// amplitude * sin(2 pi t / period + phase) + slope * t + gaussian noise;
/// anomalies are injected on exactly the labeled timestamps.
inline GeneratedSeries generate_series(const GeneratorConfig& cfg, int index) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).fork(static_cast<std::uint64_t>(index) + 1);

  const int L = static_cast<int>(rng.uniform_int(cfg.min_length, cfg.max_length));
  const double amplitude = rng.uniform(cfg.amplitude_min, cfg.amplitude_max);
  const int period = static_cast<int>(rng.uniform_int(
      cfg.period_min, std::min(cfg.period_max, std::max(cfg.period_min, L / 4))));
  const double phase = rng.uniform(0.0, 2.0 * kPi);
  const double total_drift =
      rng.uniform(-cfg.trend_slope_max, cfg.trend_slope_max) * amplitude;
  const double noise_sigma =
      rng.uniform(cfg.noise_sigma_min, cfg.noise_sigma_max);

  std::vector<double> seasonal(L), trend(L), noise(L);
  for (int t = 0; t < L; ++t) {
    seasonal[t] = amplitude * std::sin(2.0 * kPi * t / period + phase);
    trend[t] = total_drift * double(t) / double(L);
    noise[t] = rng.normal(0.0, noise_sigma);
  }

  GeneratedSeries out;
  out.labeled.series.values.resize(L);
  for (int t = 0; t < L; ++t)
    out.labeled.series.values[t] = seasonal[t] + trend[t] + noise[t];
  out.labeled.labels.assign(L, 0);

  const int target = cfg.anomaly_rate > 0.0
                         ? std::max(1, int(std::lround(cfg.anomaly_rate * L)))
                         : 0;
  if (target == 0) return out;

  auto& x = out.labeled.series.values;
  auto& labels = out.labeled.labels;
  constexpr int kGap = 8;  // min spacing so windows keep normal context

  int placed = 0;
  const int budget = std::max(target, int(std::lround(1.35 * target)));
  for (int attempt = 0; attempt < 200 && placed < target; ++attempt) {
    AnomalyKind kind =
        cfg.anomaly_kinds[rng.uniform_int(0, int(cfg.anomaly_kinds.size()) - 1)];
    int span;
    if (kind == AnomalyKind::spike || kind == AnomalyKind::dip) {
      span = static_cast<int>(rng.uniform_int(1, 3));
    } else {
      span = static_cast<int>(
          std::lround(rng.uniform(0.05, 0.15) * L));
      span = std::clamp(span, 4, L / 4);
      if (placed + span > budget) {
        // context events would overshoot; fall back to a point event
        kind = rng.uniform() < 0.5 ? AnomalyKind::spike : AnomalyKind::dip;
        span = static_cast<int>(rng.uniform_int(1, 3));
      }
    }
    if (placed + span > budget) break;

    const int lo = kGap, hi = L - span - kGap;
    if (hi <= lo) continue;
    const int s = static_cast<int>(rng.uniform_int(lo, hi));
    bool clear = true;
    for (int t = std::max(0, s - kGap); t < std::min(L, s + span + kGap); ++t)
      if (labels[t]) {
        clear = false;
        break;
      }
    if (!clear) continue;

    switch (kind) {
      case AnomalyKind::spike:
      case AnomalyKind::dip: {
        const double magnitude = (5.0 + 5.0 * rng.uniform()) * noise_sigma;
        const double delta = kind == AnomalyKind::spike ? magnitude : -magnitude;
        for (int t = s; t < s + span; ++t) x[t] += delta;
        break;
      }
      case AnomalyKind::level_shift: {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double offset = sign * (0.8 + 0.7 * rng.uniform()) * amplitude;
        for (int t = s; t < s + span; ++t) x[t] += offset;
        break;
      }
      case AnomalyKind::seasonal_shift: {
        const double dphi = kPi * (0.5 + 0.5 * rng.uniform());
        const double freq = 1.5 + rng.uniform();
        for (int t = s; t < s + span; ++t)
          x[t] = trend[t] + noise[t] +
                 amplitude * std::sin(2.0 * kPi * t * freq / period + phase + dphi);
        break;
      }
      case AnomalyKind::trend_break: {
        const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double extra = sign * (1.0 + rng.uniform()) * amplitude;
        for (int t = s; t < s + span; ++t)
          x[t] += extra * double(t - s + 1) / double(span);
        break;
      }
    }
    for (int t = s; t < s + span; ++t) labels[t] = 1;
    out.events.push_back({kind, s, s + span});
    placed += span;
  }
  std::sort(out.events.begin(), out.events.end(),
            [](const AnomalyEvent& a, const AnomalyEvent& b) {
              return a.start < b.start;
            });
  return out;
}

}  // namespace vetime::synth
