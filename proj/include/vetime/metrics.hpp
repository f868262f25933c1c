#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "vetime/common.hpp"

namespace vetime {

/// Half-open [start, end) interval of integer timestamps.
struct Event {
  std::int64_t start = 0;
  std::int64_t end = 0;

  std::int64_t length() const { return end - start; }
};

using EventSet = std::vector<Event>;

inline EventSet events_from_labels(const std::vector<std::uint8_t>& labels) {
  EventSet out;
  const std::int64_t L = static_cast<std::int64_t>(labels.size());
  std::int64_t i = 0;
  while (i < L) {
    if (labels[i]) {
      std::int64_t j = i;
      while (j < L && labels[j]) ++j;
      out.push_back({i, j});
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

inline std::vector<std::uint8_t> labels_from_events(const EventSet& events,
                                                    std::int64_t L) {
  std::vector<std::uint8_t> out(L, 0);
  for (const auto& e : events)
    for (std::int64_t t = std::max<std::int64_t>(0, e.start);
         t < std::min(L, e.end); ++t)
      out[t] = 1;
  return out;
}

inline EventSet events_from_scores(const std::vector<double>& scores,
                                   double threshold) {
  std::vector<std::uint8_t> bin(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    bin[i] = scores[i] >= threshold ? 1 : 0;
  return events_from_labels(bin);
}

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline double harmonic_f1(double p, double r) {
  return (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

/// Pointwise precision/recall/F1 at a fixed threshold (prediction = score >= t).
inline PRF standard_f1(const std::vector<double>& scores,
                       const std::vector<std::uint8_t>& labels,
                       double threshold) {
  require(scores.size() == labels.size(), "scores/labels length mismatch");
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (pred && labels[i]) ++tp;
    if (pred && !labels[i]) ++fp;
    if (!pred && labels[i]) ++fn;
  }
  PRF out;
  out.precision = (tp + fp) > 0 ? double(tp) / double(tp + fp) : 0.0;
  out.recall = (tp + fn) > 0 ? double(tp) / double(tp + fn) : 0.0;
  out.f1 = harmonic_f1(out.precision, out.recall);
  return out;
}

struct BestF1 {
  double threshold = 0.0;
  double f1 = 0.0;
};

/// Sweeps every distinct score value as a threshold; on ties the smallest
/// maximizing threshold wins.
inline BestF1 best_f1_over_thresholds(const std::vector<double>& scores,
                                      const std::vector<std::uint8_t>& labels) {
  require(scores.size() == labels.size(), "scores/labels length mismatch");
  require(!scores.empty(), "empty inputs");
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());
  BestF1 best{thresholds.front(), -1.0};
  for (double t : thresholds) {
    const double f1 = standard_f1(scores, labels, t).f1;
    if (f1 > best.f1) best = {t, f1};
  }
  if (best.f1 < 0.0) best.f1 = 0.0;
  return best;
}

/// Event-overlap F1: recall credits each ground-truth event by its overlap
/// fraction with the predicted point set, precision credits each predicted
/// event by its overlap fraction with the ground-truth point set.
inline double f1_t(const std::vector<double>& scores,
                   const std::vector<std::uint8_t>& labels, double threshold) {
  require(scores.size() == labels.size(), "scores/labels length mismatch");
  const EventSet gt = events_from_labels(labels);
  const EventSet pred = events_from_scores(scores, threshold);
  if (gt.empty() || pred.empty()) return 0.0;

  auto overlap = [](const Event& a, const EventSet& set) {
    std::int64_t n = 0;
    for (const auto& b : set)
      n += std::max<std::int64_t>(
          0, std::min(a.end, b.end) - std::max(a.start, b.start));
    return n;
  };

  double recall = 0.0;
  for (const auto& e : gt)
    recall += double(overlap(e, pred)) / double(e.length());
  recall /= double(gt.size());

  double precision = 0.0;
  for (const auto& p : pred)
    precision += double(overlap(p, gt)) / double(p.length());
  precision /= double(pred.size());

  return harmonic_f1(precision, recall);
}

namespace detail {

/// Distance from integer timestamp t to event [a, b): 0 inside, gap outside.
inline std::int64_t point_event_distance(std::int64_t t, const Event& e) {
  if (t < e.start) return e.start - t;
  if (t >= e.end) return t - (e.end - 1);
  return 0;
}

/// Affiliation zone of ground-truth event j: timeline slice bounded by the
/// midpoints toward the neighboring events, clipped to [0, L).
inline std::pair<std::int64_t, std::int64_t> affiliation_zone(
    const EventSet& gt, std::size_t j, std::int64_t L) {
  double lo = 0.0, hi = static_cast<double>(L);
  if (j > 0) lo = 0.5 * double(gt[j - 1].end + gt[j].start);
  if (j + 1 < gt.size()) hi = 0.5 * double(gt[j].end + gt[j + 1].start);
  const auto z0 = static_cast<std::int64_t>(std::ceil(lo));
  const auto z1 = static_cast<std::int64_t>(std::ceil(hi));
  return {z0, z1};
}

}  // namespace detail

/// Affiliation precision/recall: each distance is normalized against the
/// zone's random baseline, i.e. mapped to the fraction of zone timestamps
/// that sit at least as far from the target as the point in question.
inline PRF affiliation_f1(const EventSet& pred_events,
                          const EventSet& gt_events, std::int64_t L) {
  require(!gt_events.empty(), "affiliation_f1 requires >= 1 ground-truth event");
  for (std::size_t j = 0; j + 1 < gt_events.size(); ++j)
    require(gt_events[j].end <= gt_events[j + 1].start,
            "ground-truth events must be sorted and disjoint");

  const std::vector<std::uint8_t> pred_mask = labels_from_events(pred_events, L);

  double precision_sum = 0.0;
  std::int64_t precision_zones = 0;
  double recall_sum = 0.0;

  for (std::size_t j = 0; j < gt_events.size(); ++j) {
    const auto [z0, z1] = detail::affiliation_zone(gt_events, j, L);
    const std::int64_t zone_len = z1 - z0;
    expect(zone_len > 0, "empty affiliation zone");
    const Event& e = gt_events[j];

    std::vector<std::int64_t> pred_pts;
    for (std::int64_t t = z0; t < z1; ++t)
      if (pred_mask[t]) pred_pts.push_back(t);

    if (!pred_pts.empty()) {
      // Survival fraction of dist(x, event) over the zone, evaluated at each
      // predicted point.
      double acc = 0.0;
      for (std::int64_t t : pred_pts) {
        const std::int64_t d = detail::point_event_distance(t, e);
        std::int64_t at_least = 0;
        for (std::int64_t x = z0; x < z1; ++x)
          if (detail::point_event_distance(x, e) >= d) ++at_least;
        acc += double(at_least) / double(zone_len);
      }
      precision_sum += acc / double(pred_pts.size());
      ++precision_zones;
    }

    if (pred_pts.empty()) {
      recall_sum += 0.0;
    } else {
      auto dist_to_pred = [&](std::int64_t t) {
        std::int64_t best = std::numeric_limits<std::int64_t>::max();
        for (std::int64_t p : pred_pts) best = std::min(best, std::abs(t - p));
        return best;
      };
      double acc = 0.0;
      for (std::int64_t t = e.start; t < e.end; ++t) {
        const std::int64_t d = dist_to_pred(t);
        std::int64_t at_least = 0;
        for (std::int64_t x = z0; x < z1; ++x)
          if (dist_to_pred(x) >= d) ++at_least;
        acc += double(at_least) / double(zone_len);
      }
      recall_sum += acc / double(e.length());
    }
  }

  PRF out;
  if (precision_zones == 0) return out;  // no predictions: F1 defined as 0
  out.precision = precision_sum / double(precision_zones);
  out.recall = recall_sum / double(gt_events.size());
  out.f1 = harmonic_f1(out.precision, out.recall);
  return out;
}

inline PRF affiliation_f1(const std::vector<double>& scores,
                          const std::vector<std::uint8_t>& labels,
                          double threshold) {
  require(scores.size() == labels.size(), "scores/labels length mismatch");
  return affiliation_f1(events_from_scores(scores, threshold),
                        events_from_labels(labels),
                        static_cast<std::int64_t>(labels.size()));
}

/// Labels softened by a linear ramp of width `buffer` on each side of every
/// anomaly event: value 1 inside, 1 - k/(buffer+1) at distance k outside.
inline std::vector<double> soften_labels(const std::vector<std::uint8_t>& labels,
                                         int buffer) {
  const std::int64_t L = static_cast<std::int64_t>(labels.size());
  std::vector<std::int64_t> dist(L, std::numeric_limits<std::int64_t>::max() / 4);
  for (std::int64_t t = 0; t < L; ++t)
    if (labels[t]) dist[t] = 0;
  for (std::int64_t t = 1; t < L; ++t)
    dist[t] = std::min(dist[t], dist[t - 1] + 1);
  for (std::int64_t t = L - 2; t >= 0; --t)
    dist[t] = std::min(dist[t], dist[t + 1] + 1);
  std::vector<double> out(L, 0.0);
  for (std::int64_t t = 0; t < L; ++t) {
    const double v = 1.0 - double(dist[t]) / double(buffer + 1);
    out[t] = std::max(0.0, v);
  }
  return out;
}

/// Area under the precision-recall curve with real-valued labels; TP at a
/// threshold is the label mass of the selected timestamps.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<double>& soft_labels) {
  require(scores.size() == soft_labels.size(), "length mismatch");
  const double total_mass =
      std::accumulate(soft_labels.begin(), soft_labels.end(), 0.0);
  if (total_mass <= 0.0) return 0.0;

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });

  double ap = 0.0;
  double tp_mass = 0.0;
  double recall_prev = 0.0;
  std::size_t i = 0;
  std::size_t selected = 0;
  while (i < order.size()) {
    // Consume the whole group of equal scores: one threshold per distinct value.
    const double v = scores[order[i]];
    while (i < order.size() && scores[order[i]] == v) {
      tp_mass += soft_labels[order[i]];
      ++selected;
      ++i;
    }
    const double precision = tp_mass / double(selected);
    const double recall = tp_mass / total_mass;
    ap += (recall - recall_prev) * precision;
    recall_prev = recall;
  }
  return ap;
}

inline int default_vus_buffer(std::size_t L) {
  return static_cast<int>(std::min<std::size_t>(L / 20, 16));
}

/// Mean over buffer widths 0..max_buffer of the area under the PR curve on
/// ramp-softened labels. At max_buffer = 0 this is exactly discrete AUC-PR.
inline double vus_pr(const std::vector<double>& scores,
                     const std::vector<std::uint8_t>& labels, int max_buffer) {
  require(scores.size() == labels.size(), "scores/labels length mismatch");
  require(max_buffer >= 0, "max_buffer must be >= 0");
  double acc = 0.0;
  for (int l = 0; l <= max_buffer; ++l)
    acc += average_precision(scores, soften_labels(labels, l));
  return acc / double(max_buffer + 1);
}

struct MetricReport {
  PRF standard;          // at the fixed threshold
  BestF1 best_standard;  // threshold swept
  double f1_t_score = 0.0;
  PRF affiliation;
  double vus_pr_score = 0.0;
  double positive_prior = 0.0;
};

inline MetricReport score_all_metrics(const std::vector<double>& scores,
                                      const std::vector<std::uint8_t>& labels,
                                      double event_threshold = 0.5,
                                      int max_buffer = -1) {
  MetricReport r;
  r.standard = standard_f1(scores, labels, event_threshold);
  r.best_standard = best_f1_over_thresholds(scores, labels);
  r.f1_t_score = f1_t(scores, labels, event_threshold);
  const EventSet gt = events_from_labels(labels);
  if (!gt.empty())
    r.affiliation = affiliation_f1(scores, labels, event_threshold);
  if (max_buffer < 0) max_buffer = default_vus_buffer(labels.size());
  r.vus_pr_score = vus_pr(scores, labels, max_buffer);
  double pos = 0.0;
  for (auto l : labels) pos += l;
  r.positive_prior = labels.empty() ? 0.0 : pos / double(labels.size());
  return r;
}

}  // namespace vetime
