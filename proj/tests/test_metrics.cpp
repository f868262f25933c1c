#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <set>

#include "support.hpp"
#include "vetime/metrics.hpp"

using namespace vetime;

namespace {

// ---- independent reference oracles (straight loops, no shared helpers) ----

double oracle_f1(const std::vector<double>& scores,
                 const std::vector<std::uint8_t>& labels, double thr) {
  int tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool p = scores[i] >= thr;
    tp += p && labels[i];
    fp += p && !labels[i];
    fn += !p && labels[i];
  }
  const double prec = tp + fp ? double(tp) / (tp + fp) : 0.0;
  const double rec = tp + fn ? double(tp) / (tp + fn) : 0.0;
  return prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
}

double oracle_f1_t(const std::vector<double>& scores,
                   const std::vector<std::uint8_t>& labels, double thr) {
  const std::int64_t L = labels.size();
  std::vector<std::uint8_t> pred(L);
  for (std::int64_t t = 0; t < L; ++t) pred[t] = scores[t] >= thr;

  auto runs = [&](const std::vector<std::uint8_t>& m) {
    std::vector<std::pair<std::int64_t, std::int64_t>> out;
    for (std::int64_t i = 0; i < L;) {
      if (m[i]) {
        std::int64_t j = i;
        while (j < L && m[j]) ++j;
        out.emplace_back(i, j);
        i = j;
      } else
        ++i;
    }
    return out;
  };
  const auto gt_runs = runs(labels), pred_runs = runs(pred);
  if (gt_runs.empty() || pred_runs.empty()) return 0.0;

  double recall = 0.0;
  for (auto [s, e] : gt_runs) {
    std::int64_t hit = 0;
    for (std::int64_t t = s; t < e; ++t) hit += pred[t];
    recall += double(hit) / double(e - s);
  }
  recall /= double(gt_runs.size());
  double precision = 0.0;
  for (auto [s, e] : pred_runs) {
    std::int64_t hit = 0;
    for (std::int64_t t = s; t < e; ++t) hit += labels[t];
    precision += double(hit) / double(e - s);
  }
  precision /= double(pred_runs.size());
  return precision + recall > 0 ? 2 * precision * recall / (precision + recall)
                                : 0.0;
}

PRF oracle_affiliation(const EventSet& pred, const EventSet& gt,
                       std::int64_t L) {
  // zone boundaries by midpoints between consecutive events, clipped to [0, L)
  std::vector<std::int64_t> z_lo(gt.size()), z_hi(gt.size());
  for (std::size_t j = 0; j < gt.size(); ++j) {
    z_lo[j] = j == 0 ? 0
                     : std::int64_t(
                           std::ceil(0.5 * double(gt[j - 1].end + gt[j].start)));
    z_hi[j] = j + 1 == gt.size()
                  ? L
                  : std::int64_t(
                        std::ceil(0.5 * double(gt[j].end + gt[j + 1].start)));
  }
  std::vector<std::uint8_t> pmask(L, 0);
  for (const auto& e : pred)
    for (std::int64_t t = std::max<std::int64_t>(0, e.start);
         t < std::min(L, e.end); ++t)
      pmask[t] = 1;

  auto dist_to_event = [](std::int64_t t, const Event& e) {
    std::int64_t best = std::numeric_limits<std::int64_t>::max();
    for (std::int64_t s = e.start; s < e.end; ++s)
      best = std::min(best, std::abs(t - s));
    return best;
  };

  double psum = 0.0;
  int pzones = 0;
  double rsum = 0.0;
  for (std::size_t j = 0; j < gt.size(); ++j) {
    const double zlen = double(z_hi[j] - z_lo[j]);
    std::vector<std::int64_t> pts;
    for (std::int64_t t = z_lo[j]; t < z_hi[j]; ++t)
      if (pmask[t]) pts.push_back(t);

    if (!pts.empty()) {
      double acc = 0.0;
      for (std::int64_t t : pts) {
        const std::int64_t d = dist_to_event(t, gt[j]);
        int count = 0;
        for (std::int64_t x = z_lo[j]; x < z_hi[j]; ++x)
          if (dist_to_event(x, gt[j]) >= d) ++count;
        acc += count / zlen;
      }
      psum += acc / double(pts.size());
      ++pzones;

      auto dist_to_pts = [&](std::int64_t t) {
        std::int64_t best = std::numeric_limits<std::int64_t>::max();
        for (auto p : pts) best = std::min(best, std::abs(t - p));
        return best;
      };
      double racc = 0.0;
      for (std::int64_t t = gt[j].start; t < gt[j].end; ++t) {
        const std::int64_t d = dist_to_pts(t);
        int count = 0;
        for (std::int64_t x = z_lo[j]; x < z_hi[j]; ++x)
          if (dist_to_pts(x) >= d) ++count;
        racc += count / zlen;
      }
      rsum += racc / double(gt[j].end - gt[j].start);
    }
  }
  PRF out;
  if (pzones == 0) return out;
  out.precision = psum / pzones;
  out.recall = rsum / double(gt.size());
  out.f1 = out.precision + out.recall > 0
               ? 2 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

double oracle_vus_pr(const std::vector<double>& scores,
                     const std::vector<std::uint8_t>& labels, int max_buffer) {
  const std::int64_t L = labels.size();
  double total = 0.0;
  for (int l = 0; l <= max_buffer; ++l) {
    std::vector<double> soft(L, 0.0);
    for (std::int64_t t = 0; t < L; ++t) {
      std::int64_t d = std::numeric_limits<std::int64_t>::max() / 2;
      for (std::int64_t s = 0; s < L; ++s)
        if (labels[s]) d = std::min(d, std::abs(t - s));
      soft[t] = std::max(0.0, 1.0 - double(d) / double(l + 1));
    }
    double mass = 0.0;
    for (double v : soft) mass += v;
    if (mass <= 0.0) continue;

    std::set<double, std::greater<double>> thresholds(scores.begin(),
                                                      scores.end());
    double ap = 0.0, r_prev = 0.0;
    for (double thr : thresholds) {
      double tp = 0.0;
      std::int64_t sel = 0;
      for (std::int64_t t = 0; t < L; ++t)
        if (scores[t] >= thr) {
          tp += soft[t];
          ++sel;
        }
      const double precision = tp / double(sel);
      const double recall = tp / mass;
      ap += (recall - r_prev) * precision;
      r_prev = recall;
    }
    total += ap;
  }
  return total / double(max_buffer + 1);
}

std::vector<std::uint8_t> random_labels(Rng& rng, int L, double rate) {
  std::vector<std::uint8_t> labels(L, 0);
  for (auto& l : labels) l = rng.uniform() < rate ? 1 : 0;
  return labels;
}

}  // namespace

TEST_CASE("standard F1 hand cases", "[metrics]") {
  const std::vector<std::uint8_t> labels{0, 1, 1, 0};
  SECTION("perfect prediction") {
    const std::vector<double> scores{0.0, 1.0, 1.0, 0.0};
    CHECK(standard_f1(scores, labels, 0.5).f1 == 1.0);
  }
  SECTION("P=1 R=0.5 gives F1=2/3") {
    const std::vector<double> scores{0.0, 1.0, 0.0, 0.0};
    const PRF r = standard_f1(scores, labels, 0.5);
    CHECK(r.precision == 1.0);
    CHECK(r.recall == 0.5);
    CHECK(r.f1 == Catch::Approx(2.0 / 3.0));
  }
  SECTION("all-negative prediction with positives present") {
    const std::vector<double> scores{0.0, 0.0, 0.0, 0.0};
    CHECK(standard_f1(scores, labels, 0.5).f1 == 0.0);
  }
}

TEST_CASE("best threshold sweep matches brute force", "[metrics]") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const int L = 50;
    std::vector<double> scores(L);
    for (auto& s : scores) s = rng.uniform();
    const auto labels = random_labels(rng, L, 0.3);
    const BestF1 best = best_f1_over_thresholds(scores, labels);

    double expected = 0.0;
    for (double thr : scores) expected = std::max(expected, oracle_f1(scores, labels, thr));
    REQUIRE(best.f1 == Catch::Approx(expected).margin(1e-12));
  }

  SECTION("scores equal to labels recover F1=1") {
    const std::vector<std::uint8_t> labels{0, 1, 0, 1};
    const std::vector<double> scores{0.0, 1.0, 0.0, 1.0};
    const BestF1 best = best_f1_over_thresholds(scores, labels);
    CHECK(best.f1 == 1.0);
    CHECK(best.threshold == 1.0);
  }
  SECTION("constant scores reduce to all-positive prediction") {
    const std::vector<std::uint8_t> labels{1, 0, 0, 0};
    const std::vector<double> scores(4, 0.7);
    CHECK(best_f1_over_thresholds(scores, labels).f1 ==
          Catch::Approx(oracle_f1(scores, labels, 0.7)));
  }
}

TEST_CASE("event-overlap F1 (F1-T)", "[metrics]") {
  SECTION("perfect and disjoint cases") {
    std::vector<std::uint8_t> labels(30, 0);
    for (int t = 10; t < 20; ++t) labels[t] = 1;
    std::vector<double> perfect(30, 0.0);
    for (int t = 10; t < 20; ++t) perfect[t] = 1.0;
    CHECK(f1_t(perfect, labels, 0.5) == 1.0);

    std::vector<double> disjoint(30, 0.0);
    for (int t = 0; t < 5; ++t) disjoint[t] = 1.0;
    CHECK(f1_t(disjoint, labels, 0.5) == 0.0);
  }
  SECTION("half-overlap hand case") {
    std::vector<std::uint8_t> labels(40, 0);
    for (int t = 10; t < 20; ++t) labels[t] = 1;
    std::vector<double> scores(40, 0.0);
    for (int t = 15; t < 25; ++t) scores[t] = 1.0;
    // recall = 5/10, precision = 5/10
    CHECK(f1_t(scores, labels, 0.5) == Catch::Approx(0.5));
  }
  SECTION("matches the reference oracle on random cases") {
    Rng rng(31);
    for (int trial = 0; trial < 50; ++trial) {
      const int L = 50;
      std::vector<double> scores(L);
      for (auto& s : scores) s = rng.uniform();
      const auto labels = random_labels(rng, L, 0.25);
      REQUIRE(f1_t(scores, labels, 0.5) ==
              Catch::Approx(oracle_f1_t(scores, labels, 0.5)).margin(1e-12));
    }
  }
}

TEST_CASE("affiliation F1", "[metrics]") {
  SECTION("identical prediction scores 1") {
    const EventSet gt{{5, 8}, {14, 16}};
    const PRF r = affiliation_f1(gt, gt, 20);
    CHECK(r.precision == Catch::Approx(1.0));
    CHECK(r.recall == Catch::Approx(1.0));
    CHECK(r.f1 == Catch::Approx(1.0));
  }
  SECTION("full-series prediction has recall 1") {
    const EventSet gt{{5, 8}};
    const PRF r = affiliation_f1({{0, 20}}, gt, 20);
    CHECK(r.recall == Catch::Approx(1.0));
    CHECK(r.precision < 1.0);
  }
  SECTION("no ground truth is a validation error") {
    CHECK_THROWS_AS(affiliation_f1(EventSet{{1, 2}}, EventSet{}, 10),
                    ValidationError);
  }
  SECTION("no predictions gives F1 = 0") {
    CHECK(affiliation_f1(EventSet{}, EventSet{{3, 6}}, 10).f1 == 0.0);
  }
  SECTION("single hand case matches the oracle") {
    const EventSet gt{{5, 8}};
    const EventSet pred{{6, 7}};
    const PRF ours = affiliation_f1(pred, gt, 20);
    const PRF ref = oracle_affiliation(pred, gt, 20);
    CHECK(ours.precision == Catch::Approx(ref.precision).margin(1e-12));
    CHECK(ours.recall == Catch::Approx(ref.recall).margin(1e-12));
    CHECK(ours.f1 == Catch::Approx(ref.f1).margin(1e-12));
  }
  SECTION("matches the oracle on random small cases") {
    Rng rng(41);
    for (int trial = 0; trial < 50; ++trial) {
      const int L = 40;
      auto labels = random_labels(rng, L, 0.2);
      labels[rng.uniform_int(0, L - 1)] = 1;  // ensure >= 1 event
      const auto scores_labels = random_labels(rng, L, 0.25);
      std::vector<double> scores(L, 0.0);
      for (int t = 0; t < L; ++t) scores[t] = scores_labels[t];
      const EventSet gt = events_from_labels(labels);
      const EventSet pred = events_from_scores(scores, 0.5);
      const PRF ours = affiliation_f1(pred, gt, L);
      const PRF ref = oracle_affiliation(pred, gt, L);
      REQUIRE(ours.f1 == Catch::Approx(ref.f1).margin(1e-12));
      REQUIRE(ours.precision == Catch::Approx(ref.precision).margin(1e-12));
      REQUIRE(ours.recall == Catch::Approx(ref.recall).margin(1e-12));
    }
  }
}

TEST_CASE("VUS-PR", "[metrics]") {
  Rng rng(53);
  SECTION("buffer 0 equals discrete AUC-PR and perfect scoring gives 1") {
    std::vector<std::uint8_t> labels(30, 0);
    for (int t = 12; t < 17; ++t) labels[t] = 1;
    std::vector<double> perfect(30, 0.0);
    for (int t = 12; t < 17; ++t) perfect[t] = 1.0;
    CHECK(vus_pr(perfect, labels, 0) == Catch::Approx(1.0));
    std::vector<double> soft(labels.begin(), labels.end());
    CHECK(vus_pr(perfect, labels, 0) ==
          Catch::Approx(average_precision(perfect, soft)));
  }
  SECTION("brute-force double loop agrees within 1e-9") {
    for (int trial = 0; trial < 100; ++trial) {
      const int L = 50;
      std::vector<double> scores(L);
      for (auto& s : scores) s = rng.uniform();
      auto labels = random_labels(rng, L, 0.2);
      labels[rng.uniform_int(0, L - 1)] = 1;
      const int buffer = 4;
      REQUIRE(vus_pr(scores, labels, buffer) ==
              Catch::Approx(oracle_vus_pr(scores, labels, buffer)).margin(1e-9));
    }
  }
  SECTION("bounded in [0,1] and buffered value never exceeds the exact one") {
    for (int trial = 0; trial < 20; ++trial) {
      const int L = 60;
      auto labels = random_labels(rng, L, 0.15);
      labels[rng.uniform_int(0, L - 1)] = 1;
      std::vector<double> perfect(L, 0.0);
      for (int t = 0; t < L; ++t) perfect[t] = labels[t];
      const double buffered = vus_pr(perfect, labels, 5);
      REQUIRE(buffered >= 0.0);
      REQUIRE(buffered <= 1.0);
      // softening spreads label mass outside the predicted set, so the
      // buffered score never exceeds the buffer-0 score of 1
      REQUIRE(buffered <= vus_pr(perfect, labels, 0) + 1e-12);
    }
  }
}

TEST_CASE("metrics are invariant to monotone score transforms", "[metrics]") {
  Rng rng(61);
  for (int trial = 0; trial < 10; ++trial) {
    const int L = 50;
    std::vector<double> scores(L);
    for (auto& s : scores) s = rng.uniform();
    auto labels = random_labels(rng, L, 0.2);
    labels[0] = 1;
    std::vector<double> warped(L);
    for (int t = 0; t < L; ++t) warped[t] = std::exp(3.0 * scores[t]) + 1.0;

    REQUIRE(best_f1_over_thresholds(scores, labels).f1 ==
            Catch::Approx(best_f1_over_thresholds(warped, labels).f1));
    REQUIRE(vus_pr(scores, labels, 3) ==
            Catch::Approx(vus_pr(warped, labels, 3)).margin(1e-12));
  }
}

TEST_CASE("all metrics live in [0,1]", "[metrics]") {
  Rng rng(71);
  for (int trial = 0; trial < 30; ++trial) {
    const int L = 45;
    std::vector<double> scores(L);
    for (auto& s : scores) s = rng.uniform();
    auto labels = random_labels(rng, L, 0.25);
    labels[rng.uniform_int(0, L - 1)] = 1;

    const auto check01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    REQUIRE(check01(standard_f1(scores, labels, 0.5).f1));
    REQUIRE(check01(best_f1_over_thresholds(scores, labels).f1));
    REQUIRE(check01(f1_t(scores, labels, 0.5)));
    REQUIRE(check01(affiliation_f1(scores, labels, 0.5).f1));
    REQUIRE(check01(vus_pr(scores, labels, 4)));
  }
}
