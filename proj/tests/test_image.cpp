#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "support.hpp"
#include "vetime/image.hpp"

using namespace vetime;

TEST_CASE("trend/remainder decomposition", "[image]") {
  Rng rng(5);
  SECTION("constant series and identity kernel") {
    const Series c(std::vector<double>(40, 3.5));
    const Decomposition d = decompose_trend_remainder(c, 25);
    for (double v : d.remainder.values)
      CHECK(v == Catch::Approx(0.0).margin(1e-12));

    const Series s = testing::random_series(rng, 30);
    const Decomposition d1 = decompose_trend_remainder(s, 1);
    CHECK(d1.trend.values == s.values);
  }
  SECTION("trend + remainder reconstructs the input") {
    for (int trial = 0; trial < 100; ++trial) {
      const Series s =
          testing::random_series(rng, int(rng.uniform_int(5, 300)));
      const Decomposition d = decompose_trend_remainder(s, 25);
      for (std::size_t t = 0; t < s.length(); ++t)
        REQUIRE(d.trend.values[t] + d.remainder.values[t] ==
                Catch::Approx(s.values[t]).margin(1e-9));
    }
  }
  SECTION("even kernel rejected") {
    CHECK_THROWS_AS(
        decompose_trend_remainder(testing::random_series(rng, 20), 4),
        ValidationError);
  }
}

TEST_CASE("intensity mapping", "[image]") {
  SECTION("min-max endpoints") {
    Decomposition d;
    d.raw = Series({0.0, 1.0});
    d.trend = Series({0.25, 0.75});
    d.remainder = Series({-0.25, 0.25});
    const RGBRow row = intensity_map(d);
    CHECK(row.intensities[0][0] == 0.0);
    CHECK(row.intensities[1][0] == 255.0);
  }
  SECTION("constant channel maps to 128") {
    const Series c(std::vector<double>(20, 7.0));
    const RGBRow row = intensity_map(decompose_trend_remainder(c, 5));
    for (const auto& px : row.intensities) {
      CHECK(px[1] == 128.0);  // trend constant
      CHECK(px[2] == 128.0);  // remainder constant (zero)
    }
  }
  SECTION("monotone input keeps the R channel monotone") {
    Series s;
    for (int t = 0; t < 50; ++t) s.values.push_back(std::sqrt(double(t)));
    const RGBRow row = intensity_map(decompose_trend_remainder(s, 5));
    for (std::size_t t = 1; t < s.length(); ++t)
      REQUIRE(row.intensities[t][0] >= row.intensities[t - 1][0]);
  }
}

namespace {

// brute-force argmax of the unbiased autocorrelation over [2, L/2]
int oracle_best_lag(const Series& s, double* best_r_out) {
  const int L = int(s.length());
  double mean = 0;
  for (double x : s.values) mean += x;
  mean /= L;
  double var = 0;
  for (double x : s.values) var += (x - mean) * (x - mean);
  var /= L;
  int best_lag = 0;
  double best = -1e300;
  for (int lag = 2; lag <= L / 2; ++lag) {
    double acc = 0;
    for (int t = 0; t + lag < L; ++t)
      acc += (s.values[t] - mean) * (s.values[t + lag] - mean);
    const double r = acc / double(L - lag) / var;
    if (r > best + 1e-9) {
      best = r;
      best_lag = lag;
    }
  }
  *best_r_out = best;
  return best_lag;
}

}  // namespace

TEST_CASE("fold period estimation", "[image]") {
  SECTION("pure sine of period 32") {
    const Series s = testing::sine_series(256, 32);
    double best_r = 0;
    CHECK(oracle_best_lag(s, &best_r) == 32);
    CHECK(best_r >= 0.3);
    CHECK(estimate_fold_period(s, 16) == 32);
  }
  SECTION("white noise falls back to sqrt(L) rounded to the patch size") {
    Rng rng(9);
    const Series s = testing::random_series(rng, 100);
    double best_r = 0;
    oracle_best_lag(s, &best_r);
    if (best_r < 0.3)  // overwhelmingly likely for white noise
      CHECK(estimate_fold_period(s, 16) == 16);
  }
  SECTION("constant series takes the fallback branch") {
    const Series c(std::vector<double>(100, 2.0));
    CHECK(estimate_fold_period(c, 16) == 16);
  }
  SECTION("result is a positive multiple of the patch below max(patch, L)") {
    Rng rng(13);
    for (int trial = 0; trial < 40; ++trial) {
      const int L = int(rng.uniform_int(4, 600));
      const Series s = testing::random_series(rng, L);
      const int vp = int(rng.uniform_int(1, 32));
      const int t = estimate_fold_period(s, vp);
      REQUIRE(t >= 1);
      REQUIRE(t % vp == 0);
      REQUIRE(t <= std::max(vp, L));
    }
  }
}

TEST_CASE("fold and unfold", "[image]") {
  auto make_row = [](const std::vector<double>& v) {
    Decomposition d;
    d.raw = Series(v);
    d.trend = d.raw;
    d.remainder = Series(std::vector<double>(v.size(), 0.0));
    for (std::size_t i = 0; i < v.size(); ++i)
      d.remainder.values[i] = v[i] * 0.5;
    return intensity_map(d);
  };

  SECTION("index arithmetic for L=6, T=3") {
    const RGBRow row = make_row({0, 1, 2, 3, 4, 5});
    auto [grid, plan] = fold(row, 3);
    CHECK(grid.cols == 2);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 2; ++c)
        CHECK(grid.at(r, c, 0) == row.intensities[c * 3 + r][0]);
  }
  SECTION("pad cell takes the mean of the final period") {
    const RGBRow row = make_row({0, 1, 2, 3, 4});
    auto [grid, plan] = fold(row, 3);
    CHECK(plan.pad_len_fold == 1);
    const double expect =
        (row.intensities[2][0] + row.intensities[3][0] + row.intensities[4][0]) /
        3.0;
    CHECK(grid.at(2, 1, 0) == Catch::Approx(expect));
  }
  SECTION("unfold(fold(x)) is exact for 1000 random shapes") {
    Rng rng(17);
    for (int trial = 0; trial < 1000; ++trial) {
      const int L = int(rng.uniform_int(1, 2048));
      const int t_fold = int(rng.uniform_int(1, 512));
      const RGBRow row = make_row([&] {
        std::vector<double> v(L);
        for (auto& x : v) x = rng.uniform(-4.0, 9.0);
        return v;
      }());
      auto [grid, plan] = fold(row, t_fold);
      const auto back = unfold(grid, L);
      for (int i = 0; i < L; ++i)
        for (int ch = 0; ch < 3; ++ch)
          REQUIRE(back[i][ch] == row.intensities[i][ch]);
    }
  }
}

TEST_CASE("canvas scaling", "[image]") {
  Rng rng(19);
  SECTION("T_fold=112 copies every source row twice") {
    const Series s = testing::random_series(rng, 224);
    const CanvasImage img = convert_with_period(s, 112, 5);
    REQUIRE(img.plan.v_mode == VerticalMode::replicate);
    for (int y = 0; y < kCanvas; ++y)
      CHECK(img.plan.v_scale[y] == y / 2);
    for (int y = 0; y < kCanvas; y += 2)
      for (int x = 0; x < kCanvas; x += 17)
        REQUIRE(img.at(y, x, 0) == img.at(y + 1, x, 0));
  }
  SECTION("n_cols=224 keeps the horizontal pass an identity") {
    const Series s = testing::random_series(rng, 224 * 2);
    const CanvasImage img = convert_with_period(s, 2, 5);
    REQUIRE(img.plan.n_cols == 224);
    for (const auto& w : img.plan.h_scale) {
      CHECK(w.w0 == 1.0);
      CHECK(w.w1 == 0.0);
    }
  }
  SECTION("piecewise-linear rows survive resampling when n_cols | 224") {
    // direct evaluation of the interpolation weights on a linear ramp
    const int n_cols = 56;
    const auto ws = detail::horizontal_weights(n_cols, kCanvas);
    for (int j = 0; j < kCanvas; ++j) {
      const double interp = ws[j].w0 * ws[j].c0 + ws[j].w1 * ws[j].c1;
      const double expected = std::min(double(j) * n_cols / kCanvas,
                                       double(n_cols - 1));
      REQUIRE(interp == Catch::Approx(expected).margin(1e-6));
    }
  }
}

TEST_CASE("convert output contract", "[image]") {
  Rng rng(23);
  const Series s = testing::sine_series(300, 24, 1.0, 0.05, 3);
  const CanvasImage a = convert(s);
  const CanvasImage b = convert(s);
  CHECK(a.pixels.size() == std::size_t(224) * 224 * 3);
  for (double v : a.pixels) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 255.0);
  }
  REQUIRE(a.pixels == b.pixels);  // bit-identical determinism
}

TEST_CASE("R channel is recoverable through the fold plan", "[image]") {
  Rng rng(29);
  const int divisors[] = {1, 2, 4, 7, 8, 14, 16, 28, 32, 56, 112, 224};
  for (int trial = 0; trial < 50; ++trial) {
    const int t_fold = divisors[rng.uniform_int(0, 11)];
    const int n_cols = divisors[rng.uniform_int(2, 9)];
    const std::int64_t max_l = std::int64_t(t_fold) * n_cols;
    const std::int64_t min_l = std::int64_t(t_fold) * (n_cols - 1) + 1;
    const int L = int(rng.uniform_int(std::max<std::int64_t>(2, min_l), max_l));

    const Series s = testing::random_series(rng, L);
    const CanvasImage img = convert_with_period(s, t_fold, 5);
    REQUIRE(img.plan.n_cols == n_cols);

    const auto recovered = invert_channel_normalized(img, 0);
    const auto raw = invert_channel_raw(img, 0);
    const ChannelScale sc = img.plan.var_scales[0][0];
    for (int t = 0; t < L; ++t) {
      const double expected_norm =
          sc.constant ? 0.0 : (s.values[t] - sc.min) / (sc.max - sc.min);
      if (!sc.constant) {
        REQUIRE(recovered[t] == Catch::Approx(expected_norm).margin(1e-5));
        REQUIRE(raw[t] == Catch::Approx(s.values[t])
                              .margin(1e-5 * (sc.max - sc.min)));
      }
    }
  }
}

TEST_CASE("multivariate composite", "[image]") {
  Rng rng(31);
  SECTION("single variable with gamma 1 reduces to the univariate path") {
    MultiSeries ms;
    ms.variables.push_back(testing::sine_series(200, 20, 1.0, 0.1, 5));
    GammaCoefficients g{{1.0}};
    const CanvasImage multi = convert_multivariate(ms, g);
    const CanvasImage uni = convert(ms.variables[0]);
    REQUIRE(multi.pixels == uni.pixels);
  }
  SECTION("gamma 1 leaves intensities unchanged") {
    for (int trial = 0; trial < 5; ++trial) {
      const double p = rng.uniform(0.0, 255.0);
      CHECK(255.0 * std::pow(p / 255.0, 1.0) == Catch::Approx(p));
    }
  }
  SECTION("two variables concatenate to a 2L row before folding") {
    MultiSeries ms;
    ms.variables.push_back(testing::random_series(rng, 100));
    ms.variables.push_back(testing::random_series(rng, 100));
    const CanvasImage img = convert_multivariate(ms, default_gammas(2));
    CHECK(img.plan.length == 200);
    CHECK(img.plan.n_variables == 2);
  }
  SECTION("mismatched lengths are rejected") {
    MultiSeries ms;
    ms.variables.push_back(testing::random_series(rng, 100));
    ms.variables.push_back(testing::random_series(rng, 90));
    CHECK_THROWS_AS(convert_multivariate(ms, default_gammas(2)),
                    ValidationError);
  }
}

TEST_CASE("line plot ablation canvas", "[image]") {
  const Series s = testing::sine_series(128, 16);
  const CanvasImage img = render_line_plot(s);
  CHECK(img.plan.line_plot);
  CHECK_THROWS_AS(invert_channel_intensity(img, 0), ValidationError);
  int dark = 0;
  for (int y = 0; y < kCanvas; ++y)
    for (int x = 0; x < kCanvas; ++x)
      if (img.at(y, x, 0) == 0.0) ++dark;
  CHECK(dark >= kCanvas);  // at least one pixel per column
}
