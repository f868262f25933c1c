#include <catch2/catch_amalgamated.hpp>

#include "support.hpp"
#include "vetime/series.hpp"

using namespace vetime;

TEST_CASE("constant series normalizes to zeros", "[series]") {
  auto [out, stats] = instance_normalize(Series({5.0, 5.0, 5.0}), 1e-8);
  CHECK(out.values == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(stats.mean == Catch::Approx(5.0));
  CHECK(stats.std == Catch::Approx(0.0));
}

TEST_CASE("symmetric series uses population std", "[series]") {
  auto [out, stats] = instance_normalize(Series({-1.0, 0.0, 1.0}));
  CHECK(out.values[0] == Catch::Approx(-1.22474487).margin(1e-5));
  CHECK(out.values[1] == Catch::Approx(0.0));
  CHECK(out.values[2] == Catch::Approx(1.22474487).margin(1e-5));
}

TEST_CASE("normalize/denormalize round-trips random series", "[series]") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const int L = static_cast<int>(rng.uniform_int(1, 400));
    const Series s = testing::random_series(rng, L, rng.uniform(0.01, 50.0));
    auto [norm, stats] = instance_normalize(s);
    const Series back = denormalize(norm, stats);
    for (int t = 0; t < L; ++t)
      REQUIRE(back.values[t] == Catch::Approx(s.values[t]).margin(1e-9));
  }
}

TEST_CASE("non-finite input is rejected", "[series]") {
  Series s({1.0, std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(instance_normalize(s), ValidationError);
}

TEST_CASE("patchify shapes and padding", "[series]") {
  Rng rng(3);
  SECTION("exact fit") {
    const PatchGrid g = patchify(testing::random_series(rng, 32), 16);
    CHECK(g.n_patches() == 2);
    CHECK(g.pad_len == 0);
  }
  SECTION("trailing patch repeats the final value") {
    const Series s = testing::random_series(rng, 33);
    const PatchGrid g = patchify(s, 16);
    CHECK(g.n_patches() == 3);
    CHECK(g.pad_len == 15);
    for (int j = 1; j < 16; ++j)
      CHECK(g.tokens[2][j] == s.values[32]);
  }
  SECTION("patch_size must be positive") {
    CHECK_THROWS_AS(patchify(testing::random_series(rng, 8), 0),
                    ValidationError);
  }
}

TEST_CASE("patchify/unpatchify round-trip is exact", "[series]") {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const int L = static_cast<int>(rng.uniform_int(1, 300));
    const int p = static_cast<int>(rng.uniform_int(1, 40));
    const Series s = testing::random_series(rng, L);
    const Series back = unpatchify(patchify(s, p), L);
    REQUIRE(back.values == s.values);
  }
}

TEST_CASE("point labels collapse to patch flags by OR", "[series]") {
  std::vector<std::uint8_t> labels(32, 0);
  labels[20] = 1;
  CHECK(point_labels_to_patch_labels(labels, 16).flags ==
        std::vector<std::uint8_t>{0, 1});

  CHECK(point_labels_to_patch_labels(std::vector<std::uint8_t>(48, 0), 16)
            .flags == std::vector<std::uint8_t>{0, 0, 0});

  std::vector<std::uint8_t> first(48, 0);
  first[0] = 1;
  CHECK(point_labels_to_patch_labels(first, 16).flags ==
        std::vector<std::uint8_t>{1, 0, 0});
}

TEST_CASE("patch flags are monotone in the point labels", "[series]") {
  Rng rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    const int L = static_cast<int>(rng.uniform_int(1, 120));
    const int p = static_cast<int>(rng.uniform_int(1, 20));
    std::vector<std::uint8_t> labels(L, 0);
    for (auto& l : labels) l = rng.uniform() < 0.2 ? 1 : 0;
    const auto before = point_labels_to_patch_labels(labels, p).flags;
    auto more = labels;
    more[rng.uniform_int(0, L - 1)] = 1;
    const auto after = point_labels_to_patch_labels(more, p).flags;
    for (std::size_t i = 0; i < before.size(); ++i)
      REQUIRE(after[i] >= before[i]);
  }
}
