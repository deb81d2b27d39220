#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "sge/tensor.hpp"
#include "support/checks.hpp"
#include "support/oracle.hpp"

using namespace sge;
using sge::testing::random_tensor;

TEST_CASE("construction validates shape and data") {
  CHECK_THROWS_AS(Tensor4<float>(Shape4{0, 1, 1, 1}), InvalidArgument);
  CHECK_THROWS_AS(Tensor4<float>(Shape4{1, -2, 1, 1}), InvalidArgument);
  CHECK_THROWS_AS(Tensor4<float>(Shape4{1, 1, 1, 1}, {1.f, 2.f}),
                  InvalidArgument);
  CHECK_THROWS_AS(
      Tensor4<float>(Shape4{1, 1, 1, 1},
                     {std::numeric_limits<float>::quiet_NaN()}),
      NonFiniteInput);
  CHECK_THROWS_AS(
      Tensor4<float>(Shape4{1, 1, 1, 1},
                     {std::numeric_limits<float>::infinity()}),
      NonFiniteInput);
  Tensor4<float> ok(Shape4{2, 3, 4, 5});
  CHECK(ok.size() == 120);
}

TEST_CASE("group_split shape arithmetic") {
  Tensor4<float> fm(Shape4{1, 4, 2, 2});
  auto view = group_split(fm, 2);
  CHECK(view.per_group_channels() == 2);
  CHECK(view.positions() == 4);

  CHECK_THROWS_AS(group_split(fm, 3), IndivisibleChannels);
  try {
    group_split(fm, 3);
  } catch (const IndivisibleChannels& e) {
    CHECK(e.channels() == 4);
    CHECK(e.groups() == 3);
  }

  Tensor4<float> big(Shape4{2, 256, 14, 14});
  auto big_view = group_split(big, 64);
  CHECK(big_view.per_group_channels() == 4);
  CHECK(big_view.positions() == 196);
}

TEST_CASE("grouped view aliases the source") {
  std::mt19937_64 rng(7);
  Tensor4<double> fm = random_tensor(Shape4{1, 4, 2, 2}, rng);
  auto view = group_split(fm, 2);

  // (n, g, d, i) maps to (n, g*(C/G)+d, i/W, i%W)
  for (int g = 0; g < 2; ++g) {
    for (int d = 0; d < 2; ++d) {
      for (int i = 0; i < 4; ++i) {
        CHECK(view(0, g, d, i) == fm.at(0, g * 2 + d, i / 2, i % 2));
      }
    }
  }

  view(0, 1, 0, 3) = 42.0;
  Tensor4<double> merged = group_merge(view);
  CHECK(merged.at(0, 2, 1, 1) == 42.0);
}

TEST_CASE("group_merge round trip is bitwise identity") {
  std::mt19937_64 rng(11);
  for (Shape4 shape : {Shape4{1, 4, 2, 2}, Shape4{3, 6, 5, 4},
                       Shape4{2, 256, 14, 14}}) {
    Tensor4<double> fm = random_tensor(shape, rng);
    for (int groups : {1, 2}) {
      if (shape.c % groups != 0) continue;
      auto view = group_split(fm, groups);
      Tensor4<double> merged = group_merge(view);
      CHECK(merged.shape() == shape);
      CHECK(merged.values() == fm.values());
    }
  }
}

TEST_CASE("spatial_mean hand cases") {
  // C/G = 1, m = 2: values [1, -1] -> [0]; [2, 0] -> [1]
  Tensor4<double> fm(Shape4{1, 1, 1, 2}, {1.0, -1.0});
  auto view = group_split(fm, 1);
  auto mean = spatial_mean(view, 0, 0);
  REQUIRE(mean.size() == 1);
  CHECK(mean[0] == 0.0);

  Tensor4<double> fm2(Shape4{1, 1, 1, 2}, {2.0, 0.0});
  auto view2 = group_split(fm2, 1);
  CHECK(spatial_mean(view2, 0, 0)[0] == 1.0);
}

TEST_CASE("spatial_mean matches scalar oracle") {
  std::mt19937_64 rng(23);
  Tensor4<double> fm = random_tensor(Shape4{2, 8, 3, 3}, rng);
  auto view = group_split(fm, 2);
  for (int n = 0; n < 2; ++n) {
    for (int g = 0; g < 2; ++g) {
      auto mean = spatial_mean(view, n, g);
      auto expect = sge::testing::oracle_spatial_mean(fm, 2, n, g);
      REQUIRE(mean.size() == expect.size());
      for (std::size_t d = 0; d < mean.size(); ++d) {
        CHECK(sge::testing::rel_err(mean[d], expect[d]) < 1e-6);
      }
    }
  }
}

TEST_CASE("spatial_mean index errors") {
  Tensor4<double> fm(Shape4{1, 2, 2, 2});
  auto view = group_split(fm, 2);
  CHECK_THROWS_AS(spatial_mean(view, 1, 0), IndexOutOfRange);
  CHECK_THROWS_AS(spatial_mean(view, 0, 2), IndexOutOfRange);
  CHECK_THROWS_AS(spatial_mean(view, -1, 0), IndexOutOfRange);
}

TEST_CASE("spatial_mean is linear") {
  std::mt19937_64 rng(31);
  const Shape4 shape{1, 6, 4, 3};
  Tensor4<double> xt = random_tensor(shape, rng);
  Tensor4<double> yt = random_tensor(shape, rng);
  const double alpha = 0.7, beta = -1.3;

  std::vector<double> combo(shape.volume());
  for (std::size_t i = 0; i < combo.size(); ++i) {
    combo[i] = alpha * xt.values()[i] + beta * yt.values()[i];
  }
  Tensor4<double> zt(shape, combo);

  auto vx = group_split(xt, 3);
  auto vy = group_split(yt, 3);
  auto vz = group_split(zt, 3);
  for (int g = 0; g < 3; ++g) {
    auto mx = spatial_mean(vx, 0, g);
    auto my = spatial_mean(vy, 0, g);
    auto mz = spatial_mean(vz, 0, g);
    for (std::size_t d = 0; d < mz.size(); ++d) {
      CHECK(sge::testing::rel_err(mz[d], alpha * mx[d] + beta * my[d]) < 1e-6);
    }
  }
}

TEST_CASE("spatial_mean is invariant to position permutation") {
  std::mt19937_64 rng(37);
  const Shape4 shape{1, 4, 3, 3};
  Tensor4<double> fm = random_tensor(shape, rng);

  std::vector<int> perm(shape.positions());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  Tensor4<double> shuffled(shape);
  for (int c = 0; c < shape.c; ++c) {
    for (int i = 0; i < shape.positions(); ++i) {
      const int j = perm[i];
      shuffled.at(0, c, i / shape.w, i % shape.w) =
          fm.at(0, c, j / shape.w, j % shape.w);
    }
  }

  auto v1 = group_split(fm, 2);
  auto v2 = group_split(shuffled, 2);
  for (int g = 0; g < 2; ++g) {
    auto m1 = spatial_mean(v1, 0, g);
    auto m2 = spatial_mean(v2, 0, g);
    for (std::size_t d = 0; d < m1.size(); ++d) {
      CHECK(sge::testing::close(m1[d], m2[d], 1e-6, 1e-12));
    }
  }
}
