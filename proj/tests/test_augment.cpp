#include "doctest.h"

#include <algorithm>

#include "fixtures.hpp"
#include "scc/augment.hpp"

using namespace scc;
using scc::testing::random_image;

TEST_SUITE("augment") {

TEST_CASE("flip_horizontal") {
  Image x(2, 2);
  x << 1, 2, 3, 4;
  Image expected(2, 2);
  expected << 2, 1, 4, 3;
  CHECK(flip_horizontal(x) == expected);

  Engine engine = make_engine(1, "test");
  const Image y = random_image(engine, 5, 7, 0, 1);
  CHECK(flip_horizontal(flip_horizontal(y)) == y);
  const Image column = random_image(engine, 4, 1, 0, 1);
  CHECK(flip_horizontal(column) == column);
}

TEST_CASE("odd views are flipped") {
  Engine engine = make_engine(2, "test");
  const Image x = random_image(engine, 4, 6, 0, 1);
  const auto one = make_views(x, ViewSpec{1, 0.0, 3, true});
  REQUIRE(one.size() == 1);
  CHECK(one[0] == flip_horizontal(x));
  const auto two = make_views(x, ViewSpec{2, 0.0, 3, true});
  REQUIRE(two.size() == 2);
  CHECK(two[0] == flip_horizontal(x));
  CHECK(two[1] == x);
  const auto plain = make_views(x, ViewSpec{3, 0.0, 3, false});
  for (const Image& v : plain) CHECK(v == x);
}

TEST_CASE("view noise has the requested scale") {
  const ViewPlan plan = make_view_plan(ViewSpec{2, 6.0, 11, true}, 224, 224);
  double sum = 0.0;
  double sq = 0.0;
  double n = 0.0;
  for (const Image& noise : plan.noise) {
    sum += noise.sum();
    sq += noise.squaredNorm();
    n += static_cast<double>(noise.size());
  }
  REQUIRE(n >= 1e5);
  const double mean = sum / n;
  const double std_dev = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(std_dev - 6.0 / 255.0) / (6.0 / 255.0) < 0.02);
}

TEST_CASE("views are deterministic, order independent and in range") {
  Engine engine = make_engine(3, "test");
  const Image x = random_image(engine, 8, 8, 0, 1);
  const ViewSpec a{4, 6.0, 21, true};
  const ViewSpec b{4, 6.0, 22, true};
  const auto a1 = make_views(x, a);
  const auto b1 = make_views(x, b);
  const auto a2 = make_views(x, a);
  for (std::size_t i = 0; i < a1.size(); ++i) {
    CHECK(a1[i] == a2[i]);
    CHECK(a1[i] != b1[i]);
    CHECK(a1[i].minCoeff() >= 0.0);
    CHECK(a1[i].maxCoeff() <= 1.0);
  }
}

TEST_CASE("view spec validation") {
  CHECK_THROWS_AS(validate(ViewSpec{0, 6.0, 0, true}), PreconditionError);
  CHECK_THROWS_AS(validate(ViewSpec{2, -1.0, 0, true}), PreconditionError);
  const ViewPlan plan = make_view_plan(ViewSpec{1, 0.0, 0, true}, 2, 2);
  CHECK_THROWS_AS(apply_view(Image::Zero(3, 3), plan, 0), ShapeMismatchError);
}

TEST_CASE("view_pullback is the adjoint of an interior view") {
  Engine engine = make_engine(4, "test");
  const Image x = random_image(engine, 6, 6, 0.3, 0.7);
  const ViewPlan plan = make_view_plan(ViewSpec{2, 6.0, 5, true}, 6, 6);
  const Image g = random_image(engine, 6, 6, -1, 1);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const Vector numeric = finite_diff_gradient(
        [&](const Vector& v) { return flatten(g).dot(flatten(apply_view(unflatten(v, 6, 6), plan, i))); },
        Vector(flatten(x)), 1e-6);
    CHECK((numeric - flatten(view_pullback(x, plan, i, g))).cwiseAbs().maxCoeff() < 1e-8);
  }
}

}
