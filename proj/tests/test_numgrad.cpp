#include "doctest.h"

#include "fixtures.hpp"
#include "scc/numgrad.hpp"

using namespace scc;
using scc::testing::random_vector;

TEST_SUITE("numgrad") {

TEST_CASE("l2_normalize") {
  CHECK(l2_normalize(Vector::Unit(2, 0)).values() == Vector::Unit(2, 0));
  const auto u = l2_normalize(Eigen::Vector2d(3, 4));
  CHECK(u[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(u[1] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK_THROWS_AS(l2_normalize(Eigen::Vector2d(0, 0)), ZeroNormError);
  CHECK_THROWS_AS(l2_normalize(Eigen::Vector2d(1e-13, 0)), ZeroNormError);

  Engine engine = make_engine(1, "test");
  for (int n = 0; n < 50; ++n) {
    CHECK(std::abs(l2_normalize(random_vector(engine, 7)).values().norm() - 1.0) <= 1e-9);
  }
}

TEST_CASE("l2_normalize is generic over the scalar type") {
  const auto u = l2_normalize(Eigen::Vector2f(3.0f, 4.0f));
  CHECK(u[0] == doctest::Approx(0.6f));
  const Eigen::VectorXf p = softmax_with_temp(Eigen::VectorXf::Zero(4), 1.0f);
  CHECK(p.sum() == doctest::Approx(1.0f));
}

TEST_CASE("cosine") {
  const auto e0 = l2_normalize(Eigen::Vector2d(1, 0));
  const auto e1 = l2_normalize(Eigen::Vector2d(0, 1));
  CHECK(cosine(e0, e0) == 1.0);
  CHECK(cosine(e0, e1) == 0.0);
  CHECK(cosine(l2_normalize(Eigen::Vector2d(0.6, 0.8)), e0) == doctest::Approx(0.6).epsilon(1e-15));
  CHECK_THROWS_AS(cosine(e0, l2_normalize(Eigen::Vector3d(1, 0, 0))), ShapeMismatchError);

  Engine engine = make_engine(2, "test");
  for (int n = 0; n < 50; ++n) {
    const double c = cosine(l2_normalize(random_vector(engine, 5)), l2_normalize(random_vector(engine, 5)));
    CHECK(std::abs(c) <= 1.0 + 1e-9);
  }
}

TEST_CASE("grad_cosine_wrt_embedding") {
  const auto t0 = l2_normalize(Eigen::Vector2d(1, 0));
  const auto t1 = l2_normalize(Eigen::Vector2d(0, 1));
  CHECK(grad_cosine_wrt_embedding(Eigen::Vector2d(1, 0), t0).isZero(0));
  CHECK(grad_cosine_wrt_embedding(Eigen::Vector2d(1, 0), t1) == Vector(Eigen::Vector2d(0, 1)));
  CHECK(grad_cosine_wrt_embedding(Eigen::Vector2d(2, 0), t1) == Vector(Eigen::Vector2d(0, 0.5)));
  CHECK_THROWS_AS(grad_cosine_wrt_embedding(Eigen::Vector2d(0, 0), t1), ZeroNormError);
}

TEST_CASE("grad_cosine_wrt_embedding matches central differences") {
  Engine engine = make_engine(3, "test");
  for (int n = 0; n < 20; ++n) {
    const int d = 2 + n % 15;
    const Vector e = random_vector(engine, d);
    const Vector t = random_vector(engine, d).normalized();
    const auto cos_of = [&](const Vector& v) { return v.dot(t) / v.norm(); };
    const Vector numeric = finite_diff_gradient(cos_of, e, 1e-6);
    const Vector analytic = grad_cosine_wrt_embedding(e, Eigen::Ref<const Vector>(t));
    CHECK((analytic - numeric).norm() / numeric.norm() < 1e-5);
  }
}

TEST_CASE("project_linf") {
  CHECK(project_linf(Eigen::Vector2d(0.5, -0.2), 0.3) == Eigen::Vector2d(0.3, -0.2));
  CHECK(project_linf(Vector::Constant(1, 0.1), 0.3) == Vector::Constant(1, 0.1));
  CHECK(project_linf(Eigen::Vector2d(-1, 1), 0.0) == Eigen::Vector2d(0, 0));
  CHECK_THROWS_AS(project_linf(Eigen::Vector2d(0, 0), -0.1), PreconditionError);

  Engine engine = make_engine(4, "test");
  for (int n = 0; n < 50; ++n) {
    const Vector d = random_vector(engine, 30);
    const double eps = 0.05 * (n % 7);
    const Vector once = project_linf(d, eps);
    CHECK(project_linf(once, eps) == once);
    CHECK(once.cwiseAbs().maxCoeff() <= eps);
  }
}

TEST_CASE("project_linf works on images") {
  Image d(2, 2);
  d << 0.5, -0.5, 0.1, 0.0;
  Image expected(2, 2);
  expected << 0.2, -0.2, 0.1, 0.0;
  CHECK(project_linf(d, 0.2) == expected);
}

TEST_CASE("softmax_with_temp") {
  CHECK(softmax_with_temp(Eigen::Vector2d(0, 0), 1.0) == Vector(Eigen::Vector2d(0.5, 0.5)));
  const Vector sat = softmax_with_temp(Eigen::Vector2d(1000, 0), 1.0);
  CHECK(sat.allFinite());
  CHECK(std::abs(sat[0] - 1.0) <= 1e-12);
  CHECK(sat[1] <= 1e-12);
  const Vector p = softmax_with_temp(Eigen::Vector2d(std::log(2.0), 0), 1.0);
  CHECK(p[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  CHECK_THROWS_AS(softmax_with_temp(Eigen::Vector2d(0, 0), 0.0), PreconditionError);

  Engine engine = make_engine(5, "test");
  std::uniform_real_distribution<double> temps(0.01, 10.0);
  for (int n = 0; n < 100; ++n) {
    const Vector z = 10.0 * random_vector(engine, 8);
    const Vector q = softmax_with_temp(z, temps(engine));
    CHECK(std::abs(q.sum() - 1.0) <= 1e-12);
    CHECK(argmax(q) == argmax(z));
  }
}

TEST_CASE("argmax and max_excluding break ties toward the smallest index") {
  CHECK(argmax(Eigen::Vector3d(1, 3, 3)) == 1);
  CHECK(argmax(Eigen::Vector3d(2, 2, 2)) == 0);
  const auto [idx, val] = max_excluding(Eigen::Vector3d(5, 3, 3), 0);
  CHECK(idx == 1);
  CHECK(val == 3.0);
  CHECK(max_excluding(Eigen::Vector3d(5, 1, 3), 2).first == 0);
  CHECK_THROWS_AS(max_excluding(Vector::Constant(1, 1.0), 0), SingleClassError);
}

TEST_CASE("finite_diff_gradient") {
  const Vector g = finite_diff_gradient([](const Vector& v) { return v.squaredNorm(); },
                                        Vector(Eigen::Vector2d(1, 2)), 1e-6);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-8));

  Engine engine = make_engine(6, "test");
  const Vector x = random_vector(engine, 6);
  const Vector zero = finite_diff_gradient([](const Vector&) { return 3.5; }, x, 1e-6);
  CHECK(zero.cwiseAbs().maxCoeff() <= 1e-9);

  const Vector c = random_vector(engine, 6);
  const Vector lin = finite_diff_gradient([&](const Vector& v) { return c.dot(v); }, x, 1e-6);
  CHECK((lin - c).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK_THROWS_AS(finite_diff_gradient([](const Vector&) { return 0.0; }, x, 0.0), PreconditionError);
}

TEST_CASE("flatten is the row-major pixel order") {
  Image x(2, 3);
  x << 1, 2, 3, 4, 5, 6;
  const Vector flat = flatten(x);
  CHECK(flat == (Vector(6) << 1, 2, 3, 4, 5, 6).finished());
  CHECK(unflatten(flat, 2, 3) == x);
  CHECK_THROWS_AS(unflatten(flat, 4, 2), ShapeMismatchError);
}

TEST_CASE("clip_unit and all_finite") {
  CHECK(clip_unit(Eigen::Vector3d(-0.5, 0.5, 1.5)) == Eigen::Vector3d(0, 0.5, 1));
  CHECK(all_finite(Eigen::Vector2d(1, 2)));
  CHECK_FALSE(all_finite(Eigen::Vector2d(1, std::numeric_limits<double>::quiet_NaN())));
}

}
