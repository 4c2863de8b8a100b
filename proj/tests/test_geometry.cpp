#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "fsim/geometry.hpp"

using namespace fsim;

TEST_CASE("skew matrix matches the cross product") {
  Mat3 s = skew(Vec3(1, 2, 3));
  Mat3 ref;
  ref << 0, -3, 2, 3, 0, -1, -2, 1, 0;
  REQUIRE((s - ref).norm() == 0.0);
  REQUIRE(skew(Vec3::Zero()).isZero(0.0));

  std::mt19937 gen(42);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int i = 0; i < 100; ++i) {
    Vec3 w(dist(gen), dist(gen), dist(gen)), v(dist(gen), dist(gen), dist(gen));
    REQUIRE((skew(w) * v - w.cross(v)).norm() < 1e-14);
  }
}

TEST_CASE("cofactor identity m cof(m)^T = det(m) I") {
  std::mt19937 gen(7);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Mat3 m = Mat3::NullaryExpr([&](int, int) { return dist(gen); });
    Mat3 lhs = m * cofactor(m).transpose();
    REQUIRE((lhs - m.determinant() * Mat3::Identity()).norm() < 1e-13);
  }
  // rotations are their own cofactor matrix
  Mat3 r = rotation_exp(Vec3(0.3, -0.2, 0.9));
  REQUIRE((cofactor(r) - r).norm() < 1e-13);
}

TEST_CASE("rotation integration") {
  SECTION("quarter turn about z") {
    Mat3 r = integrate_rotation(Mat3::Identity(), Vec3(0, 0, M_PI / 2), 1.0);
    Mat3 ref;
    ref << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    REQUIRE((r - ref).norm() < 1e-14);
  }
  SECTION("zero rate returns R exactly") {
    Mat3 r0 = rotation_exp(Vec3(0.1, 0.2, 0.3));
    Mat3 r = integrate_rotation(r0, Vec3::Zero(), 0.5);
    REQUIRE((r - r0).cwiseAbs().maxCoeff() == 0.0);
  }
  SECTION("1000 small steps accumulate to angle 1 about z") {
    Mat3 r = Mat3::Identity();
    for (int i = 0; i < 1000; ++i) r = integrate_rotation(r, Vec3(0, 0, 1), 1e-3);
    REQUIRE((r - rotation_exp(Vec3(0, 0, 1))).norm() < 1e-6);
  }
  SECTION("orthonormality over 1e5 composed steps") {
    Mat3 r = Mat3::Identity();
    for (int i = 0; i < 100000; ++i) r = integrate_rotation(r, Vec3(0.3, -1.1, 0.7), 1e-3);
    REQUIRE((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE(r.determinant() == Catch::Approx(1.0).margin(1e-12));
  }
}
