#include <catch2/catch_amalgamated.hpp>

#include "lyap_reach/geometry.hpp"
#include "lyap_reach/rng.hpp"

using namespace lyap_reach;

namespace {

Vector6d random_twist(Rng& rng) {
  Vector6d x;
  for (int i = 0; i < 6; ++i) x(i) = rng.uniform(-2.0, 2.0);
  return x;
}

Matrix4d random_matrix4(Rng& rng) {
  Matrix4d A;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) A(r, c) = rng.uniform(-1.0, 1.0);
  return A;
}

Matrix3d random_rotation(Rng& rng) {
  const Vector3d axis = Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
  return rot_about_axis(axis, rng.uniform(-M_PI, M_PI));
}

}  // namespace

TEST_CASE("hat builds the canonical se(3) matrix", "[geometry]") {
  CHECK(hat(Twist{}).isZero(0.0));

  const Matrix4d Z = hat(Twist{Vector3d(0, 0, 1), Vector3d::Zero()});
  CHECK(Z(0, 1) == -1.0);
  CHECK(Z(1, 0) == 1.0);
  Matrix4d expect = Matrix4d::Zero();
  expect(0, 1) = -1.0;
  expect(1, 0) = 1.0;
  CHECK((Z - expect).norm() == 0.0);
}

TEST_CASE("vee reads twists back off se(3) matrices", "[geometry]") {
  CHECK(vee(Matrix4d::Zero()).vector().isZero(0.0));

  Vector6d xi;
  xi << 1, 2, 3, 4, 5, 6;
  CHECK((vee_vector(hat(xi)) - xi).norm() == 0.0);

  Matrix4d X = Matrix4d::Zero();
  X(2, 1) = 0.5;
  X(1, 2) = -0.5;
  X(0, 3) = 2.0;
  const Twist t = vee(X);
  CHECK(t.omega.isApprox(Vector3d(0.5, 0, 0), 0.0));
  CHECK(t.v.isApprox(Vector3d(2, 0, 0), 0.0));

  SECTION("non-skew input is rejected") {
    Matrix4d bad = Matrix4d::Zero();
    bad(0, 1) = 1.0;  // no compensating -1 at (1,0)
    CHECK_THROWS_AS(vee(bad), std::invalid_argument);
  }
}

TEST_CASE("hat/vee round-trip on random twists", "[geometry]") {
  Rng rng(11);
  for (int k = 0; k < 1000; ++k) {
    const Vector6d xi = random_twist(rng);
    CHECK((vee_vector(hat(xi)) - xi).norm() < 1e-12);
  }
}

TEST_CASE("proj_se3 projects onto se(3)", "[geometry]") {
  SECTION("the identity projects to the zero element") {
    // Symmetric rotation block -> zero skew part; translation column and
    // bottom-right 1 are both annihilated.
    CHECK(proj_se3(Matrix4d::Identity()).isZero(0.0));
  }

  Rng rng(12);
  SECTION("idempotent and linear") {
    for (int k = 0; k < 100; ++k) {
      const Matrix4d A = random_matrix4(rng);
      const Matrix4d B = random_matrix4(rng);
      CHECK((proj_se3(proj_se3(A)) - proj_se3(A)).norm() < 1e-15);
      const double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
      CHECK((proj_se3(a * A + b * B) - (a * proj_se3(A) + b * proj_se3(B))).norm() < 1e-10);
    }
  }

  SECTION("nearest point among random se(3) samples") {
    const Matrix4d A = random_matrix4(rng);
    const Matrix4d P = proj_se3(A);
    const double d_proj = (A - P).norm();
    for (int k = 0; k < 1000; ++k) {
      const Matrix4d X = hat(random_twist(rng));
      CHECK(d_proj <= (A - X).norm() + 1e-12);
    }
  }

  SECTION("output is a valid vee input") {
    for (int k = 0; k < 20; ++k) CHECK_NOTHROW(vee(proj_se3(random_matrix4(rng))));
  }
}

TEST_CASE("skew Frobenius norm carries the factor two", "[geometry]") {
  // ||[w]_x||_F^2 = 2||w||^2 is where the 2-block of Q comes from.
  Rng rng(13);
  for (int k = 0; k < 100; ++k) {
    const Vector3d w(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    CHECK(skew(w).squaredNorm() == Catch::Approx(2.0 * w.squaredNorm()).epsilon(1e-12));
  }
  Vector6d q_diag = q_weight().diagonal();
  Vector6d expect;
  expect << 2, 2, 2, 1, 1, 1;
  CHECK((q_diag - expect).norm() == 0.0);
}

TEST_CASE("Frobenius pairing matches the Q-weighted vector pairing", "[geometry]") {
  // tr(hat(a)^T hat(b)) = a^T Q b links the matrix and vector views of se(3).
  Rng rng(14);
  for (int k = 0; k < 100; ++k) {
    const Vector6d a = random_twist(rng), b = random_twist(rng);
    const double lhs = (hat(a).transpose() * hat(b)).trace();
    const double rhs = a.dot(q_weight() * b);
    CHECK(lhs == Catch::Approx(rhs).margin(1e-12));
  }
}

TEST_CASE("rot_about_axis", "[geometry]") {
  CHECK((rot_z(0.0) - Matrix3d::Identity()).norm() == 0.0);
  CHECK((rot_z(M_PI / 2) * Vector3d::UnitX() - Vector3d::UnitY()).norm() < 1e-15);

  Rng rng(15);
  for (int k = 0; k < 50; ++k) {
    const Vector3d axis = Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized();
    const double phi = rng.uniform(-M_PI, M_PI);
    const Matrix3d R = rot_about_axis(axis, phi);
    CHECK(rotation_defect(R) < 1e-14);
    CHECK((R * rot_about_axis(axis, -phi) - Matrix3d::Identity()).norm() < 1e-14);
  }

  CHECK_THROWS_AS(rot_about_axis(Vector3d(1, 1, 0), 0.3), std::invalid_argument);
}

TEST_CASE("pose validity and orthonormalization", "[geometry]") {
  Pose p;
  CHECK(pose_is_valid(p));

  Rng rng(16);
  p.R = random_rotation(rng);
  // Inject drift well past the validity tolerance, then heal it.
  Matrix3d noisy = p.R;
  noisy(0, 0) += 1e-5;
  CHECK_FALSE(pose_is_valid(Pose{noisy, Vector3d::Zero()}));
  const Matrix3d healed = orthonormalized(noisy);
  CHECK(pose_is_valid(Pose{healed, Vector3d::Zero()}));
  CHECK((healed - p.R).norm() < 1e-4);
}

TEST_CASE("pose 12-number serialization round-trips", "[geometry]") {
  Rng rng(17);
  Pose p{random_rotation(rng), Vector3d(0.25, -0.5, 0.125)};
  const auto a = pose_to_array(p);
  CHECK(a[9] == 0.25);
  CHECK(a[10] == -0.5);
  CHECK(a[11] == 0.125);
  CHECK(a[1] == p.R(0, 1));  // row-major layout
  const Pose q = pose_from_array(a);
  CHECK((q.R - p.R).norm() == 0.0);
  CHECK((q.t - p.t).norm() == 0.0);

  auto bad = a;
  bad[0] += 0.1;
  CHECK_THROWS_AS(pose_from_array(bad), std::invalid_argument);
}
