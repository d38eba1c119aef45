#include <catch2/catch_amalgamated.hpp>

#include "lyap_reach/kinematics.hpp"
#include "lyap_reach/rng.hpp"

using namespace lyap_reach;

namespace {

KinematicChain ur5() { return load_chain(LYAP_REACH_CHAIN_FILE); }

// Canonical home configuration used by the simulator's start sampling.
Vector6d home() {
  Vector6d q;
  q << 0.0, -2.0, 1.8, -1.37, -M_PI / 2, 0.0;
  return q;
}

Vector6d random_config(Rng& rng) {
  Vector6d q;
  for (int i = 0; i < 6; ++i) q(i) = rng.uniform(-M_PI, M_PI);
  return q;
}

}  // namespace

TEST_CASE("UR5 zero-pose regression fixture", "[kinematics]") {
  // Golden value computed once with an independent DH calculator and frozen.
  const Pose T = forward_kinematics(ur5(), Vector6d::Zero());
  Matrix3d R_expect;
  R_expect << 1.0, 0.0, 0.0,
      0.0, 6.123233995736766e-17, -1.0,
      0.0, 1.0, 6.123233995736766e-17;
  const Vector3d t_expect(-0.81725, -0.19145, -5.490999999999991e-3);
  CHECK((T.R - R_expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((T.t - t_expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("UR5 home-pose regression fixture", "[kinematics]") {
  const Pose T = forward_kinematics(ur5(), home());
  Matrix3d R_expect;
  R_expect << -6.1183559594673224e-17, 9.9999968293183450e-01, 7.9632671073323776e-04,
      1.0, 6.1281100905236396e-17, -1.2246466049990963e-16,
      -1.2251342144777837e-16, 7.9632671073320567e-04, -9.9999968293183450e-01;
  const Vector3d t_expect(-3.0215314192689630e-01, -1.0914999999999998e-01, 4.7116310517681659e-01);
  CHECK((T.R - R_expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((T.t - t_expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("degenerate chain has no lever arms", "[kinematics]") {
  // All a = d = alpha = 0 collapses every link to a pure z-rotation: the
  // translation stays at the origin for any joint state and every Jacobian
  // column loses its translational part.
  KinematicChain chain;  // zero DH rows by default
  CHECK((forward_kinematics(chain, Vector6d::Zero()).matrix() - Matrix4d::Identity()).norm() == 0.0);

  Rng rng(21);
  for (int k = 0; k < 10; ++k) {
    const Vector6d q = random_config(rng);
    const Pose T = forward_kinematics(chain, q);
    CHECK(T.t.norm() == 0.0);
    CHECK((T.R - rot_z(q.sum())).norm() < 1e-12);
    const Matrix6d J = body_jacobian(chain, q);
    CHECK(J.bottomRows<3>().isZero(1e-15));
  }
}

TEST_CASE("FK translation is continuous in the joints", "[kinematics]") {
  const KinematicChain chain = ur5();
  Rng rng(22);
  const Vector6d q = random_config(rng);
  const Pose T0 = forward_kinematics(chain, q);
  double prev = std::numeric_limits<double>::infinity();
  for (double delta = 1e-2; delta > 1e-7; delta *= 0.1) {
    Vector6d qd = q;
    for (int i = 0; i < 6; ++i) qd(i) += delta;
    const double gap = (forward_kinematics(chain, qd).t - T0.t).norm();
    CHECK(gap < prev);
    prev = gap;
  }
  CHECK(prev < 1e-5);
}

TEST_CASE("FK output stays orthonormal", "[kinematics]") {
  const KinematicChain chain = ur5();
  Rng rng(23);
  for (int k = 0; k < 100; ++k) CHECK(pose_is_valid(forward_kinematics(chain, random_config(rng))));
}

TEST_CASE("joint limits are enforced", "[kinematics]") {
  KinematicChain chain = ur5();
  chain.joint_limits[2] = {-1.0, 1.0};
  Vector6d q = Vector6d::Zero();
  q(2) = 1.5;
  CHECK_THROWS_AS(forward_kinematics(chain, q), std::out_of_range);
  q(2) = 0.5;
  CHECK_NOTHROW(forward_kinematics(chain, q));
}

TEST_CASE("body Jacobian matches finite differences", "[kinematics]") {
  const KinematicChain chain = ur5();
  Rng rng(24);
  const double eps = 1e-6;
  for (int k = 0; k < 100; ++k) {
    const Vector6d q = random_config(rng);
    Pose T_H;
    const Matrix6d J = body_jacobian(chain, q, &T_H);
    const Matrix4d T = T_H.matrix();
    for (int i = 0; i < 6; ++i) {
      Vector6d qp = q;
      qp(i) += eps;
      const Matrix4d Tp = forward_kinematics(chain, qp).matrix();
      const Matrix4d body_vel = T.inverse() * ((Tp - T) / eps);
      const Vector6d fd = vee_vector(proj_se3(body_vel));
      CHECK((fd - J.col(i)).cwiseAbs().maxCoeff() < 1e-4);
    }
  }
}

TEST_CASE("home configuration is well conditioned", "[kinematics]") {
  // Frozen fixture: singular values of J at the home configuration, computed
  // once with an independent implementation.
  const Matrix6d J = body_jacobian(ur5(), home());
  Eigen::JacobiSVD<Matrix6d> svd(J);
  const Vector6d s = svd.singularValues();
  Vector6d expect;
  expect << 1.8146661959661252, 1.432987604206649, 1.0033789764459269,
      0.3656248866451329, 0.2538984808332925, 0.20256488750790572;
  CHECK((s - expect).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(s(0) / s(5) < 1e6);
}

TEST_CASE("solve_joint_velocity exact branch", "[kinematics]") {
  Vector6d twist;
  twist << 1, -2, 3, 0.5, 0, -1;
  SECTION("identity") {
    const auto sol = solve_joint_velocity(Matrix6d::Identity(), twist);
    CHECK_FALSE(sol.damped);
    CHECK((sol.qdot - twist).norm() < 1e-14);
  }
  SECTION("uniform scaling") {
    Vector6d two = Vector6d::Constant(2.0);
    const auto sol = solve_joint_velocity(Matrix6d(2.0 * Matrix6d::Identity()), two);
    CHECK((sol.qdot - Vector6d::Ones()).norm() < 1e-14);
  }
  SECTION("residual is tiny away from singularity") {
    const KinematicChain chain = ur5();
    Rng rng(25);
    for (int k = 0; k < 50; ++k) {
      const Matrix6d J = body_jacobian(chain, random_config(rng));
      const auto sol = solve_joint_velocity(J, twist);
      if (!sol.damped) CHECK((J * sol.qdot - twist).norm() < 1e-9);
    }
  }
}

TEST_CASE("solve_joint_velocity damped branch matches an SVD oracle", "[kinematics]") {
  const KinematicChain chain = ur5();
  Rng rng(26);
  Matrix6d J = body_jacobian(chain, random_config(rng));
  J.row(3).setZero();  // force rank deficiency
  Vector6d twist;
  twist << 0.1, 0.2, -0.3, 0.4, -0.5, 0.6;
  const auto sol = solve_joint_velocity(J, twist);
  CHECK(sol.damped);
  CHECK(sol.sigma_min < kSigmaTol);
  // Independent damped pseudo-inverse through the normal equations.
  const Matrix6d M = J * J.transpose() + kDamping * kDamping * Matrix6d::Identity();
  const Vector6d oracle = J.transpose() * M.ldlt().solve(twist);
  CHECK((sol.qdot - oracle).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("chain JSON round-trip and validation", "[kinematics]") {
  const KinematicChain chain = ur5();
  const KinematicChain back = chain_from_json(chain_to_json(chain));
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back.dh[i].a == chain.dh[i].a);
    CHECK(back.dh[i].d == chain.dh[i].d);
    CHECK(back.dh[i].alpha == chain.dh[i].alpha);
    CHECK(back.dh[i].theta_offset == chain.dh[i].theta_offset);
    CHECK(back.joint_limits[i] == chain.joint_limits[i]);
  }
  CHECK((back.tool.matrix() - chain.tool.matrix()).norm() == 0.0);

  SECTION("wrong row count is rejected") {
    nlohmann::json j = chain_to_json(chain);
    j["dh"].erase(5);
    CHECK_THROWS_AS(chain_from_json(j), std::invalid_argument);
  }
  SECTION("inverted limits are rejected") {
    nlohmann::json j = chain_to_json(chain);
    j["joint_limits"][0] = {1.0, -1.0};
    CHECK_THROWS_AS(chain_from_json(j), std::invalid_argument);
  }
}
