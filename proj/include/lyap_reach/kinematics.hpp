#pragma once

// Forward kinematics and the body-frame geometric Jacobian for a 6-DoF serial
// arm in standard (distal) DH convention, plus singularity-safe inversion.
//
// Per-joint transform: A_i = RotZ(theta_i + offset_i) * TransZ(d_i)
//                          * TransX(a_i) * RotX(alpha_i).
// The Jacobian satisfies (omega, v)^T = J qdot expressed in the end-effector
// (body) frame, matching the controller's gradient pairing.

#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "geometry.hpp"

namespace lyap_reach {

struct DhRow {
  double a = 0.0;             // link length (m)
  double d = 0.0;             // link offset (m)
  double alpha = 0.0;         // link twist (rad)
  double theta_offset = 0.0;  // constant joint-angle offset (rad)
};

struct KinematicChain {
  std::array<DhRow, 6> dh{};
  std::array<std::array<double, 2>, 6> joint_limits{};  // {lo, hi} per joint
  Pose tool;                                            // flange -> end-effector

  KinematicChain() {
    for (auto& lim : joint_limits) lim = {-2.0 * M_PI, 2.0 * M_PI};
  }
};

inline bool joints_within_limits(const KinematicChain& chain, const Vector6d& q) {
  for (int i = 0; i < 6; ++i) {
    const auto& lim = chain.joint_limits[static_cast<std::size_t>(i)];
    if (q(i) < lim[0] || q(i) > lim[1]) return false;
  }
  return true;
}

inline void check_joint_limits(const KinematicChain& chain, const Vector6d& q) {
  for (int i = 0; i < 6; ++i) {
    const auto& lim = chain.joint_limits[static_cast<std::size_t>(i)];
    if (q(i) < lim[0] || q(i) > lim[1])
      throw std::out_of_range("joint " + std::to_string(i + 1) + " violates its limits");
  }
}

inline Matrix4d dh_transform(const DhRow& row, double theta) {
  const double ct = std::cos(theta + row.theta_offset);
  const double st = std::sin(theta + row.theta_offset);
  const double ca = std::cos(row.alpha);
  const double sa = std::sin(row.alpha);
  Matrix4d T;
  T << ct, -st * ca, st * sa, row.a * ct,
       st, ct * ca, -ct * sa, row.a * st,
       0, sa, ca, row.d,
       0, 0, 0, 1;
  return T;
}

// Frames needed by the Jacobian: world-frame joint axes z_{i-1} and origins
// p_{i-1}, plus the end-effector pose (tool included).
struct ChainFrames {
  Pose ee;
  std::array<Vector3d, 6> axis;
  std::array<Vector3d, 6> origin;
};

inline ChainFrames chain_frames(const KinematicChain& chain, const Vector6d& q) {
  check_joint_limits(chain, q);
  ChainFrames f;
  Matrix4d T = Matrix4d::Identity();
  for (int i = 0; i < 6; ++i) {
    f.axis[static_cast<std::size_t>(i)] = T.block<3, 1>(0, 2);
    f.origin[static_cast<std::size_t>(i)] = T.block<3, 1>(0, 3);
    T *= dh_transform(chain.dh[static_cast<std::size_t>(i)], q(i));
  }
  T *= chain.tool.matrix();
  f.ee = Pose::from_matrix(T);
  return f;
}

inline Pose forward_kinematics(const KinematicChain& chain, const Vector6d& q) {
  return chain_frames(chain, q).ee;
}

// Body Jacobian: column i is [R_H^T z_{i-1}; R_H^T (z_{i-1} x (p_H - p_{i-1}))],
// angular part first.
inline Matrix6d body_jacobian(const KinematicChain& chain, const Vector6d& q, Pose* ee_out = nullptr) {
  const ChainFrames f = chain_frames(chain, q);
  const Matrix3d Rt = f.ee.R.transpose();
  Matrix6d J;
  for (int i = 0; i < 6; ++i) {
    const Vector3d& z = f.axis[static_cast<std::size_t>(i)];
    const Vector3d& p = f.origin[static_cast<std::size_t>(i)];
    J.block<3, 1>(0, i) = Rt * z;
    J.block<3, 1>(3, i) = Rt * z.cross(f.ee.t - p);
  }
  if (ee_out) *ee_out = f.ee;
  return J;
}

// ---------------------------------------------------------------------------
// Jacobian inversion
// ---------------------------------------------------------------------------

inline constexpr double kSigmaTol = 1e-4;  // smallest singular value treated as safe
inline constexpr double kDamping = 0.01;   // damped least-squares lambda

struct JointVelocitySolution {
  Vector6d qdot = Vector6d::Zero();
  bool damped = false;      // true when the damped pseudo-inverse was used
  double sigma_min = 0.0;   // smallest singular value of J
};

// Exact solve away from singularities; damped least squares
// J^T (J J^T + lambda^2 I)^{-1} b when sigma_min drops below kSigmaTol.
// Both branches are evaluated through one SVD so the switch is bitwise
// reproducible.
inline JointVelocitySolution solve_joint_velocity(const Matrix6d& J, const Vector6d& body_twist) {
  Eigen::JacobiSVD<Matrix6d> svd(J, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector6d& s = svd.singularValues();
  JointVelocitySolution out;
  out.sigma_min = s(5);
  out.damped = out.sigma_min < kSigmaTol;
  Vector6d inv;
  for (int i = 0; i < 6; ++i)
    inv(i) = out.damped ? s(i) / (s(i) * s(i) + kDamping * kDamping) : 1.0 / s(i);
  out.qdot = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * body_twist;
  return out;
}

// ---------------------------------------------------------------------------
// Chain file format
// ---------------------------------------------------------------------------
//
// JSON: { "dh": 6 rows of [a, d, alpha, theta_offset],
//         "joint_limits": 6 rows of [lo, hi],
//         "tool": 12-number pose }

inline nlohmann::json chain_to_json(const KinematicChain& chain) {
  nlohmann::json j;
  for (const auto& r : chain.dh) j["dh"].push_back({r.a, r.d, r.alpha, r.theta_offset});
  for (const auto& lim : chain.joint_limits) j["joint_limits"].push_back({lim[0], lim[1]});
  j["tool"] = pose_to_array(chain.tool);
  return j;
}

inline KinematicChain chain_from_json(const nlohmann::json& j) {
  KinematicChain chain;
  if (!j.contains("dh") || j["dh"].size() != 6) throw std::invalid_argument("chain file: expected 6 dh rows");
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& r = j["dh"][i];
    chain.dh[i] = DhRow{r.at(0).get<double>(), r.at(1).get<double>(), r.at(2).get<double>(),
                        r.at(3).get<double>()};
  }
  if (j.contains("joint_limits")) {
    if (j["joint_limits"].size() != 6) throw std::invalid_argument("chain file: expected 6 joint_limits rows");
    for (std::size_t i = 0; i < 6; ++i) {
      chain.joint_limits[i] = {j["joint_limits"][i].at(0).get<double>(),
                               j["joint_limits"][i].at(1).get<double>()};
      if (!(chain.joint_limits[i][0] < chain.joint_limits[i][1]))
        throw std::invalid_argument("chain file: joint limit lo must be < hi");
    }
  }
  if (j.contains("tool")) {
    std::array<double, 12> a{};
    for (std::size_t i = 0; i < 12; ++i) a[i] = j["tool"].at(i).get<double>();
    chain.tool = pose_from_array(a);
  }
  return chain;
}

inline KinematicChain load_chain(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open chain file: " + path);
  nlohmann::json j;
  in >> j;
  return chain_from_json(j);
}

}  // namespace lyap_reach
