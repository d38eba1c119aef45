#pragma once

// The exact full-state reaching controller:
//   - symmetry-aware control Lyapunov function
//       V(T_H) = 1/2 ||T_H - T_i T_G*||_F^2,
//     minimized over the target's symmetry rotations (translation part of the
//     correction is zero, so T_G* shares the target's translation),
//   - its se(3) gradient  grad V = proj_se3(T_H^T (T_H - T_G*)),
//   - the joint-velocity control u = -J^{-1} vee(grad V), which yields
//       dV/dt = -||grad V||_F^2,
//   - the first-order differential residual used as a training target,
//   - min-V multi-instance selection and the momentum filter.

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "geometry.hpp"
#include "kinematics.hpp"

namespace lyap_reach {

// ---------------------------------------------------------------------------
// Symmetry specifications
// ---------------------------------------------------------------------------

struct SymmetrySpec {
  enum class Kind { continuous_axis, discrete };

  Kind kind = Kind::discrete;
  Vector3d axis = Vector3d::UnitZ();     // body-frame axis (continuous_axis)
  std::vector<Matrix3d> elements = {Matrix3d::Identity()};  // discrete set

  static SymmetrySpec continuous(const Vector3d& axis) {
    if (std::abs(axis.norm() - 1.0) > kRotationConstructTol)
      throw std::invalid_argument("SymmetrySpec: axis must be unit length");
    SymmetrySpec s;
    s.kind = Kind::continuous_axis;
    s.axis = axis;
    return s;
  }

  static SymmetrySpec discrete_set(std::vector<Matrix3d> elems) {
    bool has_identity = false;
    for (const auto& E : elems) {
      if (rotation_defect(E) > kRotationConstructTol || std::abs(E.determinant() - 1.0) > kRotationConstructTol)
        throw std::invalid_argument("SymmetrySpec: discrete element is not a rotation");
      if ((E - Matrix3d::Identity()).norm() < kRotationConstructTol) has_identity = true;
    }
    if (!has_identity) throw std::invalid_argument("SymmetrySpec: discrete set must contain the identity");
    SymmetrySpec s;
    s.kind = Kind::discrete;
    s.elements = std::move(elems);
    return s;
  }

  static SymmetrySpec none() { return SymmetrySpec{}; }  // identity-only discrete set
};

struct TargetInstance {
  Pose goal;
  SymmetrySpec symmetry;
};

// ---------------------------------------------------------------------------
// Optimal symmetry rotation
// ---------------------------------------------------------------------------

struct SymmetryRotation {
  Matrix3d R = Matrix3d::Identity();  // R_G* in the target body frame
  double angle = 0.0;                 // continuous case
  std::size_t index = 0;              // discrete case
};

// Minimize ||R_H - R_i E||_F over the symmetry set. For a continuous axis this
// maximizes tr(R_a(phi)^T M) with M = R_i^T R_H, which with the Rodrigues form
// R_a(phi) = I + sin(phi) [a]_x + (1-cos(phi)) [a]_x^2 reduces to maximizing
//   p sin(phi) - r cos(phi),  p = -tr([a]_x M),  r = tr([a]_x^2 M),
// giving phi* = atan2(p, -r). For the z axis this is the familiar
// atan2(M10 - M01, M00 + M11). Discrete sets are enumerated; ties go to the
// lowest index.
inline SymmetryRotation optimal_symmetry_rotation(const Matrix3d& R_H, const Matrix3d& R_i,
                                                  const SymmetrySpec& sym) {
  SymmetryRotation out;
  const Matrix3d M = R_i.transpose() * R_H;
  if (sym.kind == SymmetrySpec::Kind::continuous_axis) {
    const Matrix3d A = skew(sym.axis);
    const double p = -(A * M).trace();
    const double r = (A * A * M).trace();
    out.angle = std::atan2(p, -r);
    out.R = rot_about_axis(sym.axis, out.angle);
    return out;
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < sym.elements.size(); ++k) {
    const double cost = (R_H - R_i * sym.elements[k]).squaredNorm();
    if (cost < best) {
      best = cost;
      out.index = k;
      out.R = sym.elements[k];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// cLf value and gradient
// ---------------------------------------------------------------------------

struct ClfResult {
  double V = 0.0;
  Pose T_G_star;  // optimal goal: target rotation corrected, target translation
};

inline ClfResult clf_value(const Pose& T_H, const TargetInstance& target) {
  const SymmetryRotation s = optimal_symmetry_rotation(T_H.R, target.goal.R, target.symmetry);
  ClfResult out;
  out.T_G_star.R = target.goal.R * s.R;
  out.T_G_star.t = target.goal.t;
  out.V = 0.5 * ((T_H.R - out.T_G_star.R).squaredNorm() + (T_H.t - out.T_G_star.t).squaredNorm());
  return out;
}

// grad V = proj_se3(T_H^T (T_H - T_G*)). By the envelope theorem the argmin's
// dependence on T_H contributes nothing, so the gradient treats T_G* as fixed.
inline Matrix4d clf_gradient(const Pose& T_H, const Pose& T_G_star) {
  const Matrix4d H = T_H.matrix();
  return proj_se3(H.transpose() * (H - T_G_star.matrix()));
}

// ---------------------------------------------------------------------------
// Velocity control
// ---------------------------------------------------------------------------

struct ControlOutput {
  double clf_value = 0.0;
  Vector6d u = Vector6d::Zero();
  Matrix4d grad = Matrix4d::Zero();
  Pose optimal_goal;
  bool damped = false;
  double sigma_min = 0.0;
};

inline ControlOutput velocity_control(const KinematicChain& chain, const Vector6d& q,
                                      const TargetInstance& target, double gain = 1.0) {
  if (gain <= 0.0) throw std::invalid_argument("velocity_control: gain must be positive");
  Pose T_H;
  const Matrix6d J = body_jacobian(chain, q, &T_H);
  const ClfResult c = clf_value(T_H, target);
  ControlOutput out;
  out.clf_value = c.V;
  out.optimal_goal = c.T_G_star;
  out.grad = clf_gradient(T_H, c.T_G_star);
  const JointVelocitySolution sol = solve_joint_velocity(J, vee_vector(out.grad));
  out.u = -gain * sol.qdot;
  out.damped = sol.damped;
  out.sigma_min = sol.sigma_min;
  return out;
}

// ---------------------------------------------------------------------------
// Differential residual
// ---------------------------------------------------------------------------

// First-order consistency residual in joint direction i:
//   r_i = e_i^T J^T Q J u + (V(q + dtheta e_i) - V(q)) / dtheta.
// For the exact controller and exact V, r_i -> 0 as dtheta -> 0.
template <typename ValueFn>
double differential_residual(const KinematicChain& chain, const Vector6d& q, const Vector6d& u,
                             ValueFn&& V_fn, double dtheta, int i) {
  if (dtheta == 0.0) throw std::invalid_argument("differential_residual: dtheta must be nonzero");
  if (i < 0 || i >= 6) throw std::out_of_range("differential_residual: joint index");
  const Matrix6d J = body_jacobian(chain, q);
  const double directional = (J.transpose() * q_weight() * J * u)(i);
  Vector6d qp = q;
  qp(i) += dtheta;
  return directional + (V_fn(qp) - V_fn(q)) / dtheta;
}

// ---------------------------------------------------------------------------
// Multi-instance selection and the momentum filter
// ---------------------------------------------------------------------------

inline std::size_t select_target(const std::vector<double>& clf_values) {
  if (clf_values.empty()) throw std::invalid_argument("select_target: empty list");
  std::size_t best = 0;
  for (std::size_t k = 1; k < clf_values.size(); ++k)
    if (clf_values[k] < clf_values[best]) best = k;
  return best;
}

struct MomentumState {
  Vector6d u_bar = Vector6d::Zero();
  double eta = 0.0;
};

// u_bar_t = eta * u_bar_{t-1} + (1 - eta) * u_hat_t
inline MomentumState momentum_step(const MomentumState& state, const Vector6d& u_hat) {
  if (state.eta < 0.0 || state.eta > 1.0) throw std::invalid_argument("momentum_step: eta must be in [0,1]");
  return MomentumState{state.eta * state.u_bar + (1.0 - state.eta) * u_hat, state.eta};
}

}  // namespace lyap_reach
