#pragma once

// SE(3)/SO(3)/se(3) primitives: rigid transforms, twists, the hat/vee maps,
// the Frobenius projection onto se(3), and axis-angle rotations.
//
// Twist ordering is (omega, v) -- angular first -- everywhere in this project.
// The weight matrix Q = diag(2,2,2,1,1,1) pairs the Frobenius inner product on
// se(3) matrices with the vector form: ||hat(xi)||_F^2 = xi^T Q xi, the factor
// 2 coming from ||[w]_x||_F^2 = 2||w||^2.

#include <array>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

namespace lyap_reach {

using Vector3d = Eigen::Vector3d;
using Matrix3d = Eigen::Matrix3d;
using Matrix4d = Eigen::Matrix4d;
using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

inline constexpr double kRotationConstructTol = 1e-9;
inline constexpr double kVeeSkewTol = 1e-6;

// ---------------------------------------------------------------------------
// Pose
// ---------------------------------------------------------------------------

struct Pose {
  Matrix3d R = Matrix3d::Identity();
  Vector3d t = Vector3d::Zero();

  Matrix4d matrix() const {
    Matrix4d T = Matrix4d::Identity();
    T.topLeftCorner<3, 3>() = R;
    T.topRightCorner<3, 1>() = t;
    return T;
  }

  static Pose from_matrix(const Matrix4d& T) { return Pose{T.topLeftCorner<3, 3>(), T.topRightCorner<3, 1>()}; }
};

inline double rotation_defect(const Matrix3d& R) {
  return (R.transpose() * R - Matrix3d::Identity()).norm();
}

inline bool pose_is_valid(const Pose& p, double tol = kRotationConstructTol) {
  return rotation_defect(p.R) < tol && std::abs(p.R.determinant() - 1.0) < tol;
}

// Nearest rotation in Frobenius norm (polar decomposition via SVD). Used to
// heal accumulated drift on long integrations.
inline Matrix3d orthonormalized(const Matrix3d& R) {
  Eigen::JacobiSVD<Matrix3d> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d U = svd.matrixU(), V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) U.col(2) = -U.col(2);
  return U * V.transpose();
}

// Row-major 12-number serialization (9 rotation entries + 3 translation),
// shared by the scene and trajectory file formats.
inline std::array<double, 12> pose_to_array(const Pose& p) {
  std::array<double, 12> a{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a[static_cast<std::size_t>(3 * r + c)] = p.R(r, c);
  for (int r = 0; r < 3; ++r) a[static_cast<std::size_t>(9 + r)] = p.t(r);
  return a;
}

inline Pose pose_from_array(const std::array<double, 12>& a) {
  Pose p;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.R(r, c) = a[static_cast<std::size_t>(3 * r + c)];
  for (int r = 0; r < 3; ++r) p.t(r) = a[static_cast<std::size_t>(9 + r)];
  if (!pose_is_valid(p)) throw std::invalid_argument("pose_from_array: rotation block is not orthonormal");
  return p;
}

// ---------------------------------------------------------------------------
// Twists and the hat/vee pair
// ---------------------------------------------------------------------------

struct Twist {
  Vector3d omega = Vector3d::Zero();
  Vector3d v = Vector3d::Zero();

  Vector6d vector() const {
    Vector6d x;
    x << omega, v;
    return x;
  }
  static Twist from_vector(const Vector6d& x) { return Twist{x.head<3>(), x.tail<3>()}; }
};

inline Matrix3d skew(const Vector3d& w) {
  Matrix3d S;
  S << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return S;
}

inline Matrix4d hat(const Twist& xi) {
  Matrix4d X = Matrix4d::Zero();
  X.topLeftCorner<3, 3>() = skew(xi.omega);
  X.topRightCorner<3, 1>() = xi.v;
  return X;
}

inline Matrix4d hat(const Vector6d& xi) { return hat(Twist::from_vector(xi)); }

// Inverse of hat. Rejects matrices whose rotation block is visibly non-skew:
// that means the caller forgot to project.
inline Twist vee(const Matrix4d& X) {
  const Matrix3d B = X.topLeftCorner<3, 3>();
  if ((B + B.transpose()).norm() > kVeeSkewTol)
    throw std::invalid_argument("vee: top-left block deviates from skew-symmetry");
  Twist xi;
  xi.omega = Vector3d(B(2, 1), B(0, 2), B(1, 0));
  xi.v = X.topRightCorner<3, 1>();
  return xi;
}

inline Vector6d vee_vector(const Matrix4d& X) { return vee(X).vector(); }

// Frobenius-nearest projection of an arbitrary 4x4 matrix onto se(3):
// skew-symmetrize the rotation block, keep the translation column, zero the
// bottom row. Each piece is the unique nearest point in its subspace.
inline Matrix4d proj_se3(const Matrix4d& A) {
  Matrix4d P = Matrix4d::Zero();
  const Matrix3d B = A.topLeftCorner<3, 3>();
  P.topLeftCorner<3, 3>() = 0.5 * (B - B.transpose());
  P.topRightCorner<3, 1>() = A.topRightCorner<3, 1>();
  return P;
}

// ---------------------------------------------------------------------------
// Rotations about an axis
// ---------------------------------------------------------------------------

inline Matrix3d rot_about_axis(const Vector3d& axis, double angle) {
  if (std::abs(axis.norm() - 1.0) > kRotationConstructTol)
    throw std::invalid_argument("rot_about_axis: axis must be unit length");
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

inline Matrix3d rot_x(double a) { return rot_about_axis(Vector3d::UnitX(), a); }
inline Matrix3d rot_y(double a) { return rot_about_axis(Vector3d::UnitY(), a); }
inline Matrix3d rot_z(double a) { return rot_about_axis(Vector3d::UnitZ(), a); }

// ---------------------------------------------------------------------------
// The pairing weight
// ---------------------------------------------------------------------------

inline const Matrix6d& q_weight() {
  static const Matrix6d Q = [] {
    Vector6d d;
    d << 2, 2, 2, 1, 1, 1;
    return Matrix6d(d.asDiagonal());
  }();
  return Q;
}

}  // namespace lyap_reach
