#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "anchorreg/errors.hpp"

namespace anchorreg {

// 3x3 rotation; every public constructor path enforces orthonormality and
// det = +1, so downstream code can rely on the invariant.
class Rotation {
 public:
  Rotation() : m_(Eigen::Matrix3d::Identity()) {}

  static bool is_valid(const Eigen::Matrix3d& m, double tol = 1e-9) {
    return (m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(m.determinant() - 1.0) <= tol;
  }

  static Rotation from_matrix(const Eigen::Matrix3d& m, double tol = 1e-9) {
    if (!is_valid(m, tol)) {
      throw NumericalError("Rotation::from_matrix: orthonormality or determinant check failed");
    }
    return Rotation(m);
  }

  // Nearest rotation in the Frobenius norm: SVD with determinant correction.
  static Rotation project(const Eigen::Matrix3d& m) {
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Matrix3d& u = svd.matrixU();
    const Eigen::Matrix3d& v = svd.matrixV();
    Eigen::Vector3d d(1.0, 1.0, (u * v.transpose()).determinant() < 0.0 ? -1.0 : 1.0);
    return Rotation(u * d.asDiagonal() * v.transpose());
  }

  static Rotation about_axis(const Eigen::Vector3d& axis, double angle_rad) {
    const double n = axis.norm();
    if (n <= 1e-12) throw DegenerateInput("Rotation::about_axis: zero axis");
    return Rotation(Eigen::AngleAxisd(angle_rad, axis / n).toRotationMatrix());
  }

  static Rotation from_quaternion(const Eigen::Quaterniond& q) {
    const double n = q.norm();
    if (n <= 1e-12) throw DegenerateInput("Rotation::from_quaternion: zero quaternion");
    Eigen::Quaterniond qn = q;
    qn.coeffs() /= n;
    return Rotation(qn.toRotationMatrix());
  }

  const Eigen::Matrix3d& matrix() const { return m_; }

  Rotation inverse() const { return Rotation(m_.transpose()); }

  Eigen::Vector3d operator*(const Eigen::Vector3d& v) const { return m_ * v; }

  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }

  // Canonical sign: nonnegative w component.
  Eigen::Quaterniond quaternion() const {
    Eigen::Quaterniond q(m_);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    return q;
  }

 private:
  explicit Rotation(const Eigen::Matrix3d& m) : m_(m) {}
  Eigen::Matrix3d m_;
};

// Rigid transform x -> R x + t.
class Pose {
 public:
  Pose() = default;
  Pose(const Rotation& r, const Eigen::Vector3d& t) : r_(r), t_(t) {}

  static Pose identity() { return {}; }

  const Rotation& rotation() const { return r_; }
  const Eigen::Vector3d& translation() const { return t_; }

  Eigen::Vector3d operator*(const Eigen::Vector3d& p) const { return r_ * p + t_; }

  Pose operator*(const Pose& o) const { return Pose(r_ * o.r_, r_ * o.t_ + t_); }

  Pose inverse() const {
    const Rotation rt = r_.inverse();
    return Pose(rt, -(rt * t_));
  }

 private:
  Rotation r_;
  Eigen::Vector3d t_ = Eigen::Vector3d::Zero();
};

// Pose increment: 6D rotation parameterization (first two matrix columns)
// plus a translation. Default value encodes the identity.
struct PoseDelta6D {
  Eigen::Matrix<double, 6, 1> rot6d =
      (Eigen::Matrix<double, 6, 1>() << 1, 0, 0, 0, 1, 0).finished();
  Eigen::Vector3d trans = Eigen::Vector3d::Zero();

  static PoseDelta6D identity() { return {}; }
};

// Gram-Schmidt decoding of the 6D rotation parameterization. The two
// 3-vectors become the first two columns; the third is their cross product.
inline Rotation decode_6d(const Eigen::Matrix<double, 6, 1>& rot6d, double tol = 1e-12) {
  const Eigen::Vector3d a1 = rot6d.head<3>();
  const Eigen::Vector3d a2 = rot6d.tail<3>();
  const double n1 = a1.norm();
  if (n1 <= tol) throw DegenerateInput("decode_6d: first column norm below tolerance");
  const Eigen::Vector3d b1 = a1 / n1;
  const Eigen::Vector3d u2 = a2 - b1.dot(a2) * b1;
  const double n2 = u2.norm();
  if (n2 <= tol) throw DegenerateInput("decode_6d: columns parallel within tolerance");
  const Eigen::Vector3d b2 = u2 / n2;
  Eigen::Matrix3d m;
  m.col(0) = b1;
  m.col(1) = b2;
  m.col(2) = b1.cross(b2);
  return Rotation::from_matrix(m);
}

// First two columns of the rotation matrix; decode_6d(encode_6d(R)) == R.
inline Eigen::Matrix<double, 6, 1> encode_6d(const Rotation& r) {
  Eigen::Matrix<double, 6, 1> v;
  v.head<3>() = r.matrix().col(0);
  v.tail<3>() = r.matrix().col(1);
  return v;
}

inline Pose exp_delta(const PoseDelta6D& delta) {
  return Pose(decode_6d(delta.rot6d), delta.trans);
}

// Right-composition retraction: pose . Exp(delta).
inline Pose retract(const Pose& pose, const PoseDelta6D& delta) {
  return pose * exp_delta(delta);
}

// Geodesic rotation distance in degrees. The cosine argument is clamped to
// [-1, 1]; arguments beyond round-off outside that range mean the inputs were
// not rotations.
inline double angular_error_deg(const Rotation& a, const Rotation& b) {
  const Eigen::Matrix3d e = a.matrix().transpose() * b.matrix();
  double c = (e.trace() - 1.0) / 2.0;
  if (c > 1.0 + 1e-6 || c < -1.0 - 1e-6) {
    throw NumericalError("angular_error_deg: cosine argument outside [-1, 1] beyond round-off");
  }
  c = std::clamp(c, -1.0, 1.0);
  double theta;
  if (c > 0.99) {
    // acos loses half the significant digits near zero; the chord length
    // ||E - I||_F = 2 sqrt(2) sin(theta / 2) evaluates the same angle stably.
    const double chord = (e - Eigen::Matrix3d::Identity()).norm();
    theta = 2.0 * std::asin(std::min(1.0, chord / (2.0 * std::numbers::sqrt2)));
  } else {
    theta = std::acos(c);
  }
  return theta * 180.0 / std::numbers::pi;
}

// Euclidean distance between translations, reported in centimetres.
inline double translation_error_cm(const Pose& a, const Pose& b) {
  return (a.translation() - b.translation()).norm() * 100.0;
}

}  // namespace anchorreg
