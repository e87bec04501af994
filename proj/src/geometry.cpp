#include "flownorm/geometry.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace flownorm {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return "missing-file";
    case ErrorKind::MalformedLine: return "malformed-line";
    case ErrorKind::EmptyAssociation: return "empty-association";
    case ErrorKind::TooSmallImage: return "too-small-image";
    case ErrorKind::TooFewPoints: return "too-few-points";
    case ErrorKind::DegenerateSystem: return "degenerate-system";
    case ErrorKind::MissingDepth: return "missing-depth";
    case ErrorKind::EmptyCalibration: return "empty-calibration";
    case ErrorKind::InsufficientOverlap: return "insufficient-overlap";
    case ErrorKind::InvalidConfig: return "invalid-config";
    case ErrorKind::NonConvergence: return "non-convergence";
    case ErrorKind::Internal: return "internal";
  }
  return "internal";
}

CameraIntrinsics CameraIntrinsics::scaled_for_level(int level) const {
  CameraIntrinsics out = *this;
  for (int l = 0; l < level; ++l) {
    out.fx *= 0.5;
    out.fy *= 0.5;
    out.cx = (out.cx + 0.5) * 0.5 - 0.5;
    out.cy = (out.cy + 0.5) * 0.5 - 0.5;
    out.width /= 2;
    out.height /= 2;
  }
  return out;
}

CameraIntrinsics load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::MissingFile, "cannot open calibration file: " + path);
  CameraIntrinsics k;
  std::string line;
  std::getline(in, line);
  std::istringstream ss(line);
  if (!(ss >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height) || !k.valid()) {
    throw Error(ErrorKind::MalformedLine, "bad calibration line in " + path + ": \"" + line + "\"");
  }
  return k;
}

namespace {

Mat33 skew(const Vec3& v) {
  Mat33 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

}  // namespace

SE3Pose SE3Pose::exp(const Vec6& delta) {
  const Vec3 rho = delta.head<3>();
  const Vec3 omega = delta.tail<3>();
  const double theta_sq = omega.squaredNorm();
  const double theta = std::sqrt(theta_sq);

  Eigen::Quaterniond q;
  Mat33 v_matrix;
  const Mat33 omega_hat = skew(omega);
  if (theta < 1e-8) {
    // Taylor expansions around theta = 0.
    q = Eigen::Quaterniond(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    q.normalize();
    v_matrix = Mat33::Identity() + 0.5 * omega_hat + (1.0 / 6.0) * omega_hat * omega_hat;
  } else {
    const double half = 0.5 * theta;
    const double s = std::sin(half) / theta;
    q = Eigen::Quaterniond(std::cos(half), s * omega.x(), s * omega.y(), s * omega.z());
    const double a = (1.0 - std::cos(theta)) / theta_sq;
    const double b = (theta - std::sin(theta)) / (theta_sq * theta);
    v_matrix = Mat33::Identity() + a * omega_hat + b * omega_hat * omega_hat;
  }
  return SE3Pose(q, v_matrix * rho);
}

Vec6 SE3Pose::log() const {
  Eigen::Quaterniond q = rotation_;
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double sin_half = q.vec().norm();
  const double cos_half = q.w();

  Vec3 omega;
  if (sin_half < 1e-10) {
    omega = 2.0 * q.vec();
  } else {
    const double theta = 2.0 * std::atan2(sin_half, cos_half);
    omega = (theta / sin_half) * q.vec();
  }

  const double theta_sq = omega.squaredNorm();
  const double theta = std::sqrt(theta_sq);
  const Mat33 omega_hat = skew(omega);
  Mat33 v_inv;
  if (theta < 1e-8) {
    v_inv = Mat33::Identity() - 0.5 * omega_hat + (1.0 / 12.0) * omega_hat * omega_hat;
  } else {
    const double half = 0.5 * theta;
    const double cot_term = (1.0 - half * std::cos(half) / std::sin(half)) / theta_sq;
    v_inv = Mat33::Identity() - 0.5 * omega_hat + cot_term * omega_hat * omega_hat;
  }

  Vec6 delta;
  delta.head<3>() = v_inv * translation_;
  delta.tail<3>() = omega;
  return delta;
}

SE3Pose retract(const SE3Pose& pose, const Vec6& delta) {
  return SE3Pose::exp(delta) * pose;
}

Projection project(const Vec2& pixel, const SE3Pose& pose, double inverse_depth,
                   const CameraIntrinsics& intrinsics) {
  Projection out;
  if (inverse_depth <= 0.0) return out;

  const Vec3 ray((pixel.x() - intrinsics.cx) / intrinsics.fx,
                 (pixel.y() - intrinsics.cy) / intrinsics.fy, 1.0);
  const Vec3 transformed = pose.apply(ray / inverse_depth);
  out.depth = transformed.z();
  if (transformed.z() < kDepthFloor) return out;

  const double inv_z = 1.0 / transformed.z();
  out.pixel.x() = intrinsics.fx * transformed.x() * inv_z + intrinsics.cx;
  out.pixel.y() = intrinsics.fy * transformed.y() * inv_z + intrinsics.cy;

  out.valid = out.pixel.x() >= kProjectionMargin &&
              out.pixel.x() <= intrinsics.width - 1 - kProjectionMargin &&
              out.pixel.y() >= kProjectionMargin &&
              out.pixel.y() <= intrinsics.height - 1 - kProjectionMargin;
  return out;
}

ProjectionJacobian projection_jacobian(const Vec2& pixel, const SE3Pose& pose,
                                       double inverse_depth,
                                       const CameraIntrinsics& intrinsics) {
  const Projection proj = project(pixel, pose, inverse_depth, intrinsics);
  if (!proj.valid) {
    throw Error(ErrorKind::DegenerateSystem,
                "projection_jacobian requested at an invalid configuration");
  }

  const Vec3 ray((pixel.x() - intrinsics.cx) / intrinsics.fx,
                 (pixel.y() - intrinsics.cy) / intrinsics.fy, 1.0);
  const Vec3 transformed = pose.apply(ray / inverse_depth);

  const double inv_z = 1.0 / transformed.z();
  Mat23 proj_jac;
  proj_jac << intrinsics.fx * inv_z, 0.0, -intrinsics.fx * transformed.x() * inv_z * inv_z,
              0.0, intrinsics.fy * inv_z, -intrinsics.fy * transformed.y() * inv_z * inv_z;

  ProjectionJacobian out;
  // Left perturbation: d(exp(delta) X')/d delta = [I | -X'^] at delta = 0,
  // so the Jacobian depends only on the transformed point.
  out.pose.block<2, 3>(0, 0) = proj_jac;
  out.pose.block<2, 3>(0, 3) = -proj_jac * skew(transformed);
  // X' = (1/id) R ray + t  =>  dX'/d id = -(1/id^2) R ray.
  const Vec3 rotated_ray = pose.rotation() * ray;
  out.inverse_depth = proj_jac * (-rotated_ray / (inverse_depth * inverse_depth));
  out.valid = true;
  return out;
}

}  // namespace flownorm
