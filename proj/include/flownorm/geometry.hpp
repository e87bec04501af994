#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <string>

#include "flownorm/types.hpp"

namespace flownorm {

// Pinhole intrinsics. Pixel coordinates address pixel centers; (0,0) is the
// center of the top-left pixel.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && cx > 0.0 && cx < width && cy > 0.0 &&
           cy < height && width > 0 && height > 0;
  }

  // Intrinsics of pyramid level `level` (2x box-filter downsampling per
  // level). The half-pixel shifts keep pixel centers aligned across levels.
  CameraIntrinsics scaled_for_level(int level) const;
};

// Plain-text calibration file: one line "fx fy cx cy width height".
CameraIntrinsics load_calibration(const std::string& path);

// Rigid body transform. Stored as unit quaternion + translation.
class SE3Pose {
 public:
  SE3Pose() : rotation_(Eigen::Quaterniond::Identity()), translation_(Vec3::Zero()) {}
  SE3Pose(const Eigen::Quaterniond& rotation, const Vec3& translation)
      : rotation_(rotation.normalized()), translation_(translation) {}
  SE3Pose(const Mat33& rotation, const Vec3& translation)
      : rotation_(Eigen::Quaterniond(rotation).normalized()), translation_(translation) {}

  static SE3Pose identity() { return SE3Pose(); }

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat33 rotation_matrix() const { return rotation_.toRotationMatrix(); }

  Vec3 apply(const Vec3& point) const { return rotation_ * point + translation_; }

  SE3Pose inverse() const {
    Eigen::Quaterniond qi = rotation_.conjugate();
    return SE3Pose(qi, qi * (-translation_));
  }

  SE3Pose operator*(const SE3Pose& other) const {
    return SE3Pose(rotation_ * other.rotation_,
                   rotation_ * other.translation_ + translation_);
  }

  // Exponential map. delta = [rho; omega], translation part first.
  static SE3Pose exp(const Vec6& delta);

  // Logarithm, inverse of exp. Returns [rho; omega].
  Vec6 log() const;

 private:
  Eigen::Quaterniond rotation_;
  Vec3 translation_;
};

// Left-multiplicative retraction: exp(delta) * T.
SE3Pose retract(const SE3Pose& pose, const Vec6& delta);

struct Landmark {
  Vec2 pixel = Vec2::Zero();     // at the owning PointSet's source level
  double inverse_depth = 0.0;    // 1/meters, > 0
};

struct Projection {
  Vec2 pixel = Vec2::Zero();
  double depth = 0.0;  // depth of the transformed point in the target camera
  bool valid = false;
};

inline constexpr double kDepthFloor = 1e-6;       // meters
inline constexpr double kProjectionMargin = 2.0;  // pixels

// Projects pixel p (with inverse depth) through T into the target camera.
// Invalid when the transformed depth falls below kDepthFloor or the result
// lands within kProjectionMargin of the image border (or outside).
Projection project(const Vec2& pixel, const SE3Pose& pose, double inverse_depth,
                   const CameraIntrinsics& intrinsics);

struct ProjectionJacobian {
  Mat26 pose = Mat26::Zero();          // d(projected pixel) / d(se3 delta)
  Vec2 inverse_depth = Vec2::Zero();   // d(projected pixel) / d(inverse depth)
  bool valid = false;
};

// Analytic derivative of project() w.r.t. the left-multiplicative se(3)
// perturbation and the inverse depth. Throws on invalid configurations.
ProjectionJacobian projection_jacobian(const Vec2& pixel, const SE3Pose& pose,
                                       double inverse_depth,
                                       const CameraIntrinsics& intrinsics);

}  // namespace flownorm
