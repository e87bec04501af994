#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace flownorm {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat33 = Eigen::Matrix3d;
using Mat66 = Eigen::Matrix<double, 6, 6>;

// Stable error kinds. The CLI maps these onto exit codes, so the set and
// the kind strings are part of the external contract.
enum class ErrorKind {
  MissingFile,
  MalformedLine,
  EmptyAssociation,
  TooSmallImage,
  TooFewPoints,
  DegenerateSystem,
  MissingDepth,
  EmptyCalibration,
  InsufficientOverlap,
  InvalidConfig,
  NonConvergence,
  Internal,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace flownorm
