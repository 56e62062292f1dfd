#pragma once

#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

namespace amodal {

// Rigid transform x -> R x + t.
struct PoseSE3 {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static PoseSE3 identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  // (this * other)(x) = this(other(x))
  PoseSE3 compose(const PoseSE3& other) const {
    return {rotation * other.rotation, rotation * other.translation + translation};
  }

  PoseSE3 inverse() const {
    const Eigen::Matrix3d rt = rotation.transpose();
    return {rt, -rt * translation};
  }

  // Throws InvalidArgument unless the rotation is orthonormal within 1e-6.
  void validate() const;
};

// Pinhole intrinsics plus world -> camera extrinsics.
struct CameraModel {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  PoseSE3 extrinsics;

  void validate() const;
};

using PointCloud = std::vector<Eigen::Vector3d>;

PoseSE3 pose_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PoseSE3& pose);

// {fx, fy, cx, cy, R[9] row-major, t[3]}
CameraModel camera_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CameraModel& cam);

}  // namespace amodal
