#include "amodal/occlusion/camera.hpp"

#include <cmath>

#include <fmt/format.h>

#include "amodal/error.hpp"

namespace amodal {

namespace {

double number_field(const nlohmann::json& j, const char* name) {
  if (!j.contains(name) || !j.at(name).is_number()) {
    throw Error(ErrorCode::Schema, fmt::format("missing or non-numeric field '{}'", name));
  }
  const double v = j.at(name).get<double>();
  if (!std::isfinite(v)) throw Error(ErrorCode::Schema, fmt::format("field '{}' is not finite", name));
  return v;
}

std::vector<double> number_array(const nlohmann::json& j, const char* name, std::size_t size) {
  if (!j.contains(name) || !j.at(name).is_array() || j.at(name).size() != size) {
    throw Error(ErrorCode::Schema, fmt::format("field '{}' must be an array of {} numbers", name, size));
  }
  std::vector<double> out;
  for (const auto& v : j.at(name)) {
    if (!v.is_number()) throw Error(ErrorCode::Schema, fmt::format("field '{}' holds a non-number", name));
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

void PoseSE3::validate() const {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "pose has non-finite entries");
  }
  const double err = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (err > 1e-6) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("pose rotation is not orthonormal (error {:.3g})", err));
  }
}

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::InvalidArgument, "camera focal lengths must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw Error(ErrorCode::InvalidArgument, "camera centre is not finite");
  extrinsics.validate();
}

PoseSE3 pose_from_json(const nlohmann::json& j) {
  const auto r = number_array(j, "R", 9);
  const auto t = number_array(j, "t", 3);
  PoseSE3 pose;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) pose.rotation(i, k) = r[static_cast<std::size_t>(3 * i + k)];
    pose.translation(i) = t[static_cast<std::size_t>(i)];
  }
  pose.validate();
  return pose;
}

nlohmann::json to_json(const PoseSE3& pose) {
  nlohmann::json j;
  j["R"] = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) j["R"].push_back(pose.rotation(i, k));
  }
  j["t"] = {pose.translation(0), pose.translation(1), pose.translation(2)};
  return j;
}

CameraModel camera_from_json(const nlohmann::json& j) {
  CameraModel cam;
  cam.fx = number_field(j, "fx");
  cam.fy = number_field(j, "fy");
  cam.cx = number_field(j, "cx");
  cam.cy = number_field(j, "cy");
  cam.extrinsics = pose_from_json(j);
  cam.validate();
  return cam;
}

nlohmann::json to_json(const CameraModel& cam) {
  nlohmann::json j = to_json(cam.extrinsics);
  j["fx"] = cam.fx;
  j["fy"] = cam.fy;
  j["cx"] = cam.cx;
  j["cy"] = cam.cy;
  return j;
}

}  // namespace amodal
