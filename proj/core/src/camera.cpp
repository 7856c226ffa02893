#include "compose3d/camera.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "compose3d/errors.hpp"

namespace compose3d {

Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 view = target - eye;
  if (!(view.norm() > 1e-12)) throw ConfigError("camera", "eye and target coincide");
  const Vec3 forward = view.normalized();
  const Vec3 side = forward.cross(up);
  if (!(side.norm() > 1e-9 * up.norm()) || !(up.norm() > 0.0)) {
    throw ConfigError("camera", "up vector is parallel to the view direction");
  }
  const Vec3 right = side.normalized();
  const Vec3 true_up = right.cross(forward);
  Mat4 m = Mat4::Identity();
  m.block<3, 1>(0, 0) = right;
  m.block<3, 1>(0, 1) = true_up;
  m.block<3, 1>(0, 2) = -forward;
  m.block<3, 1>(0, 3) = eye;
  return m;
}

Vec3 CameraPose::eye() const {
  const double ce = std::cos(elevation);
  return target +
         radius * Vec3(ce * std::sin(azimuth), std::sin(elevation), ce * std::cos(azimuth));
}

Mat4 CameraPose::camera_to_world() const {
  validate();
  return look_at(eye(), target, Vec3::UnitY());
}

void CameraPose::validate() const {
  if (!(radius > 0.0) || !std::isfinite(radius)) throw ConfigError("radius", "must be positive");
  if (!(std::abs(elevation) < std::numbers::pi / 2)) {
    throw ConfigError("elevation", "must lie strictly inside (-90, 90) degrees");
  }
  if (!(fov_y > 0.0 && fov_y < std::numbers::pi)) {
    throw ConfigError("fov", "must lie in (0, 180) degrees");
  }
  if (!std::isfinite(azimuth) || !target.allFinite()) {
    throw ConfigError("camera", "pose must be finite");
  }
}

void PoseSamplerConfig::validate() const {
  if (!(azimuth.first <= azimuth.second)) throw ConfigError("camera.azimuth", "empty range");
  if (!(elevation.first <= elevation.second)) {
    throw ConfigError("camera.elevation", "empty range");
  }
  if (!(elevation.first > -std::numbers::pi / 2 && elevation.second < std::numbers::pi / 2)) {
    throw ConfigError("camera.elevation", "must lie strictly inside (-90, 90) degrees");
  }
  if (!(radius.first > 0.0 && radius.first <= radius.second)) {
    throw ConfigError("camera.radius", "range must be positive and non-empty");
  }
  if (!(fov_y > 0.0 && fov_y < std::numbers::pi)) {
    throw ConfigError("camera.fov", "must lie in (0, 180) degrees");
  }
}

namespace {

double uniform_in(std::mt19937_64& rng, std::pair<double, double> range) {
  const double u = std::generate_canonical<double, 53>(rng);
  return range.first + u * (range.second - range.first);
}

}  // namespace

SampledPose sample_pose(const PoseSamplerConfig& config, const SceneLayout& layout,
                        std::mt19937_64& rng) {
  SampledPose out;
  const double u = std::generate_canonical<double, 53>(rng);
  double cumulative = 0.0;
  for (std::size_t i = 0; i < layout.boxes.size(); ++i) {
    const double p = layout.boxes[i].sample_prob;
    if (p > 0.0 && u >= cumulative && u < cumulative + p) {
      out.focused_box = static_cast<int>(i);
      out.pose.target = layout.boxes[i].center();
      break;
    }
    cumulative += p;
  }
  out.pose.azimuth = uniform_in(rng, config.azimuth);
  out.pose.elevation = uniform_in(rng, config.elevation);
  out.pose.radius = uniform_in(rng, config.radius);
  out.pose.fov_y = config.fov_y;
  return out;
}

double wrap_angle(double radians) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(radians + std::numbers::pi, two_pi);
  if (a < 0.0) a += two_pi;
  a -= std::numbers::pi;
  if (a >= std::numbers::pi) a -= two_pi;
  return a;
}

ViewBin view_bin(const CameraPose& pose, const ViewBinThresholds& thresholds) {
  if (pose.elevation > thresholds.overhead_elevation) return ViewBin::overhead;
  const double az = wrap_angle(pose.azimuth);
  const double q = thresholds.front_half_width;
  if (az >= -q && az < q) return ViewBin::front;
  if (az >= std::numbers::pi - q || az < -std::numbers::pi + q) return ViewBin::backside;
  return ViewBin::side;
}

}  // namespace compose3d
