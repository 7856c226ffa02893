#pragma once

#include <optional>
#include <random>
#include <string_view>
#include <utility>

#include <Eigen/Core>

#include "compose3d/denoiser.hpp"
#include "compose3d/scene.hpp"

namespace compose3d {

using Mat4 = Eigen::Matrix4d;

/// Camera-to-world matrix with columns (right, up, back, eye). The camera
/// looks down its local -z axis.
Mat4 look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitY());

/// Orbit camera around `target`. Azimuth 0 places the eye on +z of the
/// target; positive elevation lifts it towards +y.
struct CameraPose {
  double azimuth = 0.0;
  double elevation = 0.0;
  double radius = 3.0;
  Vec3 target = Vec3::Zero();
  double fov_y = 1.0471975511965976;  // 60 degrees

  Vec3 eye() const;
  Mat4 camera_to_world() const;
  /// Throws ConfigError when radius, elevation or fov are out of range.
  void validate() const;
};

struct PoseSamplerConfig {
  std::pair<double, double> azimuth{0.0, 6.283185307179586};
  std::pair<double, double> elevation{-0.17453292519943295, 1.0471975511965976};
  std::pair<double, double> radius{3.0, 3.0};
  double fov_y = 1.0471975511965976;

  void validate() const;
};

struct SampledPose {
  CameraPose pose;
  std::optional<int> focused_box;
};

/// Object-centric pose sampling. Box i is focused with its sample_prob;
/// otherwise the camera aims at the origin.
SampledPose sample_pose(const PoseSamplerConfig& config, const SceneLayout& layout,
                        std::mt19937_64& rng);

struct ViewBinThresholds {
  double overhead_elevation = 1.0471975511965976;  // 60 degrees
  double front_half_width = 0.7853981633974483;    // 45 degrees
};

/// Wraps an angle to [-pi, pi).
double wrap_angle(double radians);

ViewBin view_bin(const CameraPose& pose, const ViewBinThresholds& thresholds = {});

}  // namespace compose3d
