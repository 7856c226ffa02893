#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "compose3d/camera.hpp"
#include "compose3d/composition.hpp"
#include "compose3d/image.hpp"
#include "compose3d/scene.hpp"
#include "compose3d/voxel_grid.hpp"

namespace compose3d {

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length
  double t_near;
  double t_far;
};

/// Primary ray through the center of pixel (px, py); row 0 is the top.
/// Direction is unit length, t range [0, inf).
Ray camera_ray(const CameraPose& pose, int width, int height, int px, int py);

enum class Precision { f64, f32 };

struct RenderOptions {
  int width = 64;
  int height = 64;
  /// World-space march step. Samples sit at interval midpoints starting from
  /// the grid entry point; the last interval is shortened to end exactly at
  /// the exit point.
  double step_size = 0.125;
  Vec3 background = Vec3::Zero();
  Activation activation{};
  /// f32 runs the per-ray march in single precision. Gradients are always
  /// accumulated in double.
  Precision precision = Precision::f64;
  /// Stop marching once transmittance drops below 1e-5.
  bool early_termination = false;
  /// Seeded per-ray offset of the first sample, disabled when nullopt.
  std::optional<std::uint64_t> jitter_seed;
  /// 0 picks the hardware concurrency. Results do not depend on this.
  int threads = 0;
};

struct RenderOutput {
  ImageTensor rgb;      // H x W x 3
  ImageTensor depth;    // H x W x 1, expected termination distance
  ImageTensor opacity;  // H x W x 1
};

RenderOutput render(const VoxelGrid& grid, const CameraPose& pose,
                    const RenderOptions& options);

/// Emptiness regularizer attached to a backward pass. Only samples whose
/// position lies outside every layout box contribute.
struct EmptinessTerm {
  const SceneLayout* layout = nullptr;
  double sharpness = 10.0;
  double weight = 1.0;
};

struct BackwardResult {
  double emptiness_loss = 0.0;
  std::size_t outside_samples = 0;
};

/// Adjoint of `render` with respect to the grid parameters for an incoming
/// rgb adjoint `d_rgb`, accumulated into `grad`. When `emptiness` is given
/// its loss gradient, scaled by emptiness->weight, is added as well. The
/// accumulation order is fixed, so results are independent of thread count.
BackwardResult render_backward(const VoxelGrid& grid, const CameraPose& pose,
                               const RenderOptions& options, const ImageTensor& d_rgb,
                               GridGradient& grad,
                               const EmptinessTerm* emptiness = nullptr);

/// Compositing weights T_k * a_k of every sample outside all layout boxes,
/// in pixel then sample order.
std::vector<double> outside_box_weights(const VoxelGrid& grid, const CameraPose& pose,
                                        const RenderOptions& options,
                                        const SceneLayout& layout);

struct EmptinessValue {
  double loss = 0.0;
  std::vector<double> d_weights;
};

/// mean_k log(1 + k * w_k); zero when there are no samples.
EmptinessValue emptiness_loss(std::span<const double> weights, double sharpness);

/// Per-pixel label of the nearest box hit (smallest entry distance, ties to
/// the earlier box), or layout.background_prompt when nothing is hit.
SemanticMask rasterize_boxes(const SceneLayout& layout, const CameraPose& pose, int width,
                             int height);

/// 8-bit depth visualization: min-max over pixels with opacity > 0.5, near
/// maps to 255, far to 0, transparent pixels to 0. A constant depth maps to
/// 255.
ImageTensor write_depth_image(const ImageTensor& depth, const ImageTensor& opacity);

}  // namespace compose3d
