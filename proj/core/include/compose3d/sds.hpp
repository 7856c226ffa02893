#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "compose3d/camera.hpp"
#include "compose3d/composition.hpp"
#include "compose3d/denoiser.hpp"
#include "compose3d/diffusion.hpp"
#include "compose3d/renderer.hpp"
#include "compose3d/scene.hpp"
#include "compose3d/voxel_grid.hpp"

namespace compose3d {

enum class TimestepWeighting { constant_one, one_minus_alpha_bar };

/// How per-prompt estimates are combined into one noise estimate.
enum class CompositionMode {
  /// Masked by the rasterized box labels.
  local,
  /// Mask-free sum of guided differences over all prompts (baseline).
  global,
};

struct EmptinessSchedule {
  double sharpness = 10.0;
  double weight = 1e4;
  /// The weight is multiplied by ramp_factor from iteration
  /// ramp_at * iterations on.
  double ramp_factor = 10.0;
  double ramp_at = 0.5;

  double weight_at(int iteration, int iterations) const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

struct SdsConfig {
  int iterations = 10000;
  double learning_rate = 0.05;
  /// Scale for the single-prompt path. The masked path takes its scales from
  /// the PromptSet.
  double guidance = 100.0;
  /// Inclusive timestep range. Zero means "derive from the schedule" as
  /// [0.02 T, 0.98 T].
  int t_min = 0;
  int t_max = 0;
  TimestepWeighting weighting = TimestepWeighting::constant_one;
  EmptinessSchedule emptiness{};
  AdamConfig adam{};
  RenderOptions render{};
  /// Render at render.width x render.height, hand the denoiser an image
  /// downsampled by this factor.
  int downsample = 1;
  PoseSamplerConfig poses{};
  bool view_dependent = true;
  CompositionMode composition = CompositionMode::local;
  LabelZeroPolicy label_zero = LabelZeroPolicy::unconditional;
  std::uint64_t seed = 0;

  /// Resolves t_min/t_max against the schedule and checks ranges.
  void resolve(const VarianceSchedule& sched);
  void validate() const;
};

struct OptimizerState {
  GridGradient first_moment;
  GridGradient second_moment;
  long step = 0;

  OptimizerState() = default;
  explicit OptimizerState(const VoxelGrid& grid) : first_moment(grid), second_moment(grid) {}
};

/// One bias-corrected Adam step on every grid parameter.
void adam_update(VoxelGrid& grid, const GridGradient& grad, OptimizerState& state,
                 double learning_rate, const AdamConfig& adam = {});

/// Random inputs of one score distillation step.
struct SdsSample {
  SampledPose pose;
  int t = 1;
  ImageTensor eps;  // denoiser resolution, 3 channels
};

/// Draws pose, then t, then eps from `rng`, in that order.
SdsSample draw_sds_sample(const SdsConfig& config, const SceneLayout& layout,
                          std::mt19937_64& rng);

struct SdsDiagnostics {
  int t = 0;
  std::optional<int> focused_box;
  ViewBin view = ViewBin::none;
  double gradient_norm = 0.0;
  double emptiness_loss = 0.0;
};

double timestep_weight(TimestepWeighting weighting, const VarianceSchedule& sched, int t);

/// Conditions handed to the denoiser for this pose: prompts carry the view
/// bin when view-dependent prompting is on.
PromptSet view_adjusted(const PromptSet& prompts, const CameraPose& pose, bool view_dependent);

/// Masked score distillation gradient for a given sample, added into
/// `grad`: render, rasterize the boxes, diffuse with sample.eps, form the
/// per-region guided estimate and back-propagate w(t) (eps_hat - eps).
/// A positive emptiness_weight adds the emptiness regularizer.
SdsDiagnostics sds_gradient(const VoxelGrid& grid, const SceneLayout& layout,
                            const PromptSet& prompts, const Denoiser& denoiser,
                            const VarianceSchedule& sched, const SdsConfig& config,
                            const SdsSample& sample, GridGradient& grad,
                            double emptiness_weight = 0.0);

/// Unmasked single-prompt score distillation gradient for a given sample.
SdsDiagnostics sds_gradient_single_prompt(const VoxelGrid& grid, const ConditionId& prompt,
                                          const Denoiser& denoiser,
                                          const VarianceSchedule& sched,
                                          const SdsConfig& config, const SdsSample& sample,
                                          GridGradient& grad);

/// draw_sds_sample followed by sds_gradient. Throws NumericalError on a
/// non-finite gradient.
SdsDiagnostics sds_step(const VoxelGrid& grid, const SceneLayout& layout,
                        const PromptSet& prompts, const Denoiser& denoiser,
                        const VarianceSchedule& sched, const SdsConfig& config,
                        std::mt19937_64& rng, GridGradient& grad,
                        double emptiness_weight = 0.0);

struct GenerateHooks {
  /// Called after every iteration with its 1-based index.
  std::function<void(int, const SdsDiagnostics&)> on_iteration;
  /// Called with the iteration count at each checkpoint interval, at the
  /// end, and on abort.
  std::function<void(int, const VoxelGrid&)> on_checkpoint;
  int checkpoint_every = 500;
};

struct GenerateResult {
  VoxelGrid grid;
  std::vector<SdsDiagnostics> history;
};

VoxelGrid initial_grid(int resolution);

/// Full optimization loop starting from `grid`.
GenerateResult generate(VoxelGrid grid, const SceneLayout& layout, const PromptSet& prompts,
                        const Denoiser& denoiser, const VarianceSchedule& sched,
                        SdsConfig config, const GenerateHooks& hooks = {});

/// Progress line: iter=<i> t=<t> box=<index|none> view=<bin> grad_norm=<g>
/// emptiness=<e>
std::string progress_line(int iteration, const SdsDiagnostics& diag);

}  // namespace compose3d
