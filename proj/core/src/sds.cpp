#include "compose3d/sds.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <fmt/format.h>

#include "compose3d/errors.hpp"

namespace compose3d {

double EmptinessSchedule::weight_at(int iteration, int iterations) const {
  const double ramp_iteration = ramp_at * iterations;
  return iteration >= ramp_iteration ? weight * ramp_factor : weight;
}

void SdsConfig::resolve(const VarianceSchedule& sched) {
  const int steps = sched.steps();
  if (t_min == 0) t_min = std::max(1, static_cast<int>(std::lround(0.02 * steps)));
  if (t_max == 0) t_max = std::max(t_min, static_cast<int>(std::lround(0.98 * steps)));
  validate();
  if (t_max > steps) throw ConfigError("sds.t_range", "upper timestep exceeds T");
}

void SdsConfig::validate() const {
  if (iterations < 0) throw ConfigError("sds.iterations", "must not be negative");
  if (!(learning_rate > 0.0)) throw ConfigError("sds.learning_rate", "must be positive");
  if (!(guidance >= 0.0) || !std::isfinite(guidance)) {
    throw ConfigError("guidance", "must be finite and non-negative");
  }
  if (t_min < 1 || t_max < t_min) throw ConfigError("sds.t_range", "invalid timestep range");
  if (downsample < 1 || render.width % downsample != 0 || render.height % downsample != 0) {
    throw ConfigError("sds.downsample", "must be a positive divisor of the render size");
  }
  if (!(emptiness.sharpness > 0.0)) throw ConfigError("sds.emptiness.k", "must be positive");
  if (!(emptiness.weight >= 0.0)) throw ConfigError("sds.emptiness.weight", "must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("sds.adam", "betas must lie in [0, 1)");
  }
  poses.validate();
}

void adam_update(VoxelGrid& grid, const GridGradient& grad, OptimizerState& state,
                 double learning_rate, const AdamConfig& adam) {
  if (grad.density.size() != grid.density().size() || grad.color.size() != grid.color().size()) {
    throw DimensionError("adam_update: gradient does not match the grid");
  }
  if (state.first_moment.density.size() != grid.density().size()) {
    state = OptimizerState(grid);
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
  auto update = [&](std::vector<double>& param, const std::vector<double>& g,
                    std::vector<double>& m, std::vector<double>& v) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g[i];
      v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      param[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + adam.eps);
    }
  };
  update(grid.density(), grad.density, state.first_moment.density, state.second_moment.density);
  update(grid.color(), grad.color, state.first_moment.color, state.second_moment.color);
}

SdsSample draw_sds_sample(const SdsConfig& config, const SceneLayout& layout,
                          std::mt19937_64& rng) {
  SdsSample s;
  s.pose = sample_pose(config.poses, layout, rng);
  const double u = std::generate_canonical<double, 53>(rng);
  const int span = config.t_max - config.t_min + 1;
  s.t = std::min(config.t_max, config.t_min + static_cast<int>(u * span));
  s.eps = gaussian_image(config.render.height / config.downsample,
                         config.render.width / config.downsample, 3, rng);
  return s;
}

double timestep_weight(TimestepWeighting weighting, const VarianceSchedule& sched, int t) {
  switch (weighting) {
    case TimestepWeighting::constant_one: return 1.0;
    case TimestepWeighting::one_minus_alpha_bar: return 1.0 - sched.alpha_bar(t);
  }
  return 1.0;
}

PromptSet view_adjusted(const PromptSet& prompts, const CameraPose& pose, bool view_dependent) {
  PromptSet out = prompts;
  if (!view_dependent) return out;
  const ViewBin bin = view_bin(pose);
  for (auto& p : out.prompts) p.view = bin;
  for (auto& n : out.negations) {
    if (n && !n->is_unconditional()) n->view = bin;
  }
  return out;
}

namespace {

struct Diffused {
  ImageTensor x_t;
  int height;
  int width;
};

void check_sample(const SdsConfig& config, const SdsSample& sample) {
  const int h = config.render.height / config.downsample;
  const int w = config.render.width / config.downsample;
  if (sample.eps.height() != h || sample.eps.width() != w || sample.eps.channels() != 3) {
    throw DimensionError("sds: noise image does not match the denoiser resolution");
  }
}

/// d = w(t) (eps_hat - eps) lifted back to render resolution.
ImageTensor image_adjoint(const ImageTensor& eps_hat, const SdsSample& sample,
                          const VarianceSchedule& sched, const SdsConfig& config) {
  const double w = timestep_weight(config.weighting, sched, sample.t);
  ImageTensor d(eps_hat.height(), eps_hat.width(), eps_hat.channels());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = w * (eps_hat[i] - sample.eps[i]);
  return downsample_adjoint(d, config.downsample);
}

}  // namespace

SdsDiagnostics sds_gradient(const VoxelGrid& grid, const SceneLayout& layout,
                            const PromptSet& prompts, const Denoiser& denoiser,
                            const VarianceSchedule& sched, const SdsConfig& config,
                            const SdsSample& sample, GridGradient& grad,
                            double emptiness_weight) {
  check_sample(config, sample);
  const CameraPose& pose = sample.pose.pose;
  const RenderOutput rendered = render(grid, pose, config.render);
  const ImageTensor x = downsample(rendered.rgb, config.downsample);
  const ImageTensor x_t = forward_diffuse(x, sample.t, sample.eps, sched);
  const PromptSet conditioned = view_adjusted(prompts, pose, config.view_dependent);

  ImageTensor eps_hat;
  if (config.composition == CompositionMode::local) {
    const SemanticMask mask = rasterize_boxes(layout, pose, x.width(), x.height());
    LocalSamplerOptions local;
    local.label_zero = config.label_zero;
    eps_hat = locally_conditioned_estimate(denoiser, x_t, sample.t, mask, conditioned, local);
  } else {
    std::vector<ConditionId> conds{ConditionId::unconditional()};
    conds.insert(conds.end(), conditioned.prompts.begin(), conditioned.prompts.end());
    auto preds = denoiser.denoise_batch(x_t, sample.t, conds);
    std::vector<double> weights;
    for (int label = 1; label <= conditioned.size(); ++label) {
      weights.push_back(conditioned.scale(label));
    }
    eps_hat = compose_global(std::span(preds).subspan(1), preds[0], weights);
  }

  const ImageTensor d = image_adjoint(eps_hat, sample, sched, config);
  const EmptinessTerm emptiness{&layout, config.emptiness.sharpness, emptiness_weight};
  const BackwardResult back = render_backward(grid, pose, config.render, d, grad, &emptiness);

  SdsDiagnostics diag;
  diag.t = sample.t;
  diag.focused_box = sample.pose.focused_box;
  diag.view = config.view_dependent ? view_bin(pose) : ViewBin::none;
  diag.gradient_norm = grad.norm();
  diag.emptiness_loss = back.emptiness_loss;
  return diag;
}

SdsDiagnostics sds_gradient_single_prompt(const VoxelGrid& grid, const ConditionId& prompt,
                                          const Denoiser& denoiser,
                                          const VarianceSchedule& sched,
                                          const SdsConfig& config, const SdsSample& sample,
                                          GridGradient& grad) {
  check_sample(config, sample);
  const CameraPose& pose = sample.pose.pose;
  const RenderOutput rendered = render(grid, pose, config.render);
  const ImageTensor x = downsample(rendered.rgb, config.downsample);
  const ImageTensor x_t = forward_diffuse(x, sample.t, sample.eps, sched);
  ConditionId y = prompt;
  if (config.view_dependent) y.view = view_bin(pose);
  const ImageTensor eps_hat = cfg_predict(denoiser, x_t, sample.t, y, config.guidance);
  const ImageTensor d = image_adjoint(eps_hat, sample, sched, config);
  render_backward(grid, pose, config.render, d, grad);

  SdsDiagnostics diag;
  diag.t = sample.t;
  diag.focused_box = sample.pose.focused_box;
  diag.view = y.view;
  diag.gradient_norm = grad.norm();
  return diag;
}

SdsDiagnostics sds_step(const VoxelGrid& grid, const SceneLayout& layout,
                        const PromptSet& prompts, const Denoiser& denoiser,
                        const VarianceSchedule& sched, const SdsConfig& config,
                        std::mt19937_64& rng, GridGradient& grad, double emptiness_weight) {
  const SdsSample sample = draw_sds_sample(config, layout, rng);
  const SdsDiagnostics diag = sds_gradient(grid, layout, prompts, denoiser, sched, config,
                                           sample, grad, emptiness_weight);
  if (!grad.all_finite() || !std::isfinite(diag.emptiness_loss)) {
    throw NumericalError("non-finite gradient: " + progress_line(0, diag));
  }
  return diag;
}

VoxelGrid initial_grid(int resolution) { return VoxelGrid(resolution, -1.0, 1.0, 0.0, 0.0); }

GenerateResult generate(VoxelGrid grid, const SceneLayout& layout, const PromptSet& prompts,
                        const Denoiser& denoiser, const VarianceSchedule& sched,
                        SdsConfig config, const GenerateHooks& hooks) {
  config.resolve(sched);
  layout.validate();
  GenerateResult result;
  result.history.reserve(static_cast<std::size_t>(config.iterations));
  std::mt19937_64 rng(config.seed);
  OptimizerState state(grid);
  GridGradient grad(grid);
  int iteration = 0;
  try {
    for (iteration = 1; iteration <= config.iterations; ++iteration) {
      grad.zero();
      const double emptiness_weight = config.emptiness.weight_at(iteration - 1, config.iterations);
      const SdsDiagnostics diag = sds_step(grid, layout, prompts, denoiser, sched, config, rng,
                                           grad, emptiness_weight);
      adam_update(grid, grad, state, config.learning_rate, config.adam);
      result.history.push_back(diag);
      if (hooks.on_iteration) hooks.on_iteration(iteration, diag);
      if (hooks.on_checkpoint && hooks.checkpoint_every > 0 &&
          iteration % hooks.checkpoint_every == 0 && iteration != config.iterations) {
        hooks.on_checkpoint(iteration, grid);
      }
    }
  } catch (...) {
    if (hooks.on_checkpoint) hooks.on_checkpoint(iteration - 1, grid);
    throw;
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(config.iterations, grid);
  result.grid = std::move(grid);
  return result;
}

std::string progress_line(int iteration, const SdsDiagnostics& diag) {
  return fmt::format("iter={} t={} box={} view={} grad_norm={:.6e} emptiness={:.6e}", iteration,
                     diag.t, diag.focused_box ? std::to_string(*diag.focused_box) : "none",
                     to_string(diag.view), diag.gradient_norm, diag.emptiness_loss);
}

}  // namespace compose3d
