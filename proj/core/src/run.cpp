#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>

#include <fmt/core.h>

#include "compose3d/config.hpp"
#include "compose3d/errors.hpp"
#include "compose3d/png_io.hpp"

namespace compose3d {

namespace {

constexpr double kDegree = std::numbers::pi / 180.0;

ImageTensor load_target(const TargetSpec& spec, int height, int width, const std::string& where) {
  if (const auto* c = std::get_if<Color>(&spec)) return constant_image(height, width, *c);
  const auto& path = std::get<std::filesystem::path>(spec);
  ImageTensor image = from_png8(read_png(path, 3));
  if (image.height() != height || image.width() != width) {
    throw ConfigError(where, fmt::format("image {} is {}x{}, expected {}x{}", path.string(),
                                         image.width(), image.height(), width, height));
  }
  return image;
}

RenderOptions frame_options(const SceneConfig& config, int resolution) {
  RenderOptions opts;
  opts.width = config.render.width;
  opts.height = config.render.height;
  opts.step_size = config.sds.step_size.value_or(2.0 / resolution);
  opts.background = Vec3(config.sds.background[0], config.sds.background[1],
                         config.sds.background[2]);
  opts.precision = config.sds.precision;
  opts.threads = config.sds.threads;
  return opts;
}

void write_turntable(const VoxelGrid& grid, const SceneConfig& config,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const RenderOptions opts = frame_options(config, grid.resolution());
  for (int k = 0; k < config.render.frames; ++k) {
    CameraPose pose;
    pose.azimuth = 2.0 * std::numbers::pi * k / config.render.frames;
    pose.elevation = config.render.elevation_deg * kDegree;
    pose.radius = config.camera.radius[0];
    pose.fov_y = config.camera.fov_deg * kDegree;
    const RenderOutput out = render(grid, pose, opts);
    write_png(dir / fmt::format("frame_{}.png", k), to_png8(out.rgb));
    ImageTensor depth = write_depth_image(out.depth, out.opacity);
    for (auto& v : depth.data()) v /= 255.0;
    write_png(dir / fmt::format("depth_{}.png", k), to_png8(depth));
  }
}

void run_sample2d(const SceneConfig& config) {
  const SemanticMask mask = read_mask_png(*config.mask_path, static_cast<int>(config.prompts.size()));
  const VarianceSchedule sched = make_schedule(config);
  const auto prior = make_prior(config, sched, mask.height(), mask.width());
  LocalSamplerOptions options;
  options.sampler = config.sampler;
  options.noise_coefficient = config.schedule.posterior_sqrt ? NoiseCoefficient::posterior_sqrt
                                                             : NoiseCoefficient::as_printed;
  options.label_zero = config.label_zero;
  options.alg1_literal = config.alg1_literal;
  const ImageTensor sample = sample_locally_conditioned(*prior, mask, make_prompt_set(config),
                                                        sched, options, config.seed);
  std::filesystem::create_directories(config.output_dir);
  write_png(config.output_dir / "sample.png", to_png8(sample));
}

void run_generate3d(const SceneConfig& config) {
  const VarianceSchedule sched = make_schedule(config);
  const SdsConfig sds = make_sds_config(config);
  const int height = sds.render.height / sds.downsample;
  const int width = sds.render.width / sds.downsample;
  const auto prior = make_prior(config, sched, height, width);
  const SceneLayout layout = make_layout(config);
  const PromptSet prompts = make_prompt_set(config);

  std::filesystem::create_directories(config.output_dir);
  std::ofstream log(config.output_dir / "progress.log");
  GenerateHooks hooks;
  hooks.checkpoint_every = config.sds.checkpoint_every;
  hooks.on_iteration = [&](int iteration, const SdsDiagnostics& diag) {
    if (iteration % 100 != 0 && iteration != sds.iterations) return;
    const std::string line = progress_line(iteration, diag);
    std::cout << line << '\n' << std::flush;
    log << line << '\n' << std::flush;
  };
  hooks.on_checkpoint = [&](int iteration, const VoxelGrid& grid) {
    write_checkpoint(grid, config.output_dir / fmt::format("ckpt_{}.voxg", iteration));
    write_turntable(grid, config, config.output_dir / fmt::format("turntable_{}", iteration));
  };
  const GenerateResult result = generate(initial_grid(config.sds.voxel_resolution), layout,
                                         prompts, *prior, sched, sds, hooks);
  write_turntable(result.grid, config, config.output_dir);
}

void run_render(const SceneConfig& config) {
  const VoxelGrid grid = read_checkpoint(*config.render.checkpoint);
  write_turntable(grid, config, config.output_dir);
}

}  // namespace

VarianceSchedule make_schedule(const SceneConfig& config) {
  return build_schedule(config.schedule.steps, config.schedule.beta_start,
                        config.schedule.beta_end);
}

SdsConfig make_sds_config(const SceneConfig& config) {
  const auto& s = config.sds;
  SdsConfig out;
  out.iterations = s.iterations;
  out.learning_rate = s.learning_rate;
  out.guidance = config.guidance;
  const int steps = config.schedule.steps;
  out.t_min = std::max(1, static_cast<int>(std::lround(s.t_range[0] * steps)));
  out.t_max = std::max(out.t_min, static_cast<int>(std::lround(s.t_range[1] * steps)));
  out.weighting = s.weighting;
  out.emptiness.sharpness = s.emptiness.sharpness;
  out.emptiness.weight = s.emptiness.weight;
  out.emptiness.ramp_factor = s.emptiness.ramp_factor;
  out.emptiness.ramp_at = s.emptiness.ramp_at;
  out.render.width = s.render_width;
  out.render.height = s.render_height;
  out.render.step_size = s.step_size.value_or(2.0 / s.voxel_resolution);
  out.render.background = Vec3(s.background[0], s.background[1], s.background[2]);
  out.render.precision = s.precision;
  out.render.threads = s.threads;
  out.downsample = s.downsample;
  const auto& cam = config.camera;
  out.poses.azimuth = {cam.azimuth_deg[0] * kDegree, cam.azimuth_deg[1] * kDegree};
  out.poses.elevation = {cam.elevation_deg[0] * kDegree, cam.elevation_deg[1] * kDegree};
  out.poses.radius = {cam.radius[0], cam.radius[1]};
  out.poses.fov_y = cam.fov_deg * kDegree;
  out.view_dependent = s.view_dependent;
  out.composition = s.composition;
  out.label_zero = config.label_zero;
  out.seed = config.seed;
  return out;
}

SceneLayout make_layout(const SceneConfig& config) {
  SceneLayout layout;
  layout.boxes = config.boxes;
  layout.prompt_count = static_cast<int>(config.prompts.size());
  layout.background_prompt = config.background_prompt;
  return layout;
}

PromptSet make_prompt_set(const SceneConfig& config) {
  PromptSet set;
  set.guidance = config.guidance;
  bool any_guidance = false;
  bool any_negation = false;
  for (const auto& p : config.prompts) {
    ConditionId id;
    id.prompt_index = p.id;
    id.zoomed_out = config.sds.zoomed_out_prefix;
    id.highly_detailed = config.sds.highly_detailed_suffix;
    set.prompts.push_back(id);
    set.per_prompt_guidance.push_back(p.guidance.value_or(config.guidance));
    any_guidance = any_guidance || p.guidance.has_value();
    any_negation = any_negation || p.negation.has_value();
  }
  if (!any_guidance) set.per_prompt_guidance.clear();
  if (config.concept_negation) {
    set.enable_default_negation();
    if (any_negation) {
      for (std::size_t i = 0; i < config.prompts.size(); ++i) {
        if (const auto& neg = config.prompts[i].negation) {
          set.negations[i] = *neg == 0 ? ConditionId::unconditional() : set.prompts[*neg - 1];
        }
      }
    }
  }
  return set;
}

std::unique_ptr<Denoiser> make_prior(const SceneConfig& config, const VarianceSchedule& sched,
                                     int height, int width) {
  const ImageTensor uncond =
      load_target(config.unconditional_target, height, width, "prior.unconditional");
  if (config.prior == PriorKind::point_mass) {
    auto prior = std::make_unique<PointMassPrior>(sched, height, width, 3);
    prior->set_target(ConditionId::unconditional(), uncond);
    for (std::size_t i = 0; i < config.prompts.size(); ++i) {
      const auto& p = config.prompts[i];
      const std::string where = fmt::format("prompts[{}]", i);
      prior->set_target({p.id}, load_target(p.target, height, width, where + ".target"));
      for (const auto& [bin, target] : p.view_targets) {
        prior->set_target({p.id, bin}, load_target(target, height, width,
                                                   where + ".views." + std::string(to_string(bin))));
      }
    }
    return prior;
  }
  auto prior = std::make_unique<GaussianPrior>(sched, height, width, 3);
  const double uncond_variance = config.prompts.empty() ? 0.01 : config.prompts.front().variance;
  prior->set_target(ConditionId::unconditional(), uncond, uncond_variance);
  for (std::size_t i = 0; i < config.prompts.size(); ++i) {
    const auto& p = config.prompts[i];
    const std::string where = fmt::format("prompts[{}]", i);
    prior->set_target({p.id}, load_target(p.target, height, width, where + ".target"), p.variance);
    for (const auto& [bin, target] : p.view_targets) {
      prior->set_target({p.id, bin},
                        load_target(target, height, width,
                                    where + ".views." + std::string(to_string(bin))),
                        p.variance);
    }
  }
  return prior;
}

int run(const SceneConfig& config) {
  try {
    switch (config.mode) {
      case RunMode::sample2d:
        run_sample2d(config);
        break;
      case RunMode::generate3d:
        run_generate3d(config);
        break;
      case RunMode::render:
        run_render(config);
        break;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace compose3d
