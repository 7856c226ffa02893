#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "compose3d/composition.hpp"
#include "compose3d/denoiser.hpp"
#include "compose3d/renderer.hpp"
#include "compose3d/scene.hpp"
#include "compose3d/sds.hpp"

namespace compose3d {

enum class RunMode { sample2d, generate3d, render };
enum class PriorKind { point_mass, gaussian };

using Color = std::array<double, 3>;
/// A prior target: a constant color or a PNG image (absolute path).
using TargetSpec = std::variant<Color, std::filesystem::path>;

struct PromptConfig {
  int id = 1;
  std::string text;
  TargetSpec target = Color{0.5, 0.5, 0.5};
  std::map<ViewBin, TargetSpec> view_targets;
  std::optional<int> negation;
  std::optional<double> guidance;
  double variance = 0.01;  // gaussian prior only

  bool operator==(const PromptConfig&) const = default;
};

struct ScheduleConfig {
  int steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  bool posterior_sqrt = false;

  bool operator==(const ScheduleConfig&) const = default;
};

struct EmptinessConfig {
  double sharpness = 10.0;
  double weight = 1e4;
  double ramp_factor = 10.0;
  double ramp_at = 0.5;

  bool operator==(const EmptinessConfig&) const = default;
};

struct SdsSection {
  int iterations = 10000;
  double learning_rate = 0.05;
  std::array<double, 2> t_range{0.02, 0.98};
  TimestepWeighting weighting = TimestepWeighting::constant_one;
  int render_width = 64;
  int render_height = 64;
  int downsample = 1;
  std::optional<double> step_size;  // default 2 * extent / N
  int voxel_resolution = 100;
  EmptinessConfig emptiness{};
  Color background{1.0, 1.0, 1.0};
  int checkpoint_every = 500;
  bool view_dependent = true;
  bool zoomed_out_prefix = false;
  bool highly_detailed_suffix = false;
  CompositionMode composition = CompositionMode::local;
  Precision precision = Precision::f64;
  int threads = 0;

  bool operator==(const SdsSection&) const = default;
};

struct CameraConfig {
  std::array<double, 2> azimuth_deg{0.0, 360.0};
  std::array<double, 2> elevation_deg{-10.0, 60.0};
  std::array<double, 2> radius{3.0, 3.0};
  double fov_deg = 60.0;

  bool operator==(const CameraConfig&) const = default;
};

struct RenderSection {
  std::optional<std::filesystem::path> checkpoint;
  int width = 128;
  int height = 128;
  int frames = 8;
  double elevation_deg = 15.0;

  bool operator==(const RenderSection&) const = default;
};

/// Validated description of one run.
struct SceneConfig {
  RunMode mode = RunMode::sample2d;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "out";

  PriorKind prior = PriorKind::point_mass;
  TargetSpec unconditional_target = Color{0.5, 0.5, 0.5};
  std::vector<PromptConfig> prompts;

  ScheduleConfig schedule{};
  double guidance = 7.5;
  SamplerKind sampler = SamplerKind::deterministic;
  bool alg1_literal = false;
  bool concept_negation = false;
  LabelZeroPolicy label_zero = LabelZeroPolicy::unconditional;

  std::optional<std::filesystem::path> mask_path;  // sample2d
  std::vector<Aabb> boxes;                         // generate3d
  int background_prompt = 0;

  SdsSection sds{};
  CameraConfig camera{};
  RenderSection render{};

  bool operator==(const SceneConfig&) const = default;
};

/// Parses and validates. Relative file paths resolve against `base_dir`.
/// Unknown keys are rejected. Throws ConfigError with the key path.
SceneConfig parse_config(const nlohmann::json& doc,
                         const std::filesystem::path& base_dir = {});
SceneConfig parse_config_file(const std::filesystem::path& path);
nlohmann::json to_json(const SceneConfig& config);

/// Executes a run. Exit status: 0 success, 1 runtime error, 2 config error.
int run(const SceneConfig& config);

// Helpers shared by run modes, exposed for tests.
VarianceSchedule make_schedule(const SceneConfig& config);
SdsConfig make_sds_config(const SceneConfig& config);
SceneLayout make_layout(const SceneConfig& config);
PromptSet make_prompt_set(const SceneConfig& config);
std::unique_ptr<Denoiser> make_prior(const SceneConfig& config, const VarianceSchedule& sched,
                                     int height, int width);

}  // namespace compose3d
