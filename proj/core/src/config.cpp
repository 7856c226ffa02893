#include "compose3d/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "compose3d/errors.hpp"

namespace compose3d {

using nlohmann::json;

namespace {

/// View of one JSON object that remembers which keys were read, so that
/// leftovers can be rejected.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    seen_.insert(key);
    auto it = node_.find(key);
    return it == node_.end() ? nullptr : &*it;
  }

  const json& require(const std::string& key) {
    const json* v = find(key);
    if (v == nullptr) throw ConfigError(key_path(key), "is required");
    return *v;
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    const json* v = find(key);
    return v == nullptr ? fallback : as<T>(*v, key_path(key));
  }

  template <typename T>
  std::optional<T> get_optional(const std::string& key) {
    const json* v = find(key);
    if (v == nullptr || v->is_null()) return std::nullopt;
    return as<T>(*v, key_path(key));
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError(key_path(it.key()), "unknown key");
    }
  }

  template <typename T>
  static T as(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where, "expected a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError(where, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
          throw ConfigError(where, "must not be negative");
        }
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(where, "expected a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where, "expected a string");
    }
    return v.get<T>();
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <std::size_t N>
std::array<double, N> number_array(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != N) {
    throw ConfigError(where, "expected an array of " + std::to_string(N) + " numbers");
  }
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!v[i].is_number()) throw ConfigError(where, "expected numbers");
    out[i] = v[i].get<double>();
  }
  return out;
}

std::filesystem::path resolve_path(const std::string& raw, const std::filesystem::path& base) {
  std::filesystem::path p(raw);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

std::filesystem::path existing_file(const json& v, const std::string& where,
                                    const std::filesystem::path& base) {
  const auto p = resolve_path(Section::as<std::string>(v, where), base);
  if (!std::filesystem::is_regular_file(p)) {
    throw ConfigError(where, "file " + p.string() + " does not exist");
  }
  return p;
}

TargetSpec parse_target(const json& v, const std::string& where,
                        const std::filesystem::path& base) {
  if (v.is_string()) return existing_file(v, where, base);
  const auto c = number_array<3>(v, where);
  for (double x : c) {
    if (!std::isfinite(x)) throw ConfigError(where, "color must be finite");
  }
  return c;
}

json target_to_json(const TargetSpec& t) {
  if (const auto* c = std::get_if<Color>(&t)) return json::array({(*c)[0], (*c)[1], (*c)[2]});
  return std::get<std::filesystem::path>(t).string();
}

template <typename E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<RunMode> kModes[] = {
    {RunMode::sample2d, "sample2d"}, {RunMode::generate3d, "generate3d"}, {RunMode::render, "render"}};
constexpr EnumName<PriorKind> kPriors[] = {{PriorKind::point_mass, "point_mass"},
                                           {PriorKind::gaussian, "gaussian"}};
constexpr EnumName<SamplerKind> kSamplers[] = {{SamplerKind::deterministic, "deterministic"},
                                               {SamplerKind::stochastic, "stochastic"}};
constexpr EnumName<LabelZeroPolicy> kLabelZero[] = {
    {LabelZeroPolicy::unconditional, "unconditional"}, {LabelZeroPolicy::error, "error"}};
constexpr EnumName<TimestepWeighting> kWeighting[] = {
    {TimestepWeighting::constant_one, "constant_one"},
    {TimestepWeighting::one_minus_alpha_bar, "one_minus_alpha_bar"}};
constexpr EnumName<CompositionMode> kComposition[] = {{CompositionMode::local, "local"},
                                                      {CompositionMode::global, "global"}};
constexpr EnumName<Precision> kPrecision[] = {{Precision::f64, "f64"}, {Precision::f32, "f32"}};
constexpr EnumName<ViewBin> kViews[] = {{ViewBin::overhead, "overhead"},
                                        {ViewBin::front, "front"},
                                        {ViewBin::side, "side"},
                                        {ViewBin::backside, "backside"}};

template <typename E, std::size_t N>
E parse_enum(const json& v, const std::string& where, const EnumName<E> (&names)[N]) {
  const auto s = Section::as<std::string>(v, where);
  for (const auto& n : names) {
    if (s == n.name) return n.value;
  }
  std::string allowed;
  for (const auto& n : names) allowed += std::string(allowed.empty() ? "" : ", ") + n.name;
  throw ConfigError(where, "unknown value '" + s + "' (expected one of: " + allowed + ")");
}

template <typename E, std::size_t N>
const char* enum_name(E value, const EnumName<E> (&names)[N]) {
  for (const auto& n : names) {
    if (n.value == value) return n.name;
  }
  return "";
}

template <typename E, std::size_t N>
void read_enum(Section& s, const std::string& key, E& out, const EnumName<E> (&names)[N]) {
  if (const json* v = s.find(key)) out = parse_enum(*v, s.key_path(key), names);
}

template <typename T>
void read(Section& s, const std::string& key, T& out) {
  out = s.get<T>(key, out);
}

void read_range(Section& s, const std::string& key, std::array<double, 2>& out) {
  if (const json* v = s.find(key)) out = number_array<2>(*v, s.key_path(key));
}

PromptConfig parse_prompt(const json& node, const std::string& where,
                          const std::filesystem::path& base) {
  Section s(node, where);
  PromptConfig p;
  p.id = Section::as<int>(s.require("id"), s.key_path("id"));
  read(s, "text", p.text);
  if (const json* t = s.find("target")) p.target = parse_target(*t, s.key_path("target"), base);
  if (const json* views = s.find("views")) {
    Section vs(*views, s.key_path("views"));
    for (const auto& v : kViews) {
      if (const json* t = vs.find(v.name)) {
        p.view_targets[v.value] = parse_target(*t, vs.key_path(v.name), base);
      }
    }
    vs.finish();
  }
  p.negation = s.get_optional<int>("negation");
  p.guidance = s.get_optional<double>("guidance");
  read(s, "variance", p.variance);
  s.finish();
  if (!(p.variance > 0.0)) throw ConfigError(where + ".variance", "must be positive");
  return p;
}

Aabb parse_box(const json& node, const std::string& where, std::size_t box_count) {
  Section s(node, where);
  Aabb b;
  const auto lo = number_array<3>(s.require("min"), s.key_path("min"));
  const auto hi = number_array<3>(s.require("max"), s.key_path("max"));
  b.min_corner = Vec3(lo[0], lo[1], lo[2]);
  b.max_corner = Vec3(hi[0], hi[1], hi[2]);
  b.prompt_index = Section::as<int>(s.require("prompt"), s.key_path("prompt"));
  b.sample_prob = s.get<double>("p", 1.0 / static_cast<double>(box_count + 1));
  s.finish();
  if (!(b.min_corner.array() < b.max_corner.array()).all()) {
    throw ConfigError(where, "min must be smaller than max on every axis");
  }
  return b;
}

void parse_sds(Section& s, SdsSection& sds) {
  read(s, "iterations", sds.iterations);
  read(s, "learning_rate", sds.learning_rate);
  read_range(s, "t_range", sds.t_range);
  read_enum(s, "weighting", sds.weighting, kWeighting);
  read(s, "render_width", sds.render_width);
  read(s, "render_height", sds.render_height);
  read(s, "downsample", sds.downsample);
  if (auto step = s.get_optional<double>("step_size")) sds.step_size = step;
  read(s, "voxel_resolution", sds.voxel_resolution);
  if (const json* e = s.find("emptiness")) {
    Section es(*e, s.key_path("emptiness"));
    read(es, "k", sds.emptiness.sharpness);
    read(es, "weight", sds.emptiness.weight);
    read(es, "ramp_factor", sds.emptiness.ramp_factor);
    read(es, "ramp_at", sds.emptiness.ramp_at);
    es.finish();
  }
  if (const json* bg = s.find("background")) {
    sds.background = number_array<3>(*bg, s.key_path("background"));
  }
  read(s, "checkpoint_every", sds.checkpoint_every);
  read(s, "view_dependent", sds.view_dependent);
  read(s, "zoomed_out_prefix", sds.zoomed_out_prefix);
  read(s, "highly_detailed_suffix", sds.highly_detailed_suffix);
  read_enum(s, "composition", sds.composition, kComposition);
  read_enum(s, "precision", sds.precision, kPrecision);
  read(s, "threads", sds.threads);
  s.finish();

  const auto where = [&](const char* k) { return s.key_path(k); };
  if (sds.iterations < 0) throw ConfigError(where("iterations"), "must not be negative");
  if (!(sds.learning_rate > 0.0)) throw ConfigError(where("learning_rate"), "must be positive");
  if (!(sds.t_range[0] > 0.0 && sds.t_range[0] <= sds.t_range[1] && sds.t_range[1] <= 1.0)) {
    throw ConfigError(where("t_range"), "must satisfy 0 < lo <= hi <= 1");
  }
  if (sds.render_width <= 0 || sds.render_height <= 0) {
    throw ConfigError(where("render_width"), "render size must be positive");
  }
  if (sds.downsample < 1 || sds.render_width % sds.downsample != 0 ||
      sds.render_height % sds.downsample != 0) {
    throw ConfigError(where("downsample"), "must be a positive divisor of the render size");
  }
  if (sds.step_size && !(*sds.step_size > 0.0)) {
    throw ConfigError(where("step_size"), "must be positive");
  }
  if (sds.voxel_resolution < 2) throw ConfigError(where("voxel_resolution"), "must be >= 2");
  if (!(sds.emptiness.sharpness > 0.0)) throw ConfigError(where("emptiness") + ".k", "must be positive");
  if (!(sds.emptiness.weight >= 0.0)) {
    throw ConfigError(where("emptiness") + ".weight", "must not be negative");
  }
  if (sds.checkpoint_every < 0) throw ConfigError(where("checkpoint_every"), "must be >= 0");
  if (sds.threads < 0) throw ConfigError(where("threads"), "must be >= 0");
}

void parse_camera(Section& s, CameraConfig& cam) {
  read_range(s, "azimuth_deg", cam.azimuth_deg);
  read_range(s, "elevation_deg", cam.elevation_deg);
  read_range(s, "radius", cam.radius);
  read(s, "fov_deg", cam.fov_deg);
  s.finish();
  if (!(cam.azimuth_deg[0] <= cam.azimuth_deg[1])) {
    throw ConfigError(s.key_path("azimuth_deg"), "empty range");
  }
  if (!(cam.elevation_deg[0] <= cam.elevation_deg[1] && cam.elevation_deg[0] > -90.0 &&
        cam.elevation_deg[1] < 90.0)) {
    throw ConfigError(s.key_path("elevation_deg"), "must be an ordered range inside (-90, 90)");
  }
  if (!(cam.radius[0] > 0.0 && cam.radius[0] <= cam.radius[1])) {
    throw ConfigError(s.key_path("radius"), "must be a positive ordered range");
  }
  if (!(cam.fov_deg > 0.0 && cam.fov_deg < 180.0)) {
    throw ConfigError(s.key_path("fov_deg"), "must lie in (0, 180)");
  }
}

}  // namespace

SceneConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
  Section root(doc, "");
  SceneConfig c;
  c.mode = parse_enum(root.require("mode"), "mode", kModes);
  read(root, "seed", c.seed);
  if (auto out = root.get_optional<std::string>("output_dir")) c.output_dir = *out;

  if (const json* prior = root.find("prior")) {
    Section ps(*prior, "prior");
    read_enum(ps, "kind", c.prior, kPriors);
    if (const json* t = ps.find("unconditional")) {
      c.unconditional_target = parse_target(*t, "prior.unconditional", base_dir);
    }
    ps.finish();
  }

  if (const json* prompts = root.find("prompts")) {
    if (!prompts->is_array()) throw ConfigError("prompts", "expected an array");
    for (std::size_t i = 0; i < prompts->size(); ++i) {
      c.prompts.push_back(parse_prompt((*prompts)[i], "prompts[" + std::to_string(i) + "]", base_dir));
    }
  }
  std::sort(c.prompts.begin(), c.prompts.end(),
            [](const PromptConfig& a, const PromptConfig& b) { return a.id < b.id; });
  const int prompt_count = static_cast<int>(c.prompts.size());
  for (int i = 0; i < prompt_count; ++i) {
    if (c.prompts[i].id != i + 1) {
      throw ConfigError("prompts", "prompt ids must be exactly 1.." + std::to_string(prompt_count));
    }
    const auto& neg = c.prompts[i].negation;
    if (neg && (*neg < 0 || *neg > prompt_count)) {
      throw ConfigError("prompts[" + std::to_string(i) + "].negation", "unknown prompt id");
    }
  }
  if (prompt_count > 255) throw ConfigError("prompts", "at most 255 prompts are supported");

  if (const json* sched = root.find("schedule")) {
    Section ss(*sched, "schedule");
    read(ss, "T", c.schedule.steps);
    read(ss, "beta_start", c.schedule.beta_start);
    read(ss, "beta_end", c.schedule.beta_end);
    read(ss, "posterior_sqrt", c.schedule.posterior_sqrt);
    ss.finish();
  }
  // Raises with the schedule field name on invalid values.
  try {
    build_schedule(c.schedule.steps, c.schedule.beta_start, c.schedule.beta_end);
  } catch (const ConfigError& e) {
    throw ConfigError("schedule." + e.field(), e.what());
  }

  c.guidance = root.get<double>("guidance", c.mode == RunMode::sample2d ? 7.5 : 100.0);
  if (!(c.guidance >= 0.0) || !std::isfinite(c.guidance)) {
    throw ConfigError("guidance", "must be finite and non-negative");
  }
  read_enum(root, "sampler", c.sampler, kSamplers);
  read(root, "alg1_literal", c.alg1_literal);
  read(root, "concept_negation", c.concept_negation);
  read_enum(root, "label_zero", c.label_zero, kLabelZero);

  if (const json* m = root.find("mask_path")) c.mask_path = existing_file(*m, "mask_path", base_dir);
  if (const json* boxes = root.find("boxes")) {
    if (!boxes->is_array()) throw ConfigError("boxes", "expected an array");
    for (std::size_t i = 0; i < boxes->size(); ++i) {
      c.boxes.push_back(parse_box((*boxes)[i], "boxes[" + std::to_string(i) + "]", boxes->size()));
    }
  }
  read(root, "background_prompt", c.background_prompt);

  if (const json* sds = root.find("sds")) {
    Section ss(*sds, "sds");
    parse_sds(ss, c.sds);
  }
  if (const json* cam = root.find("camera")) {
    Section cs(*cam, "camera");
    parse_camera(cs, c.camera);
  }
  if (const json* r = root.find("render")) {
    Section rs(*r, "render");
    if (const json* ck = rs.find("checkpoint")) {
      c.render.checkpoint = existing_file(*ck, "render.checkpoint", base_dir);
    }
    read(rs, "width", c.render.width);
    read(rs, "height", c.render.height);
    read(rs, "frames", c.render.frames);
    read(rs, "elevation_deg", c.render.elevation_deg);
    rs.finish();
    if (c.render.width <= 0 || c.render.height <= 0) {
      throw ConfigError("render.width", "render size must be positive");
    }
    if (c.render.frames < 1) throw ConfigError("render.frames", "must be at least 1");
    if (!(std::abs(c.render.elevation_deg) < 90.0)) {
      throw ConfigError("render.elevation_deg", "must lie inside (-90, 90)");
    }
  }
  root.finish();

  // Mode requirements.
  switch (c.mode) {
    case RunMode::sample2d:
      if (!c.mask_path) throw ConfigError("mask_path", "is required in sample2d mode");
      if (prompt_count == 0) throw ConfigError("prompts", "at least one prompt is required");
      break;
    case RunMode::generate3d: {
      if (prompt_count == 0) throw ConfigError("prompts", "at least one prompt is required");
      make_layout(c).validate();
      break;
    }
    case RunMode::render:
      if (!c.render.checkpoint) throw ConfigError("render.checkpoint", "is required in render mode");
      break;
  }
  if (c.background_prompt < 0 || c.background_prompt > prompt_count) {
    throw ConfigError("background_prompt", "unknown prompt id");
  }
  return c;
}

SceneConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("--config", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(doc, path.parent_path());
}

json to_json(const SceneConfig& c) {
  json doc;
  doc["mode"] = enum_name(c.mode, kModes);
  doc["seed"] = c.seed;
  doc["output_dir"] = c.output_dir.string();
  doc["prior"] = {{"kind", enum_name(c.prior, kPriors)},
                  {"unconditional", target_to_json(c.unconditional_target)}};
  json prompts = json::array();
  for (const auto& p : c.prompts) {
    json jp{{"id", p.id}, {"text", p.text}, {"target", target_to_json(p.target)},
            {"variance", p.variance}};
    if (!p.view_targets.empty()) {
      json views = json::object();
      for (const auto& [bin, t] : p.view_targets) views[enum_name(bin, kViews)] = target_to_json(t);
      jp["views"] = views;
    }
    if (p.negation) jp["negation"] = *p.negation;
    if (p.guidance) jp["guidance"] = *p.guidance;
    prompts.push_back(jp);
  }
  doc["prompts"] = prompts;
  doc["schedule"] = {{"T", c.schedule.steps},
                     {"beta_start", c.schedule.beta_start},
                     {"beta_end", c.schedule.beta_end},
                     {"posterior_sqrt", c.schedule.posterior_sqrt}};
  doc["guidance"] = c.guidance;
  doc["sampler"] = enum_name(c.sampler, kSamplers);
  doc["alg1_literal"] = c.alg1_literal;
  doc["concept_negation"] = c.concept_negation;
  doc["label_zero"] = enum_name(c.label_zero, kLabelZero);
  if (c.mask_path) doc["mask_path"] = c.mask_path->string();
  json boxes = json::array();
  for (const auto& b : c.boxes) {
    boxes.push_back({{"min", {b.min_corner.x(), b.min_corner.y(), b.min_corner.z()}},
                     {"max", {b.max_corner.x(), b.max_corner.y(), b.max_corner.z()}},
                     {"prompt", b.prompt_index},
                     {"p", b.sample_prob}});
  }
  doc["boxes"] = boxes;
  doc["background_prompt"] = c.background_prompt;

  const auto& s = c.sds;
  json sds{{"iterations", s.iterations},
           {"learning_rate", s.learning_rate},
           {"t_range", s.t_range},
           {"weighting", enum_name(s.weighting, kWeighting)},
           {"render_width", s.render_width},
           {"render_height", s.render_height},
           {"downsample", s.downsample},
           {"voxel_resolution", s.voxel_resolution},
           {"emptiness",
            {{"k", s.emptiness.sharpness},
             {"weight", s.emptiness.weight},
             {"ramp_factor", s.emptiness.ramp_factor},
             {"ramp_at", s.emptiness.ramp_at}}},
           {"background", s.background},
           {"checkpoint_every", s.checkpoint_every},
           {"view_dependent", s.view_dependent},
           {"zoomed_out_prefix", s.zoomed_out_prefix},
           {"highly_detailed_suffix", s.highly_detailed_suffix},
           {"composition", enum_name(s.composition, kComposition)},
           {"precision", enum_name(s.precision, kPrecision)},
           {"threads", s.threads}};
  if (s.step_size) sds["step_size"] = *s.step_size;
  doc["sds"] = sds;
  doc["camera"] = {{"azimuth_deg", c.camera.azimuth_deg},
                   {"elevation_deg", c.camera.elevation_deg},
                   {"radius", c.camera.radius},
                   {"fov_deg", c.camera.fov_deg}};
  json render{{"width", c.render.width},
              {"height", c.render.height},
              {"frames", c.render.frames},
              {"elevation_deg", c.render.elevation_deg}};
  if (c.render.checkpoint) render["checkpoint"] = c.render.checkpoint->string();
  doc["render"] = render;
  return doc;
}

}  // namespace compose3d
