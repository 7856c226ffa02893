#include "compose3d/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Core>

#include "compose3d/errors.hpp"
#include "parallel.hpp"

namespace compose3d {

namespace {

constexpr double kDepthGuard = 1e-6;
constexpr double kTerminationTransmittance = 1e-5;

class RayGenerator {
 public:
  RayGenerator(const CameraPose& pose, int width, int height)
      : width_(width), height_(height) {
    if (width <= 0 || height <= 0) throw ConfigError("render size", "must be positive");
    const Mat4 c2w = pose.camera_to_world();
    rotation_ = c2w.block<3, 3>(0, 0);
    eye_ = c2w.block<3, 1>(0, 3);
    tan_half_ = std::tan(0.5 * pose.fov_y);
    aspect_ = static_cast<double>(width) / height;
  }

  Ray operator()(int px, int py) const {
    const double x = ((px + 0.5) / width_ * 2.0 - 1.0) * tan_half_ * aspect_;
    const double y = (1.0 - (py + 0.5) / height_ * 2.0) * tan_half_;
    const Vec3 dir = (rotation_ * Vec3(x, y, -1.0)).normalized();
    return {eye_, dir, 0.0, std::numeric_limits<double>::infinity()};
  }

 private:
  int width_, height_;
  Eigen::Matrix3d rotation_;
  Vec3 eye_;
  double tan_half_ = 1.0;
  double aspect_ = 1.0;
};

/// One quadrature sample along a ray.
template <typename Real>
struct Sample {
  Vec3 position;
  double distance;  // midpoint distance along the ray
  Real raw_density;
  Real sigma;
  Real alpha;          // 1 - exp(-sigma * delta)
  Real transmittance;  // before this sample
  Real delta;
  Eigen::Matrix<Real, 3, 1> rgb;
};

template <typename Real>
struct RayResult {
  Eigen::Matrix<Real, 3, 1> rgb;
  Real opacity = 0;
  Real depth = 0;
  Real final_transmittance = 1;
};

double jitter_offset(const RenderOptions& opts, std::size_t pixel) {
  if (!opts.jitter_seed) return 0.0;
  std::mt19937_64 rng(*opts.jitter_seed ^ (0x9e3779b97f4a7c15ULL * (pixel + 1)));
  return std::generate_canonical<double, 53>(rng);
}

/// Marches one ray through the grid, filling `samples`. Interval boundaries
/// are t0, t0 + (k - u) * step for k >= 1, clipped to t1, with u the jitter
/// offset (0 without jitter). Each interval is evaluated at its midpoint.
template <typename Real>
RayResult<Real> march(const VoxelGrid& grid, const Ray& ray, const RenderOptions& opts,
                      double jitter, std::vector<Sample<Real>>& samples) {
  samples.clear();
  const Eigen::Matrix<Real, 3, 1> bg = opts.background.cast<Real>();
  RayResult<Real> out;
  out.rgb.setZero();

  Aabb extent;
  extent.min_corner = Vec3::Constant(grid.extent_lo());
  extent.max_corner = Vec3::Constant(grid.extent_hi());
  const auto hit = intersect(extent, ray.origin, ray.direction);
  if (!hit || hit->t_exit <= hit->t_enter) {
    out.rgb = bg;
    return out;
  }
  const double t0 = hit->t_enter;
  const double t1 = hit->t_exit;
  const double step = opts.step_size;
  const Activation& act = opts.activation;

  Real transmittance = 1;
  Real weight_sum = 0;
  Real depth_sum = 0;
  double start = t0;
  for (long k = 1; start < t1; ++k) {
    double end = t0 + (static_cast<double>(k) - jitter) * step;
    if (end > t1 || t1 - end < 1e-12 * step) end = t1;
    if (end <= start) continue;
    const double mid = 0.5 * (start + end);
    Vec3 p = ray.origin + mid * ray.direction;
    p = p.cwiseMax(grid.extent_lo()).cwiseMin(grid.extent_hi());
    const auto raw = trilinear_sample(grid, p);

    Sample<Real> s;
    s.position = p;
    s.distance = mid;
    s.delta = static_cast<Real>(end - start);
    s.raw_density = static_cast<Real>(raw->density);
    const Real z = s.raw_density + static_cast<Real>(act.density_bias);
    s.sigma = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    for (int c = 0; c < 3; ++c) {
      const Real x = static_cast<Real>(raw->color[c]);
      s.rgb[c] = x >= 0 ? Real(1) / (Real(1) + std::exp(-x))
                        : std::exp(x) / (Real(1) + std::exp(x));
    }
    s.alpha = -std::expm1(-s.sigma * s.delta);
    s.transmittance = transmittance;
    const Real w = transmittance * s.alpha;
    out.rgb += w * s.rgb;
    weight_sum += w;
    depth_sum += w * static_cast<Real>(mid);
    transmittance *= Real(1) - s.alpha;
    samples.push_back(s);
    start = end;
    if (opts.early_termination && transmittance < Real(kTerminationTransmittance)) break;
  }
  out.rgb += transmittance * bg;
  out.final_transmittance = transmittance;
  out.opacity = weight_sum;
  out.depth = depth_sum / std::max(weight_sum, static_cast<Real>(kDepthGuard));
  return out;
}

void check_options(const RenderOptions& opts) {
  if (!(opts.step_size > 0.0) || !std::isfinite(opts.step_size)) {
    throw ConfigError("step_size", "must be positive");
  }
  if (opts.width <= 0 || opts.height <= 0) throw ConfigError("render size", "must be positive");
}

template <typename Real>
RenderOutput render_impl(const VoxelGrid& grid, const CameraPose& pose,
                         const RenderOptions& opts) {
  check_options(opts);
  const RayGenerator rays(pose, opts.width, opts.height);
  RenderOutput out{ImageTensor(opts.height, opts.width, 3),
                   ImageTensor(opts.height, opts.width, 1),
                   ImageTensor(opts.height, opts.width, 1)};
  detail::parallel_for(opts.height, opts.threads, [&](int py) {
    std::vector<Sample<Real>> samples;
    for (int px = 0; px < opts.width; ++px) {
      const std::size_t pixel = static_cast<std::size_t>(py) * opts.width + px;
      const auto r = march<Real>(grid, rays(px, py), opts, jitter_offset(opts, pixel), samples);
      for (int c = 0; c < 3; ++c) out.rgb.at(py, px, c) = static_cast<double>(r.rgb[c]);
      out.depth.at(py, px, 0) = static_cast<double>(r.depth);
      out.opacity.at(py, px, 0) = static_cast<double>(r.opacity);
    }
  });
  return out;
}

/// Adjoint of one sample with respect to its raw field values.
struct SampleAdjoint {
  Vec3 position;
  double d_density;
  Vec3 d_color;
};

struct RayBackward {
  std::vector<SampleAdjoint> adjoints;
};

template <typename Real>
void backward_ray(const std::vector<Sample<Real>>& samples, const Eigen::Matrix<Real, 3, 1>& d_rgb,
                  const Eigen::Matrix<Real, 3, 1>& bg, const std::vector<Real>& d_weight,
                  const Activation& act, std::vector<SampleAdjoint>& out) {
  out.clear();
  out.resize(samples.size());
  // Back-to-front accumulations: color seen behind sample k (starting with
  // the background) and the emptiness weight sum behind sample k, both
  // normalized by the transmittance in front of k.
  Eigen::Matrix<Real, 3, 1> behind = bg;
  Real behind_weight = 0;
  const bool has_emptiness = !d_weight.empty();
  for (std::size_t i = samples.size(); i-- > 0;) {
    const auto& s = samples[i];
    const Real tw = s.transmittance * s.alpha;

    Eigen::Matrix<Real, 3, 1> d_c_raw;
    for (int c = 0; c < 3; ++c) d_c_raw[c] = tw * d_rgb[c] * s.rgb[c] * (Real(1) - s.rgb[c]);

    Real d_alpha = s.transmittance * d_rgb.dot(s.rgb - behind);
    behind = s.alpha * s.rgb + (Real(1) - s.alpha) * behind;
    if (has_emptiness) {
      const Real g = d_weight[i];
      d_alpha += s.transmittance * (g - behind_weight);
      behind_weight = g * s.alpha + (Real(1) - s.alpha) * behind_weight;
    }
    const Real d_sigma = d_alpha * s.delta * (Real(1) - s.alpha);
    const Real z = s.raw_density + static_cast<Real>(act.density_bias);
    const Real dsoftplus = z >= 0 ? Real(1) / (Real(1) + std::exp(-z))
                                  : std::exp(z) / (Real(1) + std::exp(z));
    out[i] = {s.position, static_cast<double>(d_sigma * dsoftplus), d_c_raw.template cast<double>()};
  }
}

template <typename Real>
BackwardResult backward_impl(const VoxelGrid& grid, const CameraPose& pose,
                             const RenderOptions& opts, const ImageTensor& d_rgb,
                             GridGradient& grad, const EmptinessTerm* emptiness) {
  check_options(opts);
  if (d_rgb.height() != opts.height || d_rgb.width() != opts.width || d_rgb.channels() != 3) {
    throw DimensionError("render_backward: adjoint image does not match the render size");
  }
  if (grad.density.size() != grid.density().size() || grad.color.size() != grid.color().size()) {
    throw DimensionError("render_backward: gradient buffer does not match the grid");
  }
  const RayGenerator rays(pose, opts.width, opts.height);
  const std::size_t pixels = static_cast<std::size_t>(opts.width) * opts.height;
  const Eigen::Matrix<Real, 3, 1> bg = opts.background.cast<Real>();

  BackwardResult result;
  const bool with_emptiness = emptiness != nullptr && emptiness->layout != nullptr;
  if (with_emptiness && !(emptiness->sharpness > 0.0)) {
    throw ConfigError("emptiness.sharpness", "must be positive");
  }

  // Pass 1 (emptiness only): the loss is a mean over all outside samples of
  // the view, so their count is needed before per-sample adjoints exist.
  std::vector<double> row_loss(opts.height, 0.0);
  std::vector<std::size_t> row_count(opts.height, 0);
  if (with_emptiness) {
    detail::parallel_for(opts.height, opts.threads, [&](int py) {
      std::vector<Sample<Real>> samples;
      for (int px = 0; px < opts.width; ++px) {
        const std::size_t pixel = static_cast<std::size_t>(py) * opts.width + px;
        march<Real>(grid, rays(px, py), opts, jitter_offset(opts, pixel), samples);
        for (const auto& s : samples) {
          if (emptiness->layout->inside_any(s.position)) continue;
          const double w = static_cast<double>(s.transmittance * s.alpha);
          row_loss[py] += std::log1p(emptiness->sharpness * w);
          ++row_count[py];
        }
      }
    });
    double loss = 0.0;
    for (int py = 0; py < opts.height; ++py) {
      loss += row_loss[py];
      result.outside_samples += row_count[py];
    }
    if (result.outside_samples > 0) result.emptiness_loss = loss / result.outside_samples;
  }
  const double mean_scale =
      result.outside_samples > 0 ? 1.0 / static_cast<double>(result.outside_samples) : 0.0;

  std::vector<RayBackward> per_pixel(pixels);
  detail::parallel_for(opts.height, opts.threads, [&](int py) {
    std::vector<Sample<Real>> samples;
    std::vector<Real> d_weight;
    for (int px = 0; px < opts.width; ++px) {
      const std::size_t pixel = static_cast<std::size_t>(py) * opts.width + px;
      march<Real>(grid, rays(px, py), opts, jitter_offset(opts, pixel), samples);
      d_weight.clear();
      if (with_emptiness && emptiness->weight != 0.0) {
        d_weight.resize(samples.size(), Real(0));
        for (std::size_t i = 0; i < samples.size(); ++i) {
          const auto& s = samples[i];
          if (emptiness->layout->inside_any(s.position)) continue;
          const double w = static_cast<double>(s.transmittance * s.alpha);
          d_weight[i] = static_cast<Real>(emptiness->weight * mean_scale * emptiness->sharpness /
                                          (1.0 + emptiness->sharpness * w));
        }
      }
      const Eigen::Matrix<Real, 3, 1> d(static_cast<Real>(d_rgb.at(py, px, 0)),
                                        static_cast<Real>(d_rgb.at(py, px, 1)),
                                        static_cast<Real>(d_rgb.at(py, px, 2)));
      backward_ray<Real>(samples, d, bg, d_weight, opts.activation, per_pixel[pixel].adjoints);
    }
  });

  // Fixed-order accumulation keeps the result independent of thread count.
  for (const auto& ray : per_pixel) {
    for (const auto& a : ray.adjoints) {
      grid_gradient_scatter(grid, a.position, a.d_density, a.d_color, grad);
    }
  }
  return result;
}

}  // namespace

Ray camera_ray(const CameraPose& pose, int width, int height, int px, int py) {
  return RayGenerator(pose, width, height)(px, py);
}

RenderOutput render(const VoxelGrid& grid, const CameraPose& pose,
                    const RenderOptions& options) {
  if (options.precision == Precision::f32) return render_impl<float>(grid, pose, options);
  return render_impl<double>(grid, pose, options);
}

BackwardResult render_backward(const VoxelGrid& grid, const CameraPose& pose,
                               const RenderOptions& options, const ImageTensor& d_rgb,
                               GridGradient& grad, const EmptinessTerm* emptiness) {
  if (options.precision == Precision::f32) {
    return backward_impl<float>(grid, pose, options, d_rgb, grad, emptiness);
  }
  return backward_impl<double>(grid, pose, options, d_rgb, grad, emptiness);
}

std::vector<double> outside_box_weights(const VoxelGrid& grid, const CameraPose& pose,
                                        const RenderOptions& options,
                                        const SceneLayout& layout) {
  check_options(options);
  const RayGenerator rays(pose, options.width, options.height);
  std::vector<double> weights;
  std::vector<Sample<double>> samples;
  for (int py = 0; py < options.height; ++py) {
    for (int px = 0; px < options.width; ++px) {
      const std::size_t pixel = static_cast<std::size_t>(py) * options.width + px;
      march<double>(grid, rays(px, py), options, jitter_offset(options, pixel), samples);
      for (const auto& s : samples) {
        if (!layout.inside_any(s.position)) weights.push_back(s.transmittance * s.alpha);
      }
    }
  }
  return weights;
}

EmptinessValue emptiness_loss(std::span<const double> weights, double sharpness) {
  if (!(sharpness > 0.0)) throw ConfigError("emptiness.sharpness", "must be positive");
  EmptinessValue out;
  out.d_weights.assign(weights.size(), 0.0);
  if (weights.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    out.loss += std::log1p(sharpness * weights[i]);
    out.d_weights[i] = inv_n * sharpness / (1.0 + sharpness * weights[i]);
  }
  out.loss *= inv_n;
  return out;
}

SemanticMask rasterize_boxes(const SceneLayout& layout, const CameraPose& pose, int width,
                             int height) {
  const RayGenerator rays(pose, width, height);
  SemanticMask mask(height, width, layout.prompt_count);
  for (int py = 0; py < height; ++py) {
    for (int px = 0; px < width; ++px) {
      const Ray ray = rays(px, py);
      int label = layout.background_prompt;
      double nearest = std::numeric_limits<double>::infinity();
      for (const auto& box : layout.boxes) {
        const auto hit = intersect(box, ray.origin, ray.direction);
        if (hit && hit->t_enter < nearest) {
          nearest = hit->t_enter;
          label = box.prompt_index;
        }
      }
      mask.set(py, px, label);
    }
  }
  return mask;
}

ImageTensor write_depth_image(const ImageTensor& depth, const ImageTensor& opacity) {
  require_same_shape(depth, opacity, "write_depth_image");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (opacity[i] > 0.5) {
      lo = std::min(lo, depth[i]);
      hi = std::max(hi, depth[i]);
    }
  }
  ImageTensor out(depth.height(), depth.width(), 1);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!(opacity[i] > 0.5)) continue;
    const double near = hi > lo ? (hi - depth[i]) / (hi - lo) : 1.0;
    out[i] = std::round(255.0 * std::clamp(near, 0.0, 1.0));
  }
  return out;
}

}  // namespace compose3d
