#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's math; only plain types are shared.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace oracle {

using V3 = std::array<double, 3>;

inline V3 add(const V3& a, const V3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline V3 sub(const V3& a, const V3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline V3 scale(const V3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
inline double dot(const V3& a, const V3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline V3 cross(const V3& a, const V3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline V3 normalize(const V3& a) { return scale(a, 1.0 / std::sqrt(dot(a, a))); }

/// alpha_bar[0..T] for linear betas, alpha_bar[0] = 1.
inline std::vector<double> linear_alpha_bar(int steps, double beta_start, double beta_end) {
  std::vector<double> ab(static_cast<std::size_t>(steps) + 1, 1.0);
  for (int t = 1; t <= steps; ++t) {
    const double beta =
        steps == 1 ? beta_start
                   : beta_start + (beta_end - beta_start) * (t - 1) / static_cast<double>(steps - 1);
    ab[t] = ab[t - 1] * (1.0 - beta);
  }
  return ab;
}

/// Orbit eye position: target + r (cos el sin az, sin el, cos el cos az).
inline V3 orbit_eye(double azimuth, double elevation, double radius, const V3& target) {
  return add(target, {radius * std::cos(elevation) * std::sin(azimuth), radius * std::sin(elevation),
                      radius * std::cos(elevation) * std::cos(azimuth)});
}

struct PinholeRay {
  V3 origin;
  V3 dir;
};

/// Ray through the center of pixel (px, py), row 0 at the top, vertical
/// field of view fov_y, world up +y.
inline PinholeRay pinhole_ray(const V3& eye, const V3& target, double fov_y, int width, int height,
                              int px, int py) {
  const V3 forward = normalize(sub(target, eye));
  const V3 right = normalize(cross(forward, {0.0, 1.0, 0.0}));
  const V3 up = cross(right, forward);
  const double tan_half = std::tan(0.5 * fov_y);
  const double aspect = static_cast<double>(width) / height;
  const double sx = (2.0 * (px + 0.5) / width - 1.0) * tan_half * aspect;
  const double sy = (1.0 - 2.0 * (py + 0.5) / height) * tan_half;
  return {eye, normalize(add(forward, add(scale(right, sx), scale(up, sy))))};
}

/// Entry distance of o + t d (t >= 0) into [lo, hi], clamped to 0, or
/// nullopt on a miss.
inline std::optional<double> slab_entry(const V3& lo, const V3& hi, const V3& o, const V3& d) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  if (t0 > t1) return std::nullopt;
  return t0;
}

/// 10-point Gauss-Legendre integral of f over [a, b].
template <typename F>
double gauss_legendre(F&& f, double a, double b) {
  static constexpr double x[5] = {0.1488743389816312, 0.4333953941292472, 0.6794095682990244,
                                  0.8650633666889845, 0.9739065285171717};
  static constexpr double w[5] = {0.2955242247147529, 0.2692667193099963, 0.2190863625159820,
                                  0.1494513491505806, 0.0666713443086881};
  const double m = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 5; ++i) s += w[i] * (f(m - h * x[i]) + f(m + h * x[i]));
  return s * h;
}

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

}  // namespace oracle
