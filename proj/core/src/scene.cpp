#include "compose3d/scene.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "compose3d/errors.hpp"

namespace compose3d {

bool Aabb::contains(const Vec3& p) const noexcept {
  return (p.array() >= min_corner.array()).all() && (p.array() <= max_corner.array()).all();
}

std::optional<SlabHit> intersect(const Aabb& box, const Vec3& origin, const Vec3& dir) {
  double t_enter = -std::numeric_limits<double>::infinity();
  double t_exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dir[a] == 0.0) {
      if (origin[a] < box.min_corner[a] || origin[a] > box.max_corner[a]) return std::nullopt;
      continue;
    }
    double t0 = (box.min_corner[a] - origin[a]) / dir[a];
    double t1 = (box.max_corner[a] - origin[a]) / dir[a];
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  t_enter = std::max(t_enter, 0.0);
  if (t_exit < t_enter) return std::nullopt;
  return SlabHit{t_enter, t_exit};
}

void SceneLayout::validate() const {
  double total = 0.0;
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const auto& b = boxes[i];
    const std::string field = "boxes[" + std::to_string(i) + "]";
    if (!(b.min_corner.array() < b.max_corner.array()).all()) {
      throw ConfigError(field, "min must be smaller than max on every axis");
    }
    if (b.prompt_index < 1 || b.prompt_index > prompt_count) {
      throw ConfigError(field + ".prompt", "prompt index " + std::to_string(b.prompt_index) +
                                               " outside [1, " + std::to_string(prompt_count) +
                                               "]");
    }
    if (!(b.sample_prob >= 0.0 && b.sample_prob <= 1.0)) {
      throw ConfigError(field + ".p", "sampling probability must lie in [0, 1]");
    }
    total += b.sample_prob;
  }
  if (total > 1.0 + 1e-12) {
    throw ConfigError("boxes", "sampling probabilities sum to more than 1");
  }
  if (background_prompt < 0 || background_prompt > prompt_count) {
    throw ConfigError("background_prompt", "prompt index out of range");
  }
}

bool SceneLayout::inside_any(const Vec3& p) const noexcept {
  for (const auto& b : boxes) {
    if (b.contains(p)) return true;
  }
  return false;
}

}  // namespace compose3d
