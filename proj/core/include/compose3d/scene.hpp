#pragma once

#include <optional>
#include <vector>

#include "compose3d/voxel_grid.hpp"

namespace compose3d {

struct Aabb {
  Vec3 min_corner = Vec3::Constant(-0.5);
  Vec3 max_corner = Vec3::Constant(0.5);
  int prompt_index = 1;
  double sample_prob = 0.0;

  Vec3 center() const { return 0.5 * (min_corner + max_corner); }
  bool contains(const Vec3& p) const noexcept;

  bool operator==(const Aabb&) const = default;
};

struct SlabHit {
  double t_enter;
  double t_exit;
};

/// Slab test for o + t d, t >= 0. The entry distance is clamped to 0 when
/// the origin is inside the box.
std::optional<SlabHit> intersect(const Aabb& box, const Vec3& origin, const Vec3& dir);

struct SceneLayout {
  std::vector<Aabb> boxes;
  int prompt_count = 0;
  /// Label for pixels that hit no box. 0 leaves them unassigned.
  int background_prompt = 0;

  /// Throws ConfigError on inverted boxes, bad prompt indices or
  /// probabilities that do not sum to at most 1.
  void validate() const;
  bool inside_any(const Vec3& p) const noexcept;

  bool operator==(const SceneLayout&) const = default;
};

}  // namespace compose3d
