#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <vector>

#include <Eigen/Core>

namespace compose3d {

using Vec3 = Eigen::Vector3d;

/// Dense N^3 grid of raw density and raw color parameters over the cube
/// [lo, hi]^3. Values live at cell centers; index order is x fastest, then y,
/// then z.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(int resolution, double extent_lo = -1.0, double extent_hi = 1.0,
            double density_raw = 0.0, double color_raw = 0.0);

  int resolution() const noexcept { return n_; }
  double extent_lo() const noexcept { return lo_; }
  double extent_hi() const noexcept { return hi_; }
  double cell_size() const noexcept { return (hi_ - lo_) / n_; }
  std::size_t voxel_count() const noexcept { return density_.size(); }
  /// Total number of scalar parameters, N^3 * 4.
  std::size_t parameter_count() const noexcept { return density_.size() * 4; }

  std::size_t index(int x, int y, int z) const noexcept {
    return (static_cast<std::size_t>(z) * n_ + static_cast<std::size_t>(y)) * n_ +
           static_cast<std::size_t>(x);
  }
  Vec3 voxel_center(int x, int y, int z) const;
  bool contains(const Vec3& p) const noexcept;

  std::vector<double>& density() noexcept { return density_; }
  const std::vector<double>& density() const noexcept { return density_; }
  /// Interleaved rgb per voxel, size N^3 * 3.
  std::vector<double>& color() noexcept { return color_; }
  const std::vector<double>& color() const noexcept { return color_; }

  bool all_finite() const noexcept;
  bool operator==(const VoxelGrid&) const = default;

 private:
  int n_ = 0;
  double lo_ = -1.0;
  double hi_ = 1.0;
  std::vector<double> density_;
  std::vector<double> color_;
};

/// Gradient buffer with the same layout as a VoxelGrid.
struct GridGradient {
  std::vector<double> density;
  std::vector<double> color;

  GridGradient() = default;
  explicit GridGradient(const VoxelGrid& grid)
      : density(grid.density().size(), 0.0), color(grid.color().size(), 0.0) {}

  void zero();
  void add(const GridGradient& other, double scale = 1.0);
  double norm() const;
  double dot(const GridGradient& other) const;
  bool all_finite() const;
};

/// The eight cell-center corners around a point with their trilinear weights.
/// Points in the outer half cell clamp to the boundary layer.
struct TrilinearStencil {
  std::array<std::size_t, 8> index;
  std::array<double, 8> weight;
};

std::optional<TrilinearStencil> trilinear_stencil(const VoxelGrid& grid, const Vec3& p);

struct RawSample {
  double density = 0.0;
  Vec3 color = Vec3::Zero();
};

/// Trilinear field value; nullopt outside the grid extent.
std::optional<RawSample> trilinear_sample(const VoxelGrid& grid, const Vec3& p);

/// Adds the adjoint of trilinear_sample at p into `grad`. Returns false and
/// leaves `grad` untouched outside the extent.
bool grid_gradient_scatter(const VoxelGrid& grid, const Vec3& p, double d_density,
                           const Vec3& d_color, GridGradient& grad);

struct Activation {
  /// Added to raw density before softplus. The default gives sigma = 0.1 at
  /// raw density 0.
  double density_bias = -2.2521684610440903;
};

double softplus(double x);
double logistic(double x);
/// softplus^{-1}(y) for y > 0.
double softplus_inverse(double y);

struct Activated {
  double sigma;
  Vec3 rgb;
};
Activated activate(double density_raw, const Vec3& color_raw,
                   const Activation& act = {});

/// Checkpoint format: "VOXG", u32 version, u32 N, f32 extent_lo, f32
/// extent_hi, then N^3 f32 densities followed by N^3 x 3 f32 colors (rgb
/// interleaved), all little endian, voxels x fastest.
void write_checkpoint(const VoxelGrid& grid, const std::filesystem::path& path);
VoxelGrid read_checkpoint(const std::filesystem::path& path);
std::vector<unsigned char> encode_checkpoint(const VoxelGrid& grid);
VoxelGrid decode_checkpoint(const std::vector<unsigned char>& bytes);

}  // namespace compose3d
