#include <array>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "compose3d/errors.hpp"
#include "compose3d/voxel_grid.hpp"

using namespace compose3d;

namespace {

VoxelGrid random_grid(int n, std::mt19937_64& rng) {
  VoxelGrid g(n);
  std::normal_distribution<double> normal;
  for (auto& v : g.density()) v = normal(rng);
  for (auto& v : g.color()) v = normal(rng);
  return g;
}

/// Independent 8-corner trilinear interpolation over cell centers with
/// clamping of the outer half cell.
std::array<double, 4> eight_corner(const VoxelGrid& g, const Vec3& p) {
  const int n = g.resolution();
  const double h = (g.extent_hi() - g.extent_lo()) / n;
  int i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    double u = (p[a] - g.extent_lo()) / h - 0.5;
    u = std::clamp(u, 0.0, n - 1.0);
    i0[a] = std::min(static_cast<int>(std::floor(u)), n - 2);
    f[a] = u - i0[a];
  }
  std::array<double, 4> out{0, 0, 0, 0};
  for (int dz = 0; dz < 2; ++dz) {
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? f[0] : 1 - f[0]) * (dy ? f[1] : 1 - f[1]) * (dz ? f[2] : 1 - f[2]);
        const std::size_t idx = g.index(i0[0] + dx, i0[1] + dy, i0[2] + dz);
        out[0] += w * g.density()[idx];
        for (int c = 0; c < 3; ++c) out[1 + c] += w * g.color()[idx * 3 + c];
      }
    }
  }
  return out;
}

}  // namespace

TEST(Trilinear, NodeAndMidpoint) {
  VoxelGrid g(4);
  g.density()[g.index(1, 2, 3)] = 1.0;
  EXPECT_EQ(trilinear_sample(g, g.voxel_center(1, 2, 3))->density, 1.0);
  const Vec3 mid = 0.5 * (g.voxel_center(0, 2, 3) + g.voxel_center(1, 2, 3));
  EXPECT_DOUBLE_EQ(trilinear_sample(g, mid)->density, 0.5);
  EXPECT_FALSE(trilinear_sample(g, Vec3(1.01, 0, 0)).has_value());
}

TEST(Trilinear, MatchesEightCornerOracle) {
  std::mt19937_64 rng(1);
  const VoxelGrid g = random_grid(4, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 500; ++k) {
    const Vec3 p(u(rng), u(rng), u(rng));
    const auto s = trilinear_sample(g, p);
    const auto o = eight_corner(g, p);
    ASSERT_TRUE(s.has_value());
    EXPECT_NEAR(s->density, o[0], 1e-12);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(s->color[c], o[1 + c], 1e-12);
  }
}

TEST(Trilinear, LinearInParameters) {
  std::mt19937_64 rng(2);
  const VoxelGrid a = random_grid(5, rng), b = random_grid(5, rng);
  VoxelGrid mix(5);
  for (std::size_t i = 0; i < mix.density().size(); ++i) mix.density()[i] = 2.0 * a.density()[i] - 0.5 * b.density()[i];
  const Vec3 p(0.13, -0.71, 0.4);
  EXPECT_NEAR(trilinear_sample(mix, p)->density,
              2.0 * trilinear_sample(a, p)->density - 0.5 * trilinear_sample(b, p)->density, 1e-12);
}

TEST(Scatter, WeightsAndNodeCase) {
  VoxelGrid g(4);
  GridGradient grad(g);
  ASSERT_TRUE(grid_gradient_scatter(g, g.voxel_center(2, 1, 0), 3.0, Vec3(1, 2, 3), grad));
  EXPECT_EQ(grad.density[g.index(2, 1, 0)], 3.0);
  EXPECT_EQ(grad.color[g.index(2, 1, 0) * 3 + 2], 3.0);
  double total = 0.0;
  for (double v : grad.density) total += v;
  EXPECT_EQ(total, 3.0);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 50; ++k) {
    const auto st = trilinear_stencil(g, Vec3(u(rng), u(rng), u(rng)));
    ASSERT_TRUE(st.has_value());
    double sum = 0.0;
    for (double w : st->weight) sum += w;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  GridGradient untouched(g);
  EXPECT_FALSE(grid_gradient_scatter(g, Vec3(0, 0, 2), 1.0, Vec3::Zero(), untouched));
  EXPECT_EQ(untouched.norm(), 0.0);
}

TEST(Scatter, MatchesFiniteDifferences) {
  std::mt19937_64 rng(4);
  VoxelGrid g = random_grid(4, rng);
  const Vec3 p(0.21, -0.37, 0.66);
  const double dd = 0.7;
  const Vec3 dc(-0.3, 1.1, 0.4);
  GridGradient grad(g);
  grid_gradient_scatter(g, p, dd, dc, grad);
  auto objective = [&] {
    const auto s = *trilinear_sample(g, p);
    return dd * s.density + dc.dot(s.color);
  };
  const double h = 1e-4;
  for (std::size_t i = 0; i < g.density().size(); ++i) {
    const double keep = g.density()[i];
    g.density()[i] = keep + h;
    const double up = objective();
    g.density()[i] = keep - h;
    const double down = objective();
    g.density()[i] = keep;
    EXPECT_NEAR((up - down) / (2 * h), grad.density[i], 1e-6);
  }
  for (std::size_t i = 0; i < g.color().size(); ++i) {
    const double keep = g.color()[i];
    g.color()[i] = keep + h;
    const double up = objective();
    g.color()[i] = keep - h;
    const double down = objective();
    g.color()[i] = keep;
    EXPECT_NEAR((up - down) / (2 * h), grad.color[i], 1e-6);
  }
}

TEST(Activation, Values) {
  EXPECT_NEAR(activate(0.0, Vec3::Zero(), {-1.0}).sigma, 0.313261687518, 1e-12);
  EXPECT_EQ(activate(0.0, Vec3::Zero()).rgb, Vec3::Constant(0.5));
  EXPECT_NEAR(activate(0.0, Vec3::Zero()).sigma, 0.1, 1e-12);
  EXPECT_LT(activate(-800.0, Vec3::Zero()).sigma, 1e-300);
  for (double x : {-1e6, -50.0, 0.0, 50.0, 1e6}) {
    const auto a = activate(x, Vec3::Constant(x));
    EXPECT_GE(a.sigma, 0.0);
    EXPECT_TRUE(std::isfinite(a.sigma));
    EXPECT_GE(a.rgb.minCoeff(), 0.0);
    EXPECT_LE(a.rgb.maxCoeff(), 1.0);
  }
  EXPECT_NEAR(softplus(softplus_inverse(0.37)), 0.37, 1e-14);
}

TEST(Checkpoint, RoundTrip) {
  std::mt19937_64 rng(5);
  VoxelGrid g = random_grid(5, rng);
  for (auto& v : g.density()) v = static_cast<float>(v);
  for (auto& v : g.color()) v = static_cast<float>(v);
  const auto bytes = encode_checkpoint(g);
  EXPECT_EQ(decode_checkpoint(bytes), g);
  EXPECT_EQ(encode_checkpoint(decode_checkpoint(bytes)), bytes);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "VOXG");
}

TEST(Checkpoint, RejectsCorruptInput) {
  VoxelGrid g(3);
  auto bytes = encode_checkpoint(g);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 1);
  EXPECT_THROW(decode_checkpoint(truncated), IoError);
  bytes[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bytes), IoError);
  EXPECT_THROW(read_checkpoint("/nonexistent/grid.voxg"), IoError);
}
