#include <cmath>
#include <random>
#include <stdexcept>

#include <gtest/gtest.h>

#include "compose3d/errors.hpp"
#include "compose3d/image.hpp"

using namespace compose3d;

TEST(Image, ShapeAndIndexing) {
  ImageTensor img(2, 3, 3, 0.0);
  img.at(1, 2, 1) = 4.0;
  EXPECT_EQ(img[(1 * 3 + 2) * 3 + 1], 4.0);
  EXPECT_EQ(img.pixel_count(), 6u);
  EXPECT_THROW(ImageTensor(2, 2, 1, std::vector<double>{1.0}), DimensionError);
  EXPECT_THROW(ImageTensor(1, 1, 1, std::vector<double>{NAN}), std::invalid_argument);
}

TEST(Image, GaussianIsSeeded) {
  std::mt19937_64 a(3), b(3);
  EXPECT_EQ(gaussian_image(4, 4, 3, a), gaussian_image(4, 4, 3, b));
}

TEST(Image, DownsampleAdjoint) {
  std::mt19937_64 rng(5);
  const auto fine = gaussian_image(8, 6, 3, rng);
  const auto coarse = gaussian_image(4, 3, 3, rng);
  const auto down = downsample(fine, 2);
  const auto up = downsample_adjoint(coarse, 2);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < down.size(); ++i) lhs += down[i] * coarse[i];
  for (std::size_t i = 0; i < fine.size(); ++i) rhs += fine[i] * up[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
  EXPECT_EQ(downsample(fine, 1), fine);
  EXPECT_THROW(downsample(fine, 5), DimensionError);
}
