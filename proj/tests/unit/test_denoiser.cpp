#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "compose3d/denoiser.hpp"
#include "compose3d/errors.hpp"

using namespace compose3d;

namespace {

VarianceSchedule two_step() { return build_schedule(2, 0.1, 0.2); }  // abar_2 = 0.72

}  // namespace

TEST(ConditionText, Describe) {
  ConditionId c{1, ViewBin::front, true, true};
  EXPECT_EQ(describe(c, "a red box"), "a zoomed out photo of front view of a red box, highly detailed");
  EXPECT_EQ(describe({1}, "a red box"), "a red box");
  EXPECT_EQ(view_prefix(ViewBin::overhead), "overhead view of");
  EXPECT_EQ(view_prefix(ViewBin::none), "");
}

TEST(PointMass, NoiselessInputGivesZero) {
  const auto s = build_schedule();
  PointMassPrior prior(s, 2, 2, 3);
  std::mt19937_64 rng(1);
  const auto mu = gaussian_image(2, 2, 3, rng);
  prior.set_target({1}, mu);
  ImageTensor x(2, 2, 3);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sqrt(s.alpha_bar(400)) * mu[i];
  const auto eps_hat = prior.denoise(x, 400, {1});
  for (double v : eps_hat.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(PointMass, InvertsForwardDiffusion) {
  const auto s = build_schedule();
  PointMassPrior prior(s, 4, 4, 3);
  std::mt19937_64 rng(2);
  const auto mu = gaussian_image(4, 4, 3, rng);
  prior.set_target({1}, mu);
  for (int t : {1, 20, 500, 1000}) {
    const auto eps = gaussian_image(4, 4, 3, rng);
    const auto eps_hat = prior.denoise(forward_diffuse(mu, t, eps, s), t, {1});
    EXPECT_LT(max_abs_diff(eps_hat, eps), 1e-12 * (t == 1 ? 1e2 : 1.0));
  }
}

TEST(PointMass, HandValue) {
  PointMassPrior prior(two_step(), 1, 1, 1);
  prior.set_target({1}, ImageTensor(1, 1, 1, 1.0));
  const double x = std::sqrt(0.72) + std::sqrt(0.28) * 0.5;
  EXPECT_NEAR(prior.denoise(ImageTensor(1, 1, 1, x), 2, {1})[0], 0.5, 1e-12);
}

TEST(PointMass, ViewFallback) {
  PointMassPrior prior(two_step(), 1, 1, 1);
  prior.set_target({1}, ImageTensor(1, 1, 1, 1.0));
  prior.set_target({1, ViewBin::side}, ImageTensor(1, 1, 1, -1.0));
  EXPECT_EQ(prior.target({1, ViewBin::front})[0], 1.0);
  EXPECT_EQ(prior.target({1, ViewBin::side})[0], -1.0);
  EXPECT_TRUE(prior.has_condition({1, ViewBin::overhead}));
  EXPECT_FALSE(prior.has_condition({2}));
}

TEST(PointMass, Errors) {
  PointMassPrior prior(two_step(), 2, 2, 3);
  EXPECT_THROW(prior.set_target({1}, ImageTensor(2, 3, 3)), DimensionError);
  EXPECT_THROW(prior.denoise(ImageTensor(2, 2, 3), 1, {1}), ConditionNotFound);
  prior.set_target({1}, ImageTensor(2, 2, 3));
  EXPECT_THROW(prior.denoise(ImageTensor(2, 2, 1), 1, {1}), DimensionError);
  EXPECT_THROW(prior.denoise(ImageTensor(2, 2, 3), 3, {1}), RangeError);
}

TEST(Gaussian, HandValue) {
  GaussianPrior prior(two_step(), 1, 1, 1);
  prior.set_target({1}, ImageTensor(1, 1, 1, 0.0), 1.0);
  EXPECT_NEAR(prior.denoise(ImageTensor(1, 1, 1, 1.0), 2, {1})[0], std::sqrt(0.28), 1e-12);
  EXPECT_NEAR(std::sqrt(0.28), 0.529150, 1e-6);
}

TEST(Gaussian, AtTheMeanGivesZero) {
  const auto s = build_schedule();
  GaussianPrior prior(s, 2, 2, 3);
  std::mt19937_64 rng(5);
  const auto mu = gaussian_image(2, 2, 3, rng);
  prior.set_target({1}, mu, 0.3);
  ImageTensor x(2, 2, 3);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sqrt(s.alpha_bar(77)) * mu[i];
  const auto eps_hat = prior.denoise(x, 77, {1});
  for (double v : eps_hat.data()) EXPECT_NEAR(v, 0.0, 1e-12);
}

TEST(Gaussian, SmallVarianceApproachesPointMass) {
  const auto s = build_schedule();
  GaussianPrior g(s, 2, 2, 3);
  PointMassPrior p(s, 2, 2, 3);
  std::mt19937_64 rng(6);
  const auto mu = gaussian_image(2, 2, 3, rng);
  g.set_target({1}, mu, 1e-12);
  p.set_target({1}, mu);
  const auto x = gaussian_image(2, 2, 3, rng);
  EXPECT_LT(max_abs_diff(g.denoise(x, 300, {1}), p.denoise(x, 300, {1})), 1e-9);
  EXPECT_THROW(g.set_target({2}, mu, 0.0), ConfigError);
}

TEST(Batch, MatchesSequentialCalls) {
  const auto s = build_schedule();
  PointMassPrior prior(s, 3, 3, 3);
  GaussianPrior gauss(s, 3, 3, 3);
  std::mt19937_64 rng(7);
  for (int p = 0; p <= 2; ++p) {
    const auto mu = gaussian_image(3, 3, 3, rng);
    prior.set_target({p}, mu);
    gauss.set_target({p}, mu, 0.1 * (p + 1));
  }
  const auto x = gaussian_image(3, 3, 3, rng);
  const std::vector<ConditionId> conds{{0}, {1}, {2}, {1}};
  for (const Denoiser* d : {static_cast<const Denoiser*>(&prior), static_cast<const Denoiser*>(&gauss)}) {
    const auto batch = d->denoise_batch(x, 250, conds);
    ASSERT_EQ(batch.size(), conds.size());
    for (std::size_t i = 0; i < conds.size(); ++i) EXPECT_EQ(batch[i], d->denoise(x, 250, conds[i]));
    EXPECT_EQ(batch[1], batch[3]);
  }
}

TEST(Batch, UnknownConditionFailsWholeBatch) {
  PointMassPrior prior(build_schedule(), 1, 1, 1);
  prior.set_target({0}, ImageTensor(1, 1, 1));
  const std::vector<ConditionId> conds{{0}, {5}};
  EXPECT_THROW(prior.denoise_batch(ImageTensor(1, 1, 1), 3, conds), ConditionNotFound);
}

TEST(Priors, PixelSeparable) {
  const auto s = build_schedule();
  PointMassPrior prior(s, 4, 4, 3);
  GaussianPrior gauss(s, 4, 4, 3);
  std::mt19937_64 rng(8);
  const auto mu = gaussian_image(4, 4, 3, rng);
  prior.set_target({1}, mu);
  gauss.set_target({1}, mu, 0.2);
  auto x = gaussian_image(4, 4, 3, rng);
  for (const Denoiser* d : {static_cast<const Denoiser*>(&prior), static_cast<const Denoiser*>(&gauss)}) {
    const auto before = d->denoise(x, 100, {1});
    auto moved = x;
    moved.at(2, 1, 0) += 0.5;
    const auto after = d->denoise(moved, 100, {1});
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (i == (2u * 4u + 1u) * 3u) {
        EXPECT_NE(after[i], before[i]);
      } else {
        EXPECT_EQ(after[i], before[i]);
      }
    }
  }
}

TEST(PointMass, ZeroDenoisingLossOnOwnData) {
  const auto s = build_schedule();
  PointMassPrior prior(s, 3, 3, 3);
  std::mt19937_64 rng(10);
  const auto mu = gaussian_image(3, 3, 3, rng);
  prior.set_target({1}, mu);
  const auto eps = gaussian_image(3, 3, 3, rng);
  const auto eps_hat = prior.denoise(forward_diffuse(mu, 600, eps, s), 600, {1});
  double loss = 0.0;
  for (std::size_t i = 0; i < eps.size(); ++i) loss += (eps[i] - eps_hat[i]) * (eps[i] - eps_hat[i]);
  EXPECT_LT(loss, 1e-24);
}
