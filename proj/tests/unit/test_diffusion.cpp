#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "compose3d/denoiser.hpp"
#include "compose3d/diffusion.hpp"
#include "compose3d/errors.hpp"
#include "oracles.hpp"

using namespace compose3d;

namespace {

ImageTensor constant(double v) { return ImageTensor(2, 3, 3, v); }

/// Denoiser returning fixed images per condition, for guidance arithmetic.
class TableDenoiser : public Denoiser {
 public:
  std::map<int, ImageTensor> table;
  mutable int batch_calls = 0;
  mutable int evaluations = 0;

  bool has_condition(const ConditionId& c) const override { return table.contains(c.prompt_index); }
  ImageTensor denoise(const ImageTensor&, int, const ConditionId& c) const override {
    ++evaluations;
    auto it = table.find(c.prompt_index);
    if (it == table.end()) throw ConditionNotFound("unknown");
    return it->second;
  }
  std::vector<ImageTensor> denoise_batch(const ImageTensor& x, int t,
                                         std::span<const ConditionId> conds) const override {
    ++batch_calls;
    return Denoiser::denoise_batch(x, t, conds);
  }
};

}  // namespace

TEST(Schedule, SingleStep) {
  const auto s = build_schedule(1, 0.1, 0.1);
  EXPECT_DOUBLE_EQ(s.alpha_bar(1), 0.9);
  EXPECT_EQ(s.alpha_bar(0), 1.0);
}

TEST(Schedule, TwoStepProduct) {
  const auto s = build_schedule(2, 0.1, 0.2);
  EXPECT_NEAR(s.beta(1), 0.1, 1e-15);
  EXPECT_NEAR(s.beta(2), 0.2, 1e-15);
  EXPECT_NEAR(s.alpha_bar(2), 0.72, 1e-15);
}

TEST(Schedule, DefaultMatchesIndependentProduct) {
  const auto s = build_schedule();
  const auto ab = oracle::linear_alpha_bar(1000, 1e-4, 0.02);
  for (int t = 1; t <= 1000; ++t) {
    EXPECT_NEAR(s.alpha_bar(t), ab[t], 1e-12);
    EXPECT_LT(s.alpha_bar(t), s.alpha_bar(t - 1));
    EXPECT_NEAR(s.alpha_bar(t) / s.alpha_bar(t - 1), s.alpha(t), 1e-12 * s.alpha(t));
  }
  EXPECT_LT(s.alpha_bar(1000), 1e-4);
}

TEST(Schedule, InvalidFieldsAreNamed) {
  auto field_of = [](auto&& f) {
    try {
      f();
    } catch (const ConfigError& e) {
      return e.field();
    }
    return std::string("none");
  };
  EXPECT_EQ(field_of([] { build_schedule(0); }), "T");
  EXPECT_EQ(field_of([] { build_schedule(10, 0.0, 0.02); }), "beta_start");
  EXPECT_EQ(field_of([] { build_schedule(10, 0.03, 0.02); }), "beta_end");
  EXPECT_EQ(field_of([] { build_schedule(10, 1e-4, 1.0); }), "beta_end");
}

TEST(Schedule, OutOfRangeStep) {
  const auto s = build_schedule(10);
  EXPECT_THROW(s.beta(0), RangeError);
  EXPECT_THROW(s.beta(11), RangeError);
  EXPECT_THROW(s.alpha_bar(-1), RangeError);
}

TEST(ForwardDiffuse, ZeroSignal) {
  const auto s = build_schedule();
  std::mt19937_64 rng(1);
  const ImageTensor eps = gaussian_image(3, 4, 3, rng);
  const ImageTensor x = forward_diffuse(ImageTensor(3, 4, 3, 0.0), 300, eps, s);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(x[i], std::sqrt(1.0 - s.alpha_bar(300)) * eps[i]);
  }
}

TEST(ForwardDiffuse, HandValue) {
  const auto s = build_schedule(2, 0.1, 0.2);
  const ImageTensor x = forward_diffuse(constant(1.0), 2, constant(0.5), s);
  EXPECT_NEAR(x[0], 1.113103, 1e-6);
}

TEST(ForwardDiffuse, ShapeMismatch) {
  const auto s = build_schedule(2, 0.1, 0.2);
  EXPECT_THROW(forward_diffuse(ImageTensor(2, 2, 3), 1, ImageTensor(2, 3, 3), s), DimensionError);
}

TEST(Guidance, CfgExamples) {
  TableDenoiser d;
  d.table[0] = constant(0.1);
  d.table[1] = constant(0.3);
  const ImageTensor x = constant(0.0);
  EXPECT_NEAR(cfg_predict(d, x, 1, {1}, 2.0)[0], 0.5, 1e-15);
  EXPECT_EQ(cfg_predict(d, x, 1, {1}, 1.0), d.table[1]);
  EXPECT_EQ(cfg_predict(d, x, 1, {1}, 0.0), d.table[0]);
}

TEST(Guidance, CfgUsesOneBatchOfTwo) {
  TableDenoiser d;
  d.table[0] = constant(0.1);
  d.table[1] = constant(0.3);
  cfg_predict(d, constant(0.0), 1, {1}, 7.5);
  EXPECT_EQ(d.batch_calls, 1);
  EXPECT_EQ(d.evaluations, 2);
}

TEST(Guidance, CfgIsAffineInScale) {
  const auto s = build_schedule(100);
  PointMassPrior prior(s, 4, 4, 3);
  std::mt19937_64 rng(3);
  prior.set_target({0}, gaussian_image(4, 4, 3, rng));
  prior.set_target({1}, gaussian_image(4, 4, 3, rng));
  const ImageTensor x = gaussian_image(4, 4, 3, rng);
  const auto o0 = cfg_predict(prior, x, 40, {1}, 0.0);
  const auto o1 = cfg_predict(prior, x, 40, {1}, 1.0);
  for (double scale : {-2.0, 0.5, 7.5, 100.0}) {
    const auto o = cfg_predict(prior, x, 40, {1}, scale);
    for (std::size_t i = 0; i < o.size(); ++i) {
      EXPECT_NEAR(o[i], o0[i] + scale * (o1[i] - o0[i]), 1e-12 * (1.0 + std::abs(scale)));
    }
  }
}

TEST(Guidance, UnknownCondition) {
  TableDenoiser d;
  d.table[0] = constant(0.1);
  EXPECT_THROW(cfg_predict(d, constant(0.0), 1, {4}, 2.0), ConditionNotFound);
}

TEST(Negation, Examples) {
  TableDenoiser d;
  d.table[0] = constant(0.0);
  d.table[1] = constant(0.4);
  d.table[2] = constant(0.1);
  const ImageTensor x = constant(0.0);
  EXPECT_NEAR(negated_predict(d, x, 1, {1}, {2}, 2.0)[0], 0.6, 1e-15);
  EXPECT_EQ(negated_predict(d, x, 1, {1}, {}, 3.0), cfg_predict(d, x, 1, {1}, 3.0));
  EXPECT_EQ(negated_predict(d, x, 1, {1}, {1}, 42.0), d.table[0]);
}

TEST(DdpmUpdate, HandValue) {
  const auto s = build_schedule(2, 0.1, 0.2);
  const auto x = ddpm_update(constant(1.0), constant(0.5), 2, s, constant(0.0));
  EXPECT_NEAR(x[0], 1.0 - (0.2 / std::sqrt(0.28)) * 0.5, 1e-15);
  EXPECT_NEAR(x[0], 0.8110178, 1e-7);
}

TEST(DdpmUpdate, NoiseCoefficients) {
  const auto s = build_schedule(2, 0.1, 0.2);
  const double printed = (1.0 - 0.9) / (1.0 - 0.72) * 0.2;
  const auto a = ddpm_update(constant(0.0), constant(0.0), 2, s, constant(1.0));
  const auto b = ddpm_update(constant(0.0), constant(0.0), 2, s, constant(1.0),
                             NoiseCoefficient::posterior_sqrt);
  EXPECT_NEAR(a[0], printed, 1e-15);
  EXPECT_NEAR(b[0], std::sqrt(printed), 1e-15);
}

TEST(DdpmUpdate, FinalStepIgnoresNoise) {
  const auto s = build_schedule(10);
  std::mt19937_64 rng(4);
  const auto x = gaussian_image(2, 2, 3, rng);
  const auto e = gaussian_image(2, 2, 3, rng);
  for (auto c : {NoiseCoefficient::as_printed, NoiseCoefficient::posterior_sqrt}) {
    EXPECT_EQ(ddpm_update(x, e, 1, s, gaussian_image(2, 2, 3, rng), c),
              ddpm_update(x, e, 1, s, ImageTensor(2, 2, 3, 0.0), c));
  }
}

TEST(DdpmUpdate, NoOp) {
  const auto s = build_schedule(10);
  EXPECT_EQ(ddpm_update(constant(0.7), constant(0.0), 5, s, constant(0.0)), constant(0.7));
  EXPECT_THROW(ddpm_update(constant(0.7), constant(0.0), 11, s, constant(0.0)), RangeError);
  EXPECT_THROW(ddpm_update(constant(0.7), constant(0.0), 0, s, constant(0.0)), RangeError);
}

TEST(DeterministicUpdate, Rescaling) {
  const auto s = build_schedule(10);
  const auto x = deterministic_update(constant(0.7), constant(0.0), 6, s);
  EXPECT_NEAR(x[0], std::sqrt(s.alpha_bar(5)) / std::sqrt(s.alpha_bar(6)) * 0.7, 1e-15);
}

TEST(DeterministicUpdate, FixedPointTrajectory) {
  const auto s = build_schedule(20);
  const double mu = 0.3, c = -0.8;
  for (int t = 20; t >= 1; --t) {
    const ImageTensor xt = constant(std::sqrt(s.alpha_bar(t)) * mu + std::sqrt(1 - s.alpha_bar(t)) * c);
    const auto x = deterministic_update(xt, constant(c), t, s);
    EXPECT_NEAR(x[0], std::sqrt(s.alpha_bar(t - 1)) * mu + std::sqrt(1 - s.alpha_bar(t - 1)) * c,
                1e-12);
  }
}

TEST(DeterministicUpdate, PointMassRolloutReachesTarget) {
  const auto s = build_schedule();
  PointMassPrior prior(s, 3, 3, 3);
  std::mt19937_64 rng(9);
  const auto mu = gaussian_image(3, 3, 3, rng);
  prior.set_target({1}, mu);
  auto x = gaussian_image(3, 3, 3, rng);
  for (int t = 1000; t >= 1; --t) x = deterministic_update(x, prior.denoise(x, t, {1}), t, s);
  EXPECT_LT(max_abs_diff(x, mu), 1e-6);
}
