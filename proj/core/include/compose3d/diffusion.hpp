#pragma once

#include <vector>

#include "compose3d/image.hpp"

namespace compose3d {

class Denoiser;
struct ConditionId;

enum class ScheduleKind { linear };

/// Precomputed DDPM variance schedule. Index t runs 1..T for beta and alpha;
/// alpha_bar additionally carries alpha_bar(0) = 1.
class VarianceSchedule {
 public:
  VarianceSchedule() = default;

  int steps() const noexcept { return steps_; }
  double beta(int t) const;
  double alpha(int t) const;
  double alpha_bar(int t) const;

  friend VarianceSchedule build_schedule(int, double, double, ScheduleKind);
  /// Explicit per-step betas, mostly for tests. betas[0] is beta_1.
  friend VarianceSchedule schedule_from_betas(std::vector<double> betas);

 private:
  void check_step(int t, int lowest) const;

  int steps_ = 0;
  std::vector<double> beta_;       // [0] unused
  std::vector<double> alpha_;      // [0] unused
  std::vector<double> alpha_bar_;  // [0] == 1
};

/// Linear betas from beta_start to beta_end inclusive. Throws ConfigError
/// naming the offending field.
VarianceSchedule build_schedule(int steps = 1000, double beta_start = 1e-4,
                                double beta_end = 0.02,
                                ScheduleKind kind = ScheduleKind::linear);
VarianceSchedule schedule_from_betas(std::vector<double> betas);

struct GuidanceConfig {
  double scale = 7.5;
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
ImageTensor forward_diffuse(const ImageTensor& x0, int t, const ImageTensor& eps,
                            const VarianceSchedule& sched);

/// Guided estimate from already evaluated unconditional and conditional
/// predictions. Written as (1 - s) * uncond + s * cond so that s = 0 and
/// s = 1 reproduce the inputs bit-exactly.
ImageTensor guide(const ImageTensor& uncond, const ImageTensor& cond, double scale);

/// Negated guidance: uncond + s * (cond - negated).
ImageTensor guide_negated(const ImageTensor& uncond, const ImageTensor& cond,
                          const ImageTensor& negated, double scale);

/// Classifier-free guidance with one batched call for {unconditional, y}.
ImageTensor cfg_predict(const Denoiser& denoiser, const ImageTensor& x_t, int t,
                        const ConditionId& y, double scale);

/// Concept negation. With y_n unconditional this is cfg_predict.
ImageTensor negated_predict(const Denoiser& denoiser, const ImageTensor& x_t, int t,
                            const ConditionId& y, const ConditionId& y_n,
                            double scale);

enum class NoiseCoefficient {
  /// (1 - abar_{t-1}) / (1 - abar_t) * beta_t, the coefficient as usually
  /// printed for this update.
  as_printed,
  /// Square root of the same quantity (the posterior standard deviation).
  posterior_sqrt,
};

/// Stochastic reverse step:
///   x_{t-1} = x_t - (1 - alpha_t) / sqrt(1 - abar_t) * eps_hat + c_t * noise.
/// c_t vanishes at t = 1 because abar_0 = 1.
ImageTensor ddpm_update(const ImageTensor& x_t, const ImageTensor& eps_hat, int t,
                        const VarianceSchedule& sched, const ImageTensor& noise,
                        NoiseCoefficient coefficient = NoiseCoefficient::as_printed);

/// Deterministic (eta = 0) reverse step through the predicted x0.
ImageTensor deterministic_update(const ImageTensor& x_t, const ImageTensor& eps_hat,
                                 int t, const VarianceSchedule& sched);

}  // namespace compose3d
