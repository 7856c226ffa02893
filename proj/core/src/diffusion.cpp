#include "compose3d/diffusion.hpp"

#include <array>
#include <cmath>
#include <string>

#include "compose3d/denoiser.hpp"
#include "compose3d/errors.hpp"

namespace compose3d {


double VarianceSchedule::beta(int t) const {
  check_step(t, 1);
  return beta_[t];
}

double VarianceSchedule::alpha(int t) const {
  check_step(t, 1);
  return alpha_[t];
}

double VarianceSchedule::alpha_bar(int t) const {
  check_step(t, 0);
  return alpha_bar_[t];
}

void VarianceSchedule::check_step(int t, int lowest) const {
  if (t < lowest || t > steps_) {
    throw RangeError("diffusion step " + std::to_string(t) + " outside [" +
                     std::to_string(lowest) + ", " + std::to_string(steps_) + "]");
  }
}

VarianceSchedule schedule_from_betas(std::vector<double> betas) {
  if (betas.empty()) throw ConfigError("T", "schedule needs at least one step");
  for (std::size_t i = 0; i < betas.size(); ++i) {
    if (!(betas[i] > 0.0 && betas[i] < 1.0)) {
      throw ConfigError("beta", "beta_" + std::to_string(i + 1) + " must lie in (0, 1)");
    }
  }
  VarianceSchedule s;
  s.steps_ = static_cast<int>(betas.size());
  s.beta_.assign(betas.size() + 1, 0.0);
  s.alpha_.assign(betas.size() + 1, 1.0);
  s.alpha_bar_.assign(betas.size() + 1, 1.0);
  for (int t = 1; t <= s.steps_; ++t) {
    s.beta_[t] = betas[t - 1];
    s.alpha_[t] = 1.0 - s.beta_[t];
    s.alpha_bar_[t] = s.alpha_bar_[t - 1] * s.alpha_[t];
  }
  return s;
}

VarianceSchedule build_schedule(int steps, double beta_start, double beta_end,
                                ScheduleKind kind) {
  if (steps < 1) throw ConfigError("T", "must be at least 1, got " + std::to_string(steps));
  if (!(beta_start > 0.0)) throw ConfigError("beta_start", "must be positive");
  if (!(beta_end < 1.0)) throw ConfigError("beta_end", "must be below 1");
  if (!(beta_start <= beta_end)) {
    throw ConfigError("beta_end", "must not be smaller than beta_start");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  switch (kind) {
    case ScheduleKind::linear:
      for (int i = 0; i < steps; ++i) {
        const double f = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        betas[i] = beta_start + f * (beta_end - beta_start);
      }
      break;
  }
  return schedule_from_betas(std::move(betas));
}

ImageTensor forward_diffuse(const ImageTensor& x0, int t, const ImageTensor& eps,
                            const VarianceSchedule& sched) {
  require_same_shape(x0, eps, "forward_diffuse");
  if (t < 1 || t > sched.steps()) {
    throw RangeError("forward_diffuse: step " + std::to_string(t) + " out of range");
  }
  const double ab = sched.alpha_bar(t);
  const double signal = std::sqrt(ab);
  const double noise = std::sqrt(1.0 - ab);
  ImageTensor out(x0.height(), x0.width(), x0.channels());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = signal * x0[i] + noise * eps[i];
  return out;
}

ImageTensor guide(const ImageTensor& uncond, const ImageTensor& cond, double scale) {
  require_same_shape(uncond, cond, "guide");
  ImageTensor out(uncond.height(), uncond.width(), uncond.channels());
  const double keep = 1.0 - scale;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * uncond[i] + scale * cond[i];
  return out;
}

ImageTensor guide_negated(const ImageTensor& uncond, const ImageTensor& cond,
                          const ImageTensor& negated, double scale) {
  require_same_shape(uncond, cond, "guide_negated");
  require_same_shape(uncond, negated, "guide_negated");
  ImageTensor out(uncond.height(), uncond.width(), uncond.channels());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = uncond[i] + scale * (cond[i] - negated[i]);
  }
  return out;
}

ImageTensor cfg_predict(const Denoiser& denoiser, const ImageTensor& x_t, int t,
                        const ConditionId& y, double scale) {
  const std::array<ConditionId, 2> conds{ConditionId::unconditional(), y};
  auto preds = denoiser.denoise_batch(x_t, t, conds);
  return guide(preds[0], preds[1], scale);
}

ImageTensor negated_predict(const Denoiser& denoiser, const ImageTensor& x_t, int t,
                            const ConditionId& y, const ConditionId& y_n, double scale) {
  if (y_n.is_unconditional()) return cfg_predict(denoiser, x_t, t, y, scale);
  const std::array<ConditionId, 3> conds{ConditionId::unconditional(), y, y_n};
  auto preds = denoiser.denoise_batch(x_t, t, conds);
  return guide_negated(preds[0], preds[1], preds[2], scale);
}

ImageTensor ddpm_update(const ImageTensor& x_t, const ImageTensor& eps_hat, int t,
                        const VarianceSchedule& sched, const ImageTensor& noise,
                        NoiseCoefficient coefficient) {
  require_same_shape(x_t, eps_hat, "ddpm_update");
  require_same_shape(x_t, noise, "ddpm_update");
  if (t < 1 || t > sched.steps()) {
    throw RangeError("ddpm_update: step " + std::to_string(t) + " out of range");
  }
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t - 1);
  const double eps_coef = (1.0 - sched.alpha(t)) / std::sqrt(1.0 - ab);
  double noise_coef = (1.0 - ab_prev) / (1.0 - ab) * sched.beta(t);
  if (coefficient == NoiseCoefficient::posterior_sqrt) noise_coef = std::sqrt(noise_coef);
  ImageTensor out(x_t.height(), x_t.width(), x_t.channels());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = x_t[i] - eps_coef * eps_hat[i] + noise_coef * noise[i];
  }
  return out;
}

ImageTensor deterministic_update(const ImageTensor& x_t, const ImageTensor& eps_hat, int t,
                                 const VarianceSchedule& sched) {
  require_same_shape(x_t, eps_hat, "deterministic_update");
  if (t < 1 || t > sched.steps()) {
    throw RangeError("deterministic_update: step " + std::to_string(t) + " out of range");
  }
  const double ab = sched.alpha_bar(t);
  const double ab_prev = sched.alpha_bar(t - 1);
  const double sqrt_ab = std::sqrt(ab);
  const double sqrt_1mab = std::sqrt(1.0 - ab);
  const double sqrt_ab_prev = std::sqrt(ab_prev);
  const double sqrt_1mab_prev = std::sqrt(1.0 - ab_prev);
  ImageTensor out(x_t.height(), x_t.width(), x_t.channels());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x0_hat = (x_t[i] - sqrt_1mab * eps_hat[i]) / sqrt_ab;
    out[i] = sqrt_ab_prev * x0_hat + sqrt_1mab_prev * eps_hat[i];
  }
  return out;
}

}  // namespace compose3d
