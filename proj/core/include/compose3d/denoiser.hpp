#pragma once

#include <compare>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "compose3d/diffusion.hpp"
#include "compose3d/image.hpp"

namespace compose3d {

enum class ViewBin { none, overhead, front, side, backside };

std::string_view to_string(ViewBin bin);
/// Prompt prefix for a view bin ("front view of", ...); empty for none.
std::string_view view_prefix(ViewBin bin);

/// Condition handed to a denoiser. Prompt 0 is the unconditional condition.
struct ConditionId {
  int prompt_index = 0;
  ViewBin view = ViewBin::none;
  // Prompt decorations. Analytic priors ignore text; these only travel with
  // the condition for logging.
  bool zoomed_out = false;
  bool highly_detailed = false;

  static ConditionId unconditional() { return {}; }
  bool is_unconditional() const noexcept { return prompt_index == 0; }

  bool operator==(const ConditionId&) const = default;
  auto operator<=>(const ConditionId&) const = default;
};

/// Text form of a condition, e.g. "a zoomed out photo of front view of a red
/// box, highly detailed".
std::string describe(const ConditionId& cond, std::string_view prompt_text);

/// Noise predictor eps(x_t, t, y).
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual bool has_condition(const ConditionId& cond) const = 0;
  virtual ImageTensor denoise(const ImageTensor& x_t, int t,
                              const ConditionId& cond) const = 0;
  /// Element i equals denoise(x_t, t, conds[i]) exactly. Fails as a whole if
  /// any condition is unknown. The default loops over denoise.
  virtual std::vector<ImageTensor> denoise_batch(
      const ImageTensor& x_t, int t, std::span<const ConditionId> conds) const;

 protected:
  void require_conditions(std::span<const ConditionId> conds) const;
};

/// Optimal denoiser for a data distribution that is a single image per
/// condition: eps_hat = (x_t - sqrt(abar_t) mu) / sqrt(1 - abar_t).
///
/// A (prompt, view) pair without its own target falls back to the target
/// registered for (prompt, none).
class PointMassPrior : public Denoiser {
 public:
  PointMassPrior(VarianceSchedule sched, int height, int width, int channels);

  void set_target(const ConditionId& cond, ImageTensor target);
  const ImageTensor& target(const ConditionId& cond) const;

  bool has_condition(const ConditionId& cond) const override;
  ImageTensor denoise(const ImageTensor& x_t, int t,
                      const ConditionId& cond) const override;
  std::vector<ImageTensor> denoise_batch(
      const ImageTensor& x_t, int t, std::span<const ConditionId> conds) const override;

  const VarianceSchedule& schedule() const noexcept { return sched_; }

 private:
  const ImageTensor* find(const ConditionId& cond) const;

  VarianceSchedule sched_;
  int height_, width_, channels_;
  std::map<std::pair<int, ViewBin>, ImageTensor> targets_;
};

/// Optimal denoiser for data ~ N(mu, sigma^2 I) per condition.
class GaussianPrior : public Denoiser {
 public:
  GaussianPrior(VarianceSchedule sched, int height, int width, int channels);

  /// variance must be > 0.
  void set_target(const ConditionId& cond, ImageTensor mean, double variance);

  bool has_condition(const ConditionId& cond) const override;
  ImageTensor denoise(const ImageTensor& x_t, int t,
                      const ConditionId& cond) const override;

 private:
  struct Entry {
    ImageTensor mean;
    double variance;
  };
  const Entry* find(const ConditionId& cond) const;

  VarianceSchedule sched_;
  int height_, width_, channels_;
  std::map<std::pair<int, ViewBin>, Entry> entries_;
};

}  // namespace compose3d
