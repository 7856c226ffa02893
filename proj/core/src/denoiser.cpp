#include "compose3d/denoiser.hpp"

#include <cmath>
#include <string>

#include "compose3d/errors.hpp"

namespace compose3d {

std::string_view to_string(ViewBin bin) {
  switch (bin) {
    case ViewBin::none: return "none";
    case ViewBin::overhead: return "overhead";
    case ViewBin::front: return "front";
    case ViewBin::side: return "side";
    case ViewBin::backside: return "backside";
  }
  return "none";
}

std::string_view view_prefix(ViewBin bin) {
  switch (bin) {
    case ViewBin::none: return "";
    case ViewBin::overhead: return "overhead view of";
    case ViewBin::front: return "front view of";
    case ViewBin::side: return "side view of";
    case ViewBin::backside: return "backside view of";
  }
  return "";
}

std::string describe(const ConditionId& cond, std::string_view prompt_text) {
  if (cond.is_unconditional()) return "";
  std::string out;
  if (cond.zoomed_out) out += "a zoomed out photo of ";
  if (cond.view != ViewBin::none) {
    out += view_prefix(cond.view);
    out += ' ';
  }
  out += prompt_text;
  if (cond.highly_detailed) out += ", highly detailed";
  return out;
}

namespace {

std::string name_of(const ConditionId& cond) {
  std::string s = "condition " + std::to_string(cond.prompt_index);
  if (cond.view != ViewBin::none) s += " (" + std::string(to_string(cond.view)) + ")";
  return s;
}

void check_input(const ImageTensor& x_t, int height, int width, int channels) {
  if (x_t.height() != height || x_t.width() != width || x_t.channels() != channels) {
    throw DimensionError("denoiser input shape does not match the registered targets");
  }
}

void check_step(int t, const VarianceSchedule& sched) {
  if (t < 1 || t > sched.steps()) {
    throw RangeError("denoiser step " + std::to_string(t) + " out of range");
  }
}

template <typename Map>
auto lookup(const Map& map, const ConditionId& cond) -> decltype(&map.begin()->second) {
  if (auto it = map.find({cond.prompt_index, cond.view}); it != map.end()) return &it->second;
  if (cond.view != ViewBin::none) {
    if (auto it = map.find({cond.prompt_index, ViewBin::none}); it != map.end()) {
      return &it->second;
    }
  }
  return nullptr;
}

}  // namespace

void Denoiser::require_conditions(std::span<const ConditionId> conds) const {
  for (const auto& c : conds) {
    if (!has_condition(c)) throw ConditionNotFound(name_of(c) + " is not registered");
  }
}

std::vector<ImageTensor> Denoiser::denoise_batch(const ImageTensor& x_t, int t,
                                                 std::span<const ConditionId> conds) const {
  require_conditions(conds);
  std::vector<ImageTensor> out;
  out.reserve(conds.size());
  for (const auto& c : conds) out.push_back(denoise(x_t, t, c));
  return out;
}

PointMassPrior::PointMassPrior(VarianceSchedule sched, int height, int width, int channels)
    : sched_(std::move(sched)), height_(height), width_(width), channels_(channels) {}

void PointMassPrior::set_target(const ConditionId& cond, ImageTensor target) {
  if (target.height() != height_ || target.width() != width_ || target.channels() != channels_) {
    throw DimensionError("target for " + name_of(cond) + " has the wrong shape");
  }
  targets_.insert_or_assign({cond.prompt_index, cond.view}, std::move(target));
}

const ImageTensor* PointMassPrior::find(const ConditionId& cond) const {
  return lookup(targets_, cond);
}

const ImageTensor& PointMassPrior::target(const ConditionId& cond) const {
  const ImageTensor* mu = find(cond);
  if (mu == nullptr) throw ConditionNotFound(name_of(cond) + " is not registered");
  return *mu;
}

bool PointMassPrior::has_condition(const ConditionId& cond) const {
  return find(cond) != nullptr;
}

ImageTensor PointMassPrior::denoise(const ImageTensor& x_t, int t,
                                    const ConditionId& cond) const {
  const ImageTensor& mu = target(cond);
  check_input(x_t, height_, width_, channels_);
  check_step(t, sched_);
  const double ab = sched_.alpha_bar(t);
  const double sqrt_ab = std::sqrt(ab);
  const double sqrt_1mab = std::sqrt(1.0 - ab);
  ImageTensor out(height_, width_, channels_);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - sqrt_ab * mu[i]) / sqrt_1mab;
  return out;
}

std::vector<ImageTensor> PointMassPrior::denoise_batch(
    const ImageTensor& x_t, int t, std::span<const ConditionId> conds) const {
  require_conditions(conds);
  check_input(x_t, height_, width_, channels_);
  check_step(t, sched_);
  const double ab = sched_.alpha_bar(t);
  const double sqrt_ab = std::sqrt(ab);
  const double sqrt_1mab = std::sqrt(1.0 - ab);

  std::vector<const ImageTensor*> mus;
  std::vector<ImageTensor> out;
  mus.reserve(conds.size());
  out.reserve(conds.size());
  for (const auto& c : conds) {
    mus.push_back(find(c));
    out.emplace_back(height_, width_, channels_);
  }
  // One sweep over x_t for the whole batch.
  for (std::size_t i = 0; i < x_t.size(); ++i) {
    const double x = x_t[i];
    for (std::size_t k = 0; k < conds.size(); ++k) {
      out[k][i] = (x - sqrt_ab * (*mus[k])[i]) / sqrt_1mab;
    }
  }
  return out;
}

GaussianPrior::GaussianPrior(VarianceSchedule sched, int height, int width, int channels)
    : sched_(std::move(sched)), height_(height), width_(width), channels_(channels) {}

void GaussianPrior::set_target(const ConditionId& cond, ImageTensor mean, double variance) {
  if (!(variance > 0.0) || !std::isfinite(variance)) {
    throw ConfigError("variance", "must be positive and finite for " + name_of(cond));
  }
  if (mean.height() != height_ || mean.width() != width_ || mean.channels() != channels_) {
    throw DimensionError("mean for " + name_of(cond) + " has the wrong shape");
  }
  entries_.insert_or_assign({cond.prompt_index, cond.view}, Entry{std::move(mean), variance});
}

const GaussianPrior::Entry* GaussianPrior::find(const ConditionId& cond) const {
  return lookup(entries_, cond);
}

bool GaussianPrior::has_condition(const ConditionId& cond) const {
  return find(cond) != nullptr;
}

ImageTensor GaussianPrior::denoise(const ImageTensor& x_t, int t,
                                   const ConditionId& cond) const {
  const Entry* e = find(cond);
  if (e == nullptr) throw ConditionNotFound(name_of(cond) + " is not registered");
  check_input(x_t, height_, width_, channels_);
  check_step(t, sched_);
  const double ab = sched_.alpha_bar(t);
  const double sqrt_ab = std::sqrt(ab);
  const double sqrt_1mab = std::sqrt(1.0 - ab);
  const double marginal_var = ab * e->variance + (1.0 - ab);
  ImageTensor out(height_, width_, channels_);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = sqrt_1mab * (x_t[i] - sqrt_ab * e->mean[i]) / marginal_var;
  }
  return out;
}

}  // namespace compose3d
