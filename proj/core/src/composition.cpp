#include "compose3d/composition.hpp"

#include <algorithm>
#include <string>

#include "compose3d/errors.hpp"

namespace compose3d {

SemanticMask::SemanticMask(int height, int width, int prompt_count, std::uint8_t fill)
    : SemanticMask(height, width, prompt_count,
                   std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(height, 0)) *
                                                 static_cast<std::size_t>(std::max(width, 0)),
                                             fill)) {}

SemanticMask::SemanticMask(int height, int width, int prompt_count,
                           std::vector<std::uint8_t> labels)
    : height_(height), width_(width), prompt_count_(prompt_count), labels_(std::move(labels)) {
  if (height <= 0 || width <= 0) throw DimensionError("mask dimensions must be positive");
  if (prompt_count < 0 || prompt_count > 255) {
    throw RangeError("mask prompt count must lie in [0, 255]");
  }
  if (labels_.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
    throw DimensionError("mask label count does not match its dimensions");
  }
  for (std::uint8_t l : labels_) {
    if (l > prompt_count) {
      throw RangeError("mask label " + std::to_string(l) + " exceeds prompt count " +
                       std::to_string(prompt_count));
    }
  }
}

void SemanticMask::set(int y, int x, int label) {
  if (label < 0 || label > prompt_count_) {
    throw RangeError("mask label " + std::to_string(label) + " out of range");
  }
  labels_[index(y, x)] = static_cast<std::uint8_t>(label);
}

std::size_t SemanticMask::count(int label) const {
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), label));
}

double PromptSet::scale(int label) const {
  if (!per_prompt_guidance.empty()) return per_prompt_guidance.at(label - 1);
  return guidance;
}

std::optional<ConditionId> PromptSet::negation(int label) const {
  if (static_cast<std::size_t>(label) > negations.size()) return std::nullopt;
  return negations[label - 1];
}

void PromptSet::enable_default_negation() {
  negations.assign(prompts.size(), ConditionId::unconditional());
  if (prompts.size() == 2) {
    negations[0] = prompts[1];
    negations[1] = prompts[0];
  }
}

ImageTensor indicator(const SemanticMask& mask, int label) {
  if (label < 0 || label > mask.prompt_count()) {
    throw RangeError("indicator label " + std::to_string(label) + " outside [0, " +
                     std::to_string(mask.prompt_count()) + "]");
  }
  ImageTensor out(mask.height(), mask.width(), 1);
  for (std::size_t j = 0; j < mask.size(); ++j) out[j] = mask[j] == label ? 1.0 : 0.0;
  return out;
}

ImageTensor compose_noise(std::span<const ImageTensor> preds, const SemanticMask& mask,
                          const ImageTensor* unassigned) {
  if (static_cast<int>(preds.size()) != mask.prompt_count()) {
    throw DimensionError("compose_noise: " + std::to_string(preds.size()) +
                         " predictions for " + std::to_string(mask.prompt_count()) +
                         " prompts");
  }
  if (preds.empty() && unassigned == nullptr) {
    throw DimensionError("compose_noise: nothing to compose");
  }
  const ImageTensor& ref = preds.empty() ? *unassigned : preds.front();
  if (ref.height() != mask.height() || ref.width() != mask.width()) {
    throw DimensionError("compose_noise: prediction and mask sizes differ");
  }
  for (const auto& p : preds) require_same_shape(ref, p, "compose_noise");
  if (unassigned != nullptr) require_same_shape(ref, *unassigned, "compose_noise");

  const int channels = ref.channels();
  ImageTensor out(ref.height(), ref.width(), channels);
  for (std::size_t j = 0; j < mask.size(); ++j) {
    const int label = mask[j];
    const ImageTensor* src = nullptr;
    if (label == 0) {
      if (unassigned == nullptr) {
        throw RangeError("compose_noise: pixel " + std::to_string(j) +
                         " is unassigned and no label-0 estimate was given");
      }
      src = unassigned;
    } else {
      src = &preds[label - 1];
    }
    const std::size_t base = j * channels;
    for (int c = 0; c < channels; ++c) out[base + c] = (*src)[base + c];
  }
  return out;
}

ImageTensor compose_global(std::span<const ImageTensor> preds, const ImageTensor& uncond,
                           std::span<const double> weights) {
  if (preds.size() != weights.size()) {
    throw DimensionError("compose_global: " + std::to_string(preds.size()) +
                         " predictions but " + std::to_string(weights.size()) + " weights");
  }
  for (const auto& p : preds) require_same_shape(uncond, p, "compose_global");
  double weight_sum = 0.0;
  for (double w : weights) weight_sum += w;
  ImageTensor out(uncond.height(), uncond.width(), uncond.channels());
  const double keep = 1.0 - weight_sum;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = keep * uncond[i];
  for (std::size_t k = 0; k < preds.size(); ++k) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[k] * preds[k][i];
  }
  return out;
}

ImageTensor locally_conditioned_estimate(const Denoiser& denoiser, const ImageTensor& x_t,
                                         int t, const SemanticMask& mask,
                                         const PromptSet& prompts,
                                         const LocalSamplerOptions& options) {
  const int prompt_count = prompts.size();
  if (mask.prompt_count() != prompt_count) {
    throw DimensionError("mask expects " + std::to_string(mask.prompt_count()) +
                         " prompts, prompt set has " + std::to_string(prompt_count));
  }
  if (x_t.height() != mask.height() || x_t.width() != mask.width()) {
    throw DimensionError("mask and image sizes differ");
  }

  std::vector<bool> present(static_cast<std::size_t>(prompt_count) + 1, false);
  for (std::uint8_t l : mask.labels()) present[l] = true;
  if (present[0] && options.label_zero == LabelZeroPolicy::error) {
    throw RangeError("mask contains unassigned pixels and the label-0 policy is 'error'");
  }

  // Batch layout: [unconditional, one entry per present label, negations].
  std::vector<ConditionId> conds{ConditionId::unconditional()};
  std::vector<int> cond_slot(static_cast<std::size_t>(prompt_count) + 1, -1);
  std::vector<int> neg_slot(static_cast<std::size_t>(prompt_count) + 1, -1);
  for (int label = 1; label <= prompt_count; ++label) {
    if (!present[label]) continue;
    cond_slot[label] = static_cast<int>(conds.size());
    conds.push_back(prompts.prompts[label - 1]);
  }
  if (!options.alg1_literal) {
    for (int label = 1; label <= prompt_count; ++label) {
      if (!present[label]) continue;
      auto neg = prompts.negation(label);
      if (!neg || neg->is_unconditional()) continue;
      auto it = std::find(conds.begin(), conds.end(), *neg);
      neg_slot[label] = static_cast<int>(it - conds.begin());
      if (it == conds.end()) conds.push_back(*neg);
    }
  }
  const auto preds = denoiser.denoise_batch(x_t, t, conds);
  const ImageTensor& uncond = preds[0];

  std::vector<ImageTensor> per_label;
  per_label.reserve(prompt_count);
  for (int label = 1; label <= prompt_count; ++label) {
    if (!present[label]) {
      per_label.push_back(uncond);  // never selected
      continue;
    }
    const ImageTensor& cond = preds[cond_slot[label]];
    const double s = prompts.scale(label);
    if (options.alg1_literal) {
      ImageTensor diff(uncond.height(), uncond.width(), uncond.channels());
      for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = s * (cond[i] - uncond[i]);
      per_label.push_back(std::move(diff));
    } else if (neg_slot[label] >= 0) {
      per_label.push_back(guide_negated(uncond, cond, preds[neg_slot[label]], s));
    } else {
      per_label.push_back(guide(uncond, cond, s));
    }
  }

  if (!present[0]) return compose_noise(per_label, mask);
  if (options.alg1_literal) {
    const ImageTensor zero(uncond.height(), uncond.width(), uncond.channels());
    return compose_noise(per_label, mask, &zero);
  }
  return compose_noise(per_label, mask, &uncond);
}

namespace {

template <typename Estimate>
ImageTensor run_sampler(int height, int width, const VarianceSchedule& sched,
                        const LocalSamplerOptions& options, std::uint64_t seed,
                        Estimate&& estimate) {
  std::mt19937_64 rng(seed);
  ImageTensor x = gaussian_image(height, width, options.channels, rng);
  for (int t = sched.steps(); t >= 1; --t) {
    const ImageTensor eps_hat = estimate(x, t);
    if (options.sampler == SamplerKind::stochastic) {
      const ImageTensor noise = gaussian_image(height, width, options.channels, rng);
      x = ddpm_update(x, eps_hat, t, sched, noise, options.noise_coefficient);
    } else {
      x = deterministic_update(x, eps_hat, t, sched);
    }
  }
  return x;
}

}  // namespace

ImageTensor sample_locally_conditioned(const Denoiser& denoiser, const SemanticMask& mask,
                                       const PromptSet& prompts,
                                       const VarianceSchedule& sched,
                                       const LocalSamplerOptions& options,
                                       std::uint64_t seed) {
  return run_sampler(mask.height(), mask.width(), sched, options, seed,
                     [&](const ImageTensor& x, int t) {
                       return locally_conditioned_estimate(denoiser, x, t, mask, prompts,
                                                           options);
                     });
}

ImageTensor sample_guided(const Denoiser& denoiser, int height, int width,
                          const ConditionId& prompt, double scale,
                          const VarianceSchedule& sched, const LocalSamplerOptions& options,
                          std::uint64_t seed) {
  return run_sampler(height, width, sched, options, seed, [&](const ImageTensor& x, int t) {
    return cfg_predict(denoiser, x, t, prompt, scale);
  });
}

}  // namespace compose3d
