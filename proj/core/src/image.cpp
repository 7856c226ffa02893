#include "compose3d/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "compose3d/errors.hpp"

namespace compose3d {

namespace {

void check_dims(int height, int width, int channels) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw DimensionError("image dimensions must be positive, got " +
                         std::to_string(height) + "x" + std::to_string(width) + "x" +
                         std::to_string(channels));
  }
}

}  // namespace

ImageTensor::ImageTensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
  check_dims(height, width, channels);
  if (!std::isfinite(fill)) throw std::invalid_argument("image fill must be finite");
  data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

ImageTensor::ImageTensor(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(height, width, channels);
  if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
    throw DimensionError("image data has " + std::to_string(data_.size()) +
                         " entries, expected " +
                         std::to_string(static_cast<std::size_t>(height) * width * channels));
  }
  if (!all_finite()) throw std::invalid_argument("image data must be finite");
}

bool ImageTensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + std::to_string(a.height()) +
                         "x" + std::to_string(a.width()) + "x" + std::to_string(a.channels()) +
                         " vs " + std::to_string(b.height()) + "x" + std::to_string(b.width()) +
                         "x" + std::to_string(b.channels()));
  }
}

ImageTensor constant_image(int height, int width, std::span<const double> color) {
  ImageTensor out(height, width, static_cast<int>(color.size()));
  auto data = out.data();
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = color[i % color.size()];
  return out;
}

ImageTensor gaussian_image(int height, int width, int channels, std::mt19937_64& rng) {
  ImageTensor out(height, width, channels);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : out.data()) v = normal(rng);
  return out;
}

ImageTensor downsample(const ImageTensor& image, int factor) {
  if (factor < 1 || image.height() % factor != 0 || image.width() % factor != 0) {
    throw DimensionError("downsample factor " + std::to_string(factor) +
                         " does not divide the image size");
  }
  if (factor == 1) return image;
  const int h = image.height() / factor;
  const int w = image.width() / factor;
  const int c = image.channels();
  const double norm = 1.0 / (factor * factor);
  ImageTensor out(h, w, c);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (int dy = 0; dy < factor; ++dy) {
          for (int dx = 0; dx < factor; ++dx) {
            sum += image.at(y * factor + dy, x * factor + dx, ch);
          }
        }
        out.at(y, x, ch) = sum * norm;
      }
    }
  }
  return out;
}

ImageTensor downsample_adjoint(const ImageTensor& coarse, int factor) {
  if (factor < 1) throw DimensionError("downsample factor must be positive");
  if (factor == 1) return coarse;
  const double norm = 1.0 / (factor * factor);
  ImageTensor out(coarse.height() * factor, coarse.width() * factor, coarse.channels());
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      for (int ch = 0; ch < out.channels(); ++ch) {
        out.at(y, x, ch) = coarse.at(y / factor, x / factor, ch) * norm;
      }
    }
  }
  return out;
}

double max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace compose3d
