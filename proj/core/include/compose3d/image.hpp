#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace compose3d {

/// Dense H x W x C real image stored row-major with interleaved channels.
/// Shape is fixed at construction.
class ImageTensor {
 public:
  ImageTensor() = default;
  ImageTensor(int height, int width, int channels, double fill = 0.0);
  /// Throws DimensionError on a size mismatch and std::invalid_argument on
  /// non-finite entries.
  ImageTensor(int height, int width, int channels, std::vector<double> data);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }

  double& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  double at(int y, int x, int c) const { return data_[index(y, x, c)]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  bool same_shape(const ImageTensor& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_ &&
           channels_ == other.channels_;
  }
  bool all_finite() const noexcept;

  bool operator==(const ImageTensor&) const = default;

 private:
  std::size_t index(int y, int x, int c) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
            static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels_) +
           static_cast<std::size_t>(c);
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Throws DimensionError unless `a` and `b` share a shape.
void require_same_shape(const ImageTensor& a, const ImageTensor& b, const char* what);

/// Constant image with a per-channel color.
ImageTensor constant_image(int height, int width, std::span<const double> color);

/// Unit Gaussian image drawn from `rng`, filled in storage order.
ImageTensor gaussian_image(int height, int width, int channels, std::mt19937_64& rng);

/// Box-filter downsample by an integer factor. Height and width must divide.
ImageTensor downsample(const ImageTensor& image, int factor);

/// Adjoint of `downsample`: spreads each coarse value over its block / factor^2.
ImageTensor downsample_adjoint(const ImageTensor& coarse, int factor);

double max_abs_diff(const ImageTensor& a, const ImageTensor& b);

}  // namespace compose3d
