#include "compose3d/png_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include <png.h>

#include "compose3d/errors.hpp"

namespace compose3d {

namespace {

png_uint_32 format_for(int channels) {
  switch (channels) {
    case 1: return PNG_FORMAT_GRAY;
    case 3: return PNG_FORMAT_RGB;
    default: throw DimensionError("PNG images must have 1 or 3 channels");
  }
}

}  // namespace

Png8 read_png(const std::filesystem::path& path, int channels) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = format_for(channels);
  Png8 out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.channels = channels;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Png8& img) {
  if (img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * img.channels) {
    throw DimensionError("PNG pixel buffer does not match its dimensions");
  }
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = format_for(img.channels);
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(), 0,
                               nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

Png8 to_png8(const ImageTensor& image) {
  Png8 out;
  out.width = image.width();
  out.height = image.height();
  out.channels = image.channels();
  format_for(out.channels);
  out.pixels.resize(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double v = std::clamp(image[i], 0.0, 1.0);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

ImageTensor from_png8(const Png8& image) {
  ImageTensor out(image.height, image.width, image.channels);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = image.pixels[i] / 255.0;
  return out;
}

SemanticMask read_mask_png(const std::filesystem::path& path, int prompt_count) {
  Png8 png = read_png(path, 1);
  for (std::uint8_t v : png.pixels) {
    if (v > prompt_count) {
      throw ConfigError("mask_path", "mask label " + std::to_string(v) + " exceeds the " +
                                         std::to_string(prompt_count) + " configured prompts");
    }
  }
  return SemanticMask(png.height, png.width, prompt_count, std::move(png.pixels));
}

void write_mask_png(const std::filesystem::path& path, const SemanticMask& mask) {
  Png8 png;
  png.width = mask.width();
  png.height = mask.height();
  png.channels = 1;
  png.pixels.assign(mask.labels().begin(), mask.labels().end());
  write_png(path, png);
}

}  // namespace compose3d
