#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "compose3d/composition.hpp"
#include "compose3d/image.hpp"

namespace compose3d {

/// 8-bit PNG pixels, row-major, channels interleaved (1 = gray, 3 = rgb).
struct Png8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  bool operator==(const Png8&) const = default;
};

/// Reads any PNG and converts it to 8-bit gray (channels = 1) or 8-bit rgb
/// (channels = 3) without alpha.
Png8 read_png(const std::filesystem::path& path, int channels);
void write_png(const std::filesystem::path& path, const Png8& image);

/// Values clamped to [0, 1] and rounded to 8 bits. Accepts 1 or 3 channels.
Png8 to_png8(const ImageTensor& image);
ImageTensor from_png8(const Png8& image);

/// Mask PNGs store labels as literal gray values.
SemanticMask read_mask_png(const std::filesystem::path& path, int prompt_count);
void write_mask_png(const std::filesystem::path& path, const SemanticMask& mask);

}  // namespace compose3d
