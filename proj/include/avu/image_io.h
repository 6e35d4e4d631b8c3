// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef AVU_IMAGE_IO_H_
#define AVU_IMAGE_IO_H_

#include <cstdint>
#include <filesystem>
#include <vector>

namespace avu {

// 8-bit interleaved raster; channels is 1 (gray) or 3 (RGB).
struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(int w, int h, int c)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, 0) {}

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

// Decodes any PNG into 8-bit RGB (channels = 3) or gray (channels = 1).
Image8 read_png(const std::filesystem::path& path, int channels = 3);
void write_png(const std::filesystem::path& path, const Image8& image);

}  // namespace avu

#endif  // AVU_IMAGE_IO_H_
