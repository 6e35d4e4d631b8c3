// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avu/image_io.h"

#include <cstring>

#include <png.h>

#include "avu/errors.h"

namespace avu {

Image8 read_png(const std::filesystem::path& path, int channels) {
  if (channels != 1 && channels != 3)
    throw InputError("read_png supports 1 or 3 channels");
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw InputError("'" + path.string() + "': " + img.message);
  img.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out(static_cast<int>(img.width), static_cast<int>(img.height),
             channels);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string why = img.message;
    png_image_free(&img);
    throw InputError("'" + path.string() + "': " + why);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = image.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0,
                               image.pixels.data(), 0, nullptr))
    throw InputError("'" + path.string() + "': " + img.message);
}

}  // namespace avu
