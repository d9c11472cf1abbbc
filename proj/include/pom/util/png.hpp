/* Copyright 2026 The pom Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==========================================================================*/

#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pom/error.hpp"
#include "pom/image.hpp"
#include "pom/util/files.hpp"

namespace pom::png {

namespace detail {

struct ImageGuard {
  png_image image{};
  ImageGuard() {
    image.version = PNG_IMAGE_VERSION;
  }
  ~ImageGuard() { png_image_free(&image); }
  ImageGuard(const ImageGuard&) = delete;
  ImageGuard& operator=(const ImageGuard&) = delete;
};

inline std::vector<std::uint8_t> decode(std::span<const std::uint8_t> bytes, png_uint_32 format,
                                        int& width, int& height) {
  ImageGuard g;
  if (!png_image_begin_read_from_memory(&g.image, bytes.data(), bytes.size())) {
    throw DataError(std::string("png: ") + g.image.message);
  }
  g.image.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(g.image));
  if (!png_image_finish_read(&g.image, nullptr, buffer.data(), 0, nullptr)) {
    throw DataError(std::string("png: ") + g.image.message);
  }
  width = static_cast<int>(g.image.width);
  height = static_cast<int>(g.image.height);
  return buffer;
}

inline std::vector<std::uint8_t> encode(const void* data, int width, int height, png_uint_32 format) {
  ImageGuard g;
  g.image.width = static_cast<png_uint_32>(width);
  g.image.height = static_cast<png_uint_32>(height);
  g.image.format = format;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&g.image, nullptr, &size, 0, data, 0, nullptr)) {
    throw DataError(std::string("png: ") + g.image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&g.image, out.data(), &size, 0, data, 0, nullptr)) {
    throw DataError(std::string("png: ") + g.image.message);
  }
  out.resize(size);
  return out;
}

}  // namespace detail

inline RgbImage decode_rgb(std::span<const std::uint8_t> bytes) {
  int w = 0, h = 0;
  auto buf = detail::decode(bytes, PNG_FORMAT_RGB, w, h);
  RgbImage img(w, h);
  std::memcpy(img.pixels().data(), buf.data(), buf.size());
  return img;
}

inline GrayImage decode_gray(std::span<const std::uint8_t> bytes) {
  int w = 0, h = 0;
  auto buf = detail::decode(bytes, PNG_FORMAT_GRAY, w, h);
  GrayImage img(w, h);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) img.at(r, c) = buf[static_cast<std::size_t>(r) * w + c];
  return img;
}

inline std::vector<std::uint8_t> encode(const RgbImage& img) {
  static_assert(sizeof(Rgb) == 3);
  return detail::encode(img.pixels().data(), img.width(), img.height(), PNG_FORMAT_RGB);
}

inline std::vector<std::uint8_t> encode(const GrayImage& img) {
  return detail::encode(img.pixels().data(), img.width(), img.height(), PNG_FORMAT_GRAY);
}

inline RgbImage read_rgb(const std::filesystem::path& path) { return decode_rgb(read_file(path)); }
inline GrayImage read_gray(const std::filesystem::path& path) { return decode_gray(read_file(path)); }

inline void write(const std::filesystem::path& path, const RgbImage& img) {
  write_file_atomic(path, encode(img));
}
inline void write(const std::filesystem::path& path, const GrayImage& img) {
  write_file_atomic(path, encode(img));
}

}  // namespace pom::png
