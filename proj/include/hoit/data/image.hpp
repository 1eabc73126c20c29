#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "hoit/ad/tensor.hpp"

namespace hoit::data {

// Row-major interleaved RGB with channel values in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0)
      : width(w), height(h), pixels(w * h * 3, fill) {}

  double& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }

  bool operator==(const Image&) const = default;
};

// Binary PPM (P6, maxval 255). Values are quantized on write.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

// Binary 8-bit grayscale PGM (P5), row-major.
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height,
               const std::vector<unsigned char>& gray);
std::vector<unsigned char> read_pgm(const std::filesystem::path& path, std::size_t& width,
                                    std::size_t& height);

// Bilinear resampling with pixel-center alignment.
Image resize_bilinear(const Image& image, std::size_t width, std::size_t height);

// [H x W x 3] tensor of (pixel - mean) / std.
ad::Tensor to_tensor(const Image& image, double mean = 0.5, double std = 0.5);

}  // namespace hoit::data
