#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "segdet/bbox.hpp"

namespace segdet {

/// Grayscale raster with intensities normalized to [0, 1], row-major.
class Image {
 public:
  Image() = default;
  Image(int width, int height, float fill = 0.0f);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return pixels_.empty(); }

  float& at(int x, int y) { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int x, int y) const { return pixels_[static_cast<std::size_t>(y) * width_ + x]; }
  /// Zero outside the frame.
  float at_or_zero(int x, int y) const {
    if (x < 0 || y < 0 || x >= width_ || y >= height_) return 0.0f;
    return at(x, y);
  }

  std::span<float> pixels() { return pixels_; }
  std::span<const float> pixels() const { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<float> pixels_;
};

/// Integer crop [x0, x1) x [y0, y1); the rectangle must lie inside the image.
Image crop(const Image& src, int x0, int y0, int x1, int y1);

Image flip_horizontal(const Image& src);

/// Bilinear resample of the continuous region `region` into an out_w x out_h grid.
/// Samples outside the source frame read as zero.
Image resample_region(const Image& src, const BBox& region, int out_w, int out_h);

/// Aspect-distorting resize of the whole image.
Image resize(const Image& src, int out_w, int out_h);

/// Separable Gaussian blur with standard deviation `sigma` pixels, clamped borders.
/// sigma <= 0 returns the input unchanged.
Image gaussian_blur(const Image& src, double sigma);

/// Rounds every pixel to the nearest multiple of 1/255, matching 8-bit storage.
void quantize_8bit(Image& img);

void write_pgm(const std::filesystem::path& path, const Image& img);
Image read_pgm(const std::filesystem::path& path);

}  // namespace segdet
