// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vqlm {

// Interleaved RGB, 8 bits per channel. Row-major, origin top-left.
struct ImageU8 {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> data;  // h * w * 3

  ImageU8() = default;
  ImageU8(int height, int width, uint8_t fill = 0)
      : h(height), w(width), data(static_cast<size_t>(height) * width * 3, fill) {}

  uint8_t& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  uint8_t at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  bool empty() const { return h == 0 || w == 0; }
};

// Interleaved RGB, double precision. Encoder inputs use the [-1, 1] range.
struct ImageF {
  int h = 0;
  int w = 0;
  std::vector<double> data;  // h * w * 3

  ImageF() = default;
  ImageF(int height, int width, double fill = 0.0)
      : h(height), w(width), data(static_cast<size_t>(height) * width * 3, fill) {}

  double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  bool empty() const { return h == 0 || w == 0; }
};

// [0, 255] -> [-1, 1] per channel.
ImageF to_signed_unit(const ImageU8& img);

// Inverse of to_signed_unit, clamping and rounding to nearest.
ImageU8 to_u8(const ImageF& img);

// Bilinear resampling (half-pixel centers, edge clamp). Works on whatever
// value range the input carries.
ImageF resize_bilinear(const ImageF& img, int out_h, int out_w);
ImageU8 resize_bilinear_u8(const ImageU8& img, int out_h, int out_w);

// Binary PPM (P6), 8-bit.
void write_ppm(const std::string& path, const ImageU8& img);
ImageU8 read_ppm(const std::string& path);

// Peak signal-to-noise ratio over all channels, peak 255. Returns +inf for
// identical images.
double psnr(const ImageU8& a, const ImageU8& b);

// Mean absolute 4-neighbour Laplacian of the luma plane; a crude
// high-frequency energy measure used to verify blur ladders.
double mean_abs_laplacian(const ImageU8& img);

}  // namespace vqlm
