// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The vqlm Authors

#include "vqlm/image.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "vqlm/errors.h"

namespace vqlm {

ImageF to_signed_unit(const ImageU8& img) {
  ImageF out(img.h, img.w);
  for (size_t i = 0; i < img.data.size(); ++i) {
    out.data[i] = static_cast<double>(img.data[i]) / 127.5 - 1.0;
  }
  return out;
}

ImageU8 to_u8(const ImageF& img) {
  ImageU8 out(img.h, img.w);
  for (size_t i = 0; i < img.data.size(); ++i) {
    double v = (img.data[i] + 1.0) * 127.5;
    out.data[i] = static_cast<uint8_t>(std::clamp(std::lround(v), 0L, 255L));
  }
  return out;
}

ImageF resize_bilinear(const ImageF& img, int out_h, int out_w) {
  if (img.empty()) throw InputError("resize_bilinear: empty input image");
  if (out_h <= 0 || out_w <= 0) throw ConfigError("resize_bilinear: non-positive target dims");
  ImageF out(out_h, out_w);
  const double sy = static_cast<double>(img.h) / out_h;
  const double sx = static_cast<double>(img.w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.w - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1.0 - wx) + img.at(y0, x1, c) * wx;
        const double bot = img.at(y1, x0, c) * (1.0 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = top * (1.0 - wy) + bot * wy;
      }
    }
  }
  return out;
}

ImageU8 resize_bilinear_u8(const ImageU8& img, int out_h, int out_w) {
  ImageF f(img.h, img.w);
  for (size_t i = 0; i < img.data.size(); ++i) f.data[i] = img.data[i];
  ImageF r = resize_bilinear(f, out_h, out_w);
  ImageU8 out(out_h, out_w);
  for (size_t i = 0; i < r.data.size(); ++i) {
    out.data[i] = static_cast<uint8_t>(std::clamp(std::lround(r.data[i]), 0L, 255L));
  }
  return out;
}

void write_ppm(const std::string& path, const ImageU8& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for write: " + path);
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (!f) throw IoError("short write: " + path);
}

ImageU8 read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open for read: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw IoError("not a binary PPM: " + path);
  auto next_int = [&]() {
    // Skips whitespace and '#' comment lines.
    for (;;) {
      int ch = f.peek();
      if (ch == '#') {
        std::string line;
        std::getline(f, line);
      } else if (std::isspace(ch)) {
        f.get();
      } else {
        break;
      }
    }
    int v = -1;
    f >> v;
    return v;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w <= 0 || h <= 0 || maxval != 255) throw IoError("unsupported PPM header: " + path);
  f.get();  // single whitespace after header
  ImageU8 img(h, w);
  f.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.data.size())) {
    throw IoError("truncated PPM payload: " + path);
  }
  return img;
}

double psnr(const ImageU8& a, const ImageU8& b) {
  if (a.h != b.h || a.w != b.w) throw InputError("psnr: image shapes differ");
  if (a.data.empty()) throw InputError("psnr: empty images");
  double se = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double mean_abs_laplacian(const ImageU8& img) {
  if (img.h < 3 || img.w < 3) throw InputError("mean_abs_laplacian: image too small");
  auto luma = [&](int y, int x) {
    return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
  };
  double acc = 0.0;
  int n = 0;
  for (int y = 1; y + 1 < img.h; ++y) {
    for (int x = 1; x + 1 < img.w; ++x) {
      const double lap =
          luma(y - 1, x) + luma(y + 1, x) + luma(y, x - 1) + luma(y, x + 1) - 4.0 * luma(y, x);
      acc += std::abs(lap);
      ++n;
    }
  }
  return acc / n;
}

}  // namespace vqlm
