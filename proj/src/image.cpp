#include "segdet/image.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace segdet {

Image::Image(int width, int height, float fill) : width_(width), height_(height) {
  if (width < 0 || height < 0) throw InvalidArgument("image dimensions must be nonnegative");
  pixels_.assign(static_cast<std::size_t>(width) * height, fill);
}

Image crop(const Image& src, int x0, int y0, int x1, int y1) {
  if (x0 < 0 || y0 < 0 || x1 > src.width() || y1 > src.height() || x0 >= x1 || y0 >= y1) {
    throw InvalidArgument("crop rectangle outside image");
  }
  Image out(x1 - x0, y1 - y0);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) out.at(x - x0, y - y0) = src.at(x, y);
  }
  return out;
}

Image flip_horizontal(const Image& src) {
  Image out(src.width(), src.height());
  for (int y = 0; y < src.height(); ++y) {
    for (int x = 0; x < src.width(); ++x) out.at(src.width() - 1 - x, y) = src.at(x, y);
  }
  return out;
}

Image resample_region(const Image& src, const BBox& region, int out_w, int out_h) {
  Image out(out_w, out_h);
  const double sx = region.width() / out_w;
  const double sy = region.height() / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    // pixel centers sit at integer + 0.5
    const double fy = region.y1 + (oy + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double ty = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx = region.x1 + (ox + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double tx = fx - x0;
      const double v = (1 - ty) * ((1 - tx) * src.at_or_zero(x0, y0) + tx * src.at_or_zero(x0 + 1, y0)) +
                       ty * ((1 - tx) * src.at_or_zero(x0, y0 + 1) + tx * src.at_or_zero(x0 + 1, y0 + 1));
      out.at(ox, oy) = static_cast<float>(v);
    }
  }
  return out;
}

Image resize(const Image& src, int out_w, int out_h) {
  // clamp-to-edge so the frame border does not darken
  Image out(out_w, out_h);
  const double sx = static_cast<double>(src.width()) / out_w;
  const double sy = static_cast<double>(src.height()) / out_h;
  auto px = [&](int x, int y) {
    x = std::clamp(x, 0, src.width() - 1);
    y = std::clamp(y, 0, src.height() - 1);
    return src.at(x, y);
  };
  for (int oy = 0; oy < out_h; ++oy) {
    const double fy = (oy + 0.5) * sy - 0.5;
    const int y0 = static_cast<int>(std::floor(fy));
    const double ty = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx = (ox + 0.5) * sx - 0.5;
      const int x0 = static_cast<int>(std::floor(fx));
      const double tx = fx - x0;
      const double v = (1 - ty) * ((1 - tx) * px(x0, y0) + tx * px(x0 + 1, y0)) +
                       ty * ((1 - tx) * px(x0, y0 + 1) + tx * px(x0 + 1, y0 + 1));
      out.at(ox, oy) = static_cast<float>(v);
    }
  }
  return out;
}

Image gaussian_blur(const Image& src, double sigma) {
  if (!(sigma > 0.0) || src.empty()) return src;
  const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(2 * half + 1);
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    kernel[i + half] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + half];
  }
  for (double& k : kernel) k /= sum;

  const int w = src.width();
  const int h = src.height();
  Image tmp(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i) acc += kernel[i + half] * src.at(std::clamp(x + i, 0, w - 1), y);
      tmp.at(x, y) = static_cast<float>(acc);
    }
  }
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i) acc += kernel[i + half] * tmp.at(x, std::clamp(y + i, 0, h - 1));
      out.at(x, y) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  }
  return out;
}

void quantize_8bit(Image& img) {
  for (float& v : img.pixels()) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    v = static_cast<float>(std::lround(c * 255.0f)) / 255.0f;
  }
}

void write_pgm(const std::filesystem::path& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << "P5\n" << img.width() << ' ' << img.height() << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width()));
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      row[x] = static_cast<unsigned char>(std::lround(std::clamp(img.at(x, y), 0.0f, 1.0f) * 255.0f));
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  while (in) {
    int c = in.get();
    if (c == '#') {
      while (in && in.get() != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    if (c == EOF) break;
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

}  // namespace

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  if (next_token(in) != "P5") throw std::runtime_error(path.string() + ": not a binary PGM");
  const int w = std::stoi(next_token(in));
  const int h = std::stoi(next_token(in));
  const int maxval = std::stoi(next_token(in));
  if (w <= 0 || h <= 0 || maxval != 255) {
    throw std::runtime_error(path.string() + ": unsupported PGM header");
  }
  Image img(w, h);
  std::vector<unsigned char> row(static_cast<std::size_t>(w));
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), w);
    if (!in) throw std::runtime_error(path.string() + ": truncated pixel data");
    for (int x = 0; x < w; ++x) img.at(x, y) = static_cast<float>(row[x]) / 255.0f;
  }
  return img;
}

}  // namespace segdet
