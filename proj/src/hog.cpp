#include "segdet/hog.hpp"

#include <cmath>
#include <numbers>

namespace segdet {

void HogConfig::validate() const {
  if (patch <= 0 || cell <= 0 || patch % cell) throw InvalidArgument("HOG cell size must divide the patch");
  if (bins < 1) throw InvalidArgument("HOG needs at least one orientation bin");
  if (block < 1 || block > patch / cell) throw InvalidArgument("HOG block does not fit the cell grid");
  if (!(clip > 0.0)) throw InvalidArgument("HOG clip level must be positive");
}

std::size_t HogConfig::dimension() const {
  const int cells = patch / cell;
  const int blocks = cells - block + 1;
  return static_cast<std::size_t>(blocks) * blocks * block * block * bins;
}

std::vector<double> hog_features(const Image& img, const HogConfig& cfg) {
  cfg.validate();
  if (img.width() != cfg.patch || img.height() != cfg.patch) {
    throw InvalidArgument("HOG patch has the wrong size");
  }
  const int n = cfg.patch, cells = n / cfg.cell;
  std::vector<double> hist(static_cast<std::size_t>(cells) * cells * cfg.bins, 0.0);
  const double bin_width = std::numbers::pi / cfg.bins;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      const double gx = img.at(std::min(x + 1, n - 1), y) - img.at(std::max(x - 1, 0), y);
      const double gy = img.at(x, std::min(y + 1, n - 1)) - img.at(x, std::max(y - 1, 0));
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double ang = std::atan2(gy, gx);
      if (ang < 0) ang += std::numbers::pi;
      if (ang >= std::numbers::pi) ang -= std::numbers::pi;
      // linear vote between the two nearest bin centers
      const double pos = ang / bin_width - 0.5;
      const int b0 = static_cast<int>(std::floor(pos));
      const double t = pos - b0;
      const int lo = (b0 + cfg.bins) % cfg.bins, hi = (b0 + 1) % cfg.bins;
      double* h = hist.data() + (static_cast<std::size_t>(y / cfg.cell) * cells + x / cfg.cell) * cfg.bins;
      h[lo] += mag * (1.0 - t);
      h[hi] += mag * t;
    }
  }
  std::vector<double> out;
  out.reserve(cfg.dimension());
  const int blocks = cells - cfg.block + 1;
  std::vector<double> blk;
  for (int by = 0; by < blocks; ++by) {
    for (int bx = 0; bx < blocks; ++bx) {
      blk.clear();
      for (int cy = by; cy < by + cfg.block; ++cy) {
        for (int cx = bx; cx < bx + cfg.block; ++cx) {
          const double* h = hist.data() + (static_cast<std::size_t>(cy) * cells + cx) * cfg.bins;
          blk.insert(blk.end(), h, h + cfg.bins);
        }
      }
      for (int pass = 0; pass < 2; ++pass) {
        double ss = 1e-6;
        for (double v : blk) ss += v * v;
        const double inv = 1.0 / std::sqrt(ss);
        for (double& v : blk) v = pass == 0 ? std::min(v * inv, cfg.clip) : v * inv;
      }
      out.insert(out.end(), blk.begin(), blk.end());
    }
  }
  return out;
}

std::vector<double> hog_for_box(const Image& img, const BBox& box, const HogConfig& cfg) {
  return hog_features(resample_region(img, box, cfg.patch, cfg.patch), cfg);
}

}  // namespace segdet
