#pragma once

#include <vector>

#include "segdet/image.hpp"

namespace segdet {

/// Histogram-of-oriented-gradients layout: a square patch split into cells, unsigned
/// orientation bins, overlapping blocks of cells with L2-Hys normalization.
struct HogConfig {
  int patch = 32;
  int cell = 8;
  int bins = 9;
  int block = 2;        ///< cells per block side, stride one cell
  double clip = 0.2;    ///< L2-Hys clipping level

  void validate() const;
  std::size_t dimension() const;
};

/// Features of a patch that is exactly cfg.patch x cfg.patch.
std::vector<double> hog_features(const Image& patch, const HogConfig& cfg = {});

/// Resamples `box` from `img` to the patch size, then extracts features.
std::vector<double> hog_for_box(const Image& img, const BBox& box, const HogConfig& cfg = {});

}  // namespace segdet
