#include "segdet/augment.hpp"

#include <cmath>

#include "segdet/rng.hpp"

namespace segdet {

namespace {

constexpr double kFracTol = 1e-9;

enum class Side { KeepLeft, KeepRight, KeepTop };

Side side_of(CropKind k) {
  switch (k) {
    case CropKind::ToL12:
    case CropKind::ToL34: return Side::KeepLeft;
    case CropKind::ToR12:
    case CropKind::ToR34: return Side::KeepRight;
    default: return Side::KeepTop;
  }
}

// Pixel rectangle [x0, x1) x [y0, y1) kept by a TO_* crop, or nullopt if inapplicable.
struct PixelRect {
  int x0, y0, x1, y1;
};

std::optional<PixelRect> crop_window(const GroundTruth& gt, const ImageMeta& img, CropKind kind,
                                     const SegmentCatalog& catalog) {
  const auto target = crop_target(kind);
  if (!target || !gt.has_face) return std::nullopt;
  if (!gt.visible[index_of(*target)]) return std::nullopt;
  const auto vis = visible_face_region(gt.face, img);
  if (!vis) return std::nullopt;
  const FracRect& r = catalog.rect(*target);
  const double fw = gt.face.width();
  const double fh = gt.face.height();
  PixelRect win{0, 0, img.width, img.height};
  switch (side_of(kind)) {
    case Side::KeepLeft: {
      const int w = static_cast<int>(std::ceil(gt.face.x1 + r.fx2 * fw - kFracTol));
      if (!(vis->fx2 > r.fx2 + kFracTol) || w >= img.width || w < 1) return std::nullopt;
      win.x1 = w;
      break;
    }
    case Side::KeepRight: {
      const int x0 = static_cast<int>(std::floor(gt.face.x1 + r.fx1 * fw + kFracTol));
      if (!(vis->fx1 < r.fx1 - kFracTol) || x0 <= 0 || x0 >= img.width) return std::nullopt;
      win.x0 = x0;
      break;
    }
    case Side::KeepTop: {
      const int h = static_cast<int>(std::ceil(gt.face.y1 + r.fy2 * fh - kFracTol));
      if (!(vis->fy2 > r.fy2 + kFracTol) || h >= img.height || h < 1) return std::nullopt;
      win.y1 = h;
      break;
    }
  }
  return win;
}

}  // namespace

GroundTruth make_ground_truth(const BBox& face, const ImageMeta& img, const SegmentCatalog& catalog) {
  GroundTruth gt;
  gt.face = face;
  gt.has_face = true;
  const auto vis = visible_face_region(face, img);
  for (SegmentId s : kAllSegments) {
    gt.segments[index_of(s)] = segment_from_face(s, face, catalog);
    gt.visible[index_of(s)] = (vis && vis->contains(catalog.rect(s), kFracTol)) ? 1 : 0;
  }
  return gt;
}

GroundTruth no_face_ground_truth() {
  GroundTruth gt;
  gt.has_face = false;
  return gt;
}

std::string_view crop_kind_name(CropKind k) {
  switch (k) {
    case CropKind::Flip: return "FLIP";
    case CropKind::ToL12: return "TO_L12";
    case CropKind::ToL34: return "TO_L34";
    case CropKind::ToR12: return "TO_R12";
    case CropKind::ToR34: return "TO_R34";
    case CropKind::ToU12: return "TO_U12";
    case CropKind::ToU34: return "TO_U34";
  }
  return "?";
}

std::optional<CropKind> parse_crop_kind(std::string_view name) {
  for (CropKind k : kAllCropKinds) {
    if (crop_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

std::optional<SegmentId> crop_target(CropKind k) {
  switch (k) {
    case CropKind::ToL12: return SegmentId::L12;
    case CropKind::ToL34: return SegmentId::L34;
    case CropKind::ToR12: return SegmentId::R12;
    case CropKind::ToR34: return SegmentId::R34;
    case CropKind::ToU12: return SegmentId::U12;
    case CropKind::ToU34: return SegmentId::U34;
    case CropKind::Flip: return std::nullopt;
  }
  return std::nullopt;
}

std::vector<CropKind> crop_plan(const GroundTruth& gt, const ImageMeta& img, const SegmentCatalog& catalog) {
  std::vector<CropKind> plan{CropKind::Flip};
  for (CropKind k : kAllCropKinds) {
    if (k != CropKind::Flip && crop_window(gt, img, k, catalog)) plan.push_back(k);
  }
  return plan;
}

Sample apply_crop(const Image& image, const GroundTruth& gt, CropKind kind, const SegmentCatalog& catalog) {
  const ImageMeta img{image.width(), image.height()};
  if (kind == CropKind::Flip) {
    Sample out{flip_horizontal(image), gt};
    if (!gt.has_face) return out;
    const double w = image.width();
    const BBox f{w - gt.face.x2, gt.face.y1, w - gt.face.x1, gt.face.y2};
    out.gt = make_ground_truth(f, img, catalog);
    return out;
  }
  const auto win = crop_window(gt, img, kind, catalog);
  if (!win) {
    throw InvalidArgument("crop " + std::string(crop_kind_name(kind)) + " is not applicable");
  }
  Sample out;
  out.image = crop(image, win->x0, win->y0, win->x1, win->y1);
  const BBox f{gt.face.x1 - win->x0, gt.face.y1 - win->y0, gt.face.x2 - win->x0, gt.face.y2 - win->y0};
  out.gt = make_ground_truth(f, {out.image.width(), out.image.height()}, catalog);
  return out;
}

void PhotometricConfig::validate() const {
  if (!(blur_probability >= 0.0 && blur_probability <= 1.0)) {
    throw InvalidArgument("blur probability must lie in [0, 1]");
  }
  if (!(blur_radius_min >= 0.0 && blur_radius_max >= blur_radius_min)) {
    throw InvalidArgument("blur radius range must be nonnegative and ordered");
  }
  if (!(gamma_exponent_stdev >= 0.0)) throw InvalidArgument("gamma stdev must be nonnegative");
}

PhotometricDraw draw_photometric(const PhotometricConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  PhotometricDraw d;
  // draws are taken unconditionally so the gamma stream does not depend on the blur coin
  const bool blur = rng.bernoulli(cfg.blur_probability);
  const double radius = rng.uniform(cfg.blur_radius_min, cfg.blur_radius_max);
  if (blur) d.blur_radius = radius;
  d.s = rng.normal(0.0, cfg.gamma_exponent_stdev);
  return d;
}

Image apply_gamma(const Image& image, double s) {
  if (s == 0.0) return image;
  const double gamma = std::exp2(s);
  Image out = image;
  for (float& v : out.pixels()) {
    const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    v = static_cast<float>(std::pow(c, gamma));
  }
  return out;
}

Image apply_photometric(const Image& image, const PhotometricDraw& draw) {
  Image out = draw.blur_radius ? gaussian_blur(image, *draw.blur_radius) : image;
  return apply_gamma(out, draw.s);
}

Image photometric(const Image& image, const PhotometricConfig& cfg, std::uint64_t seed) {
  return apply_photometric(image, draw_photometric(cfg, seed));
}

BBox negative_sample(const ImageMeta& img, const BBox& face, std::uint64_t seed) {
  const double w = face.width();
  const double h = face.height();
  if (!(w > 0.0 && h > 0.0) || w > img.width || h > img.height) {
    throw InvalidArgument("negative sample: face size does not fit in the image");
  }
  // integer corner ranges [lo, hi] for placements beside, above or below the face
  struct Range {
    double x_lo, x_hi, y_lo, y_hi;
  };
  const double max_x = img.width - w;
  const double max_y = img.height - h;
  std::vector<Range> regions;
  auto add = [&](double xl, double xh, double yl, double yh) {
    xl = std::ceil(std::max(0.0, xl));
    yl = std::ceil(std::max(0.0, yl));
    xh = std::floor(std::min(max_x, xh));
    yh = std::floor(std::min(max_y, yh));
    if (xl <= xh && yl <= yh) regions.push_back({xl, xh, yl, yh});
  };
  add(0.0, face.x1 - w, 0.0, max_y);
  add(face.x2, max_x, 0.0, max_y);
  add(0.0, max_x, 0.0, face.y1 - h);
  add(0.0, max_x, face.y2, max_y);
  if (regions.empty()) throw InvalidArgument("negative sample: face leaves no background of its size");

  Rng rng(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    const Range& r = regions[rng.below(regions.size())];
    const double x1 = r.x_lo + static_cast<double>(rng.below(static_cast<std::uint64_t>(r.x_hi - r.x_lo) + 1));
    const double y1 = r.y_lo + static_cast<double>(rng.below(static_cast<std::uint64_t>(r.y_hi - r.y_lo) + 1));
    const BBox b{x1, y1, x1 + w, y1 + h};
    if (b.x2 <= img.width && b.y2 <= img.height && intersection_area(b, face) == 0.0) return b;
  }
  throw InvalidArgument("negative sample: no background placement found in 100 attempts");
}

nlohmann::ordered_json to_json(const AugmentPlan& plan) {
  nlohmann::ordered_json j;
  j["source_id"] = plan.source_id;
  j["ops"] = nlohmann::ordered_json::array();
  for (const auto& op : plan.ops) {
    nlohmann::ordered_json o;
    o["kind"] = op.kind;
    o["seed"] = op.seed;
    j["ops"].push_back(o);
  }
  return j;
}

AugmentPlan augment_plan_from_json(const nlohmann::json& j) {
  AugmentPlan p;
  p.source_id = j.at("source_id").get<std::string>();
  for (const auto& o : j.at("ops")) p.ops.push_back({o.at("kind").get<std::string>(), o.at("seed").get<std::uint64_t>()});
  return p;
}

}  // namespace segdet
