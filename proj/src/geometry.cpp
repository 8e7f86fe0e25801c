#include "segdet/geometry.hpp"

#include <cmath>

namespace segdet {

namespace {

constexpr std::array<std::string_view, kNumSegments> kNames = {
    "EP", "UL12", "U12", "UR12", "UL34", "U34", "UR34",
    "L12", "L34", "NS", "R34", "R12", "B34", "B12"};

}  // namespace

std::string_view segment_name(SegmentId s) { return kNames[index_of(s)]; }

std::optional<SegmentId> parse_segment(std::string_view name) {
  for (std::size_t i = 0; i < kNumSegments; ++i) {
    if (kNames[i] == name) return kAllSegments[i];
  }
  return std::nullopt;
}

SegmentId mirror_segment(SegmentId s) {
  switch (s) {
    case SegmentId::L12: return SegmentId::R12;
    case SegmentId::R12: return SegmentId::L12;
    case SegmentId::L34: return SegmentId::R34;
    case SegmentId::R34: return SegmentId::L34;
    case SegmentId::UL12: return SegmentId::UR12;
    case SegmentId::UR12: return SegmentId::UL12;
    case SegmentId::UL34: return SegmentId::UR34;
    case SegmentId::UR34: return SegmentId::UL34;
    default: return s;
  }
}

std::optional<std::size_t> proposal_index(SegmentId s) {
  for (std::size_t i = 0; i < kProposalSegments.size(); ++i) {
    if (kProposalSegments[i] == s) return i;
  }
  return std::nullopt;
}

SegmentCatalog::SegmentCatalog() {
  auto put = [this](SegmentId s, FracRect r) { rects_[index_of(s)] = r; };
  put(SegmentId::EP, {0.125, 0.25, 0.875, 0.50});
  put(SegmentId::UL12, {0.0, 0.0, 0.5, 0.5});
  put(SegmentId::U12, {0.0, 0.0, 1.0, 0.5});
  put(SegmentId::UR12, {0.5, 0.0, 1.0, 0.5});
  put(SegmentId::UL34, {0.0, 0.0, 0.75, 0.75});
  put(SegmentId::U34, {0.0, 0.0, 1.0, 0.75});
  put(SegmentId::UR34, {0.25, 0.0, 1.0, 0.75});
  put(SegmentId::L12, {0.0, 0.0, 0.5, 1.0});
  put(SegmentId::L34, {0.0, 0.0, 0.75, 1.0});
  put(SegmentId::NS, {0.35, 0.40, 0.65, 0.75});
  put(SegmentId::R34, {0.25, 0.0, 1.0, 1.0});
  put(SegmentId::R12, {0.5, 0.0, 1.0, 1.0});
  put(SegmentId::B34, {0.0, 0.25, 1.0, 1.0});
  put(SegmentId::B12, {0.0, 0.5, 1.0, 1.0});
}

void SegmentCatalog::set(SegmentId s, const FracRect& r) {
  if (!r.valid()) {
    throw InvalidArgument("fractional rectangle for " + std::string(segment_name(s)) +
                          " must satisfy 0 <= f1 < f2 <= 1");
  }
  rects_[index_of(s)] = r;
}

const SegmentCatalog& default_catalog() {
  static const SegmentCatalog catalog;
  return catalog;
}

FracRect fraction_rect(SegmentId seg, const SegmentCatalog& catalog) { return catalog.rect(seg); }

BBox segment_from_face(SegmentId seg, const BBox& face, const SegmentCatalog& catalog) {
  const FracRect& f = catalog.rect(seg);
  const double w = face.width();
  const double h = face.height();
  return {face.x1 + f.fx1 * w, face.y1 + f.fy1 * h, face.x1 + f.fx2 * w, face.y1 + f.fy2 * h};
}

namespace {

struct AxisEstimate {
  double lo, hi, center;
};

// Extends [lo, hi] (the segment's extent) to the full face along one axis. Each face
// edge is measured from the segment edge on the same side, and the center from
// whichever segment edge is nearer to it, so that the left-half case reproduces
// (x1, x2 + (x2 - x1)) with center x2 bit for bit.
AxisEstimate extend_axis(double lo, double hi, double f1, double f2) {
  const double full = (hi - lo) / (f2 - f1);
  AxisEstimate e{};
  e.lo = lo - f1 * full;
  e.hi = hi + (1.0 - f2) * full;
  if (std::abs(0.5 - f1) <= std::abs(0.5 - f2)) {
    e.center = lo + (0.5 - f1) * full;
  } else {
    e.center = hi + (0.5 - f2) * full;
  }
  return e;
}

}  // namespace

FaceEstimate face_from_segment(SegmentId seg, const BBox& det, const ImageMeta& img,
                               const SegmentCatalog& catalog) {
  if (!det.valid()) throw InvalidArgument("detection box has inverted coordinates");
  const BBox d = clip_box(det, img.width, img.height);
  if (!(d.width() > 0.0) || !(d.height() > 0.0)) {
    throw InvalidArgument("degenerate detection for segment " + std::string(segment_name(seg)));
  }
  const FracRect& f = catalog.rect(seg);
  const AxisEstimate ex = extend_axis(d.x1, d.x2, f.fx1, f.fx2);
  const AxisEstimate ey = extend_axis(d.y1, d.y2, f.fy1, f.fy2);
  FaceEstimate out;
  out.unclipped = {ex.lo, ey.lo, ex.hi, ey.hi};
  out.face = clip_box(out.unclipped, img.width, img.height);
  out.center = {ex.center, ey.center};
  return out;
}

std::optional<FracRect> visible_face_region(const BBox& face, const ImageMeta& img) {
  const double w = face.width();
  const double h = face.height();
  if (!(w > 0.0) || !(h > 0.0)) return std::nullopt;
  FracRect r{(std::max(0.0, face.x1) - face.x1) / w, (std::max(0.0, face.y1) - face.y1) / h,
             (std::min<double>(img.width, face.x2) - face.x1) / w,
             (std::min<double>(img.height, face.y2) - face.y1) / h};
  r.fx1 = std::clamp(r.fx1, 0.0, 1.0);
  r.fy1 = std::clamp(r.fy1, 0.0, 1.0);
  r.fx2 = std::clamp(r.fx2, 0.0, 1.0);
  r.fy2 = std::clamp(r.fy2, 0.0, 1.0);
  if (!(r.fx1 < r.fx2) || !(r.fy1 < r.fy2)) return std::nullopt;
  return r;
}

}  // namespace segdet
