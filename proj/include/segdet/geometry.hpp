#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "segdet/bbox.hpp"

namespace segdet {

/// The 14 facial segments. Declaration order is the canonical index order.
enum class SegmentId : int {
  EP = 0,
  UL12,
  U12,
  UR12,
  UL34,
  U34,
  UR34,
  L12,
  L34,
  NS,
  R34,
  R12,
  B34,
  B12,
};

inline constexpr std::size_t kNumSegments = 14;

inline constexpr std::array<SegmentId, kNumSegments> kAllSegments = {
    SegmentId::EP,  SegmentId::UL12, SegmentId::U12, SegmentId::UR12, SegmentId::UL34,
    SegmentId::U34, SegmentId::UR34, SegmentId::L12, SegmentId::L34,  SegmentId::NS,
    SegmentId::R34, SegmentId::R12,  SegmentId::B34, SegmentId::B12};

/// Segments used for proposal generation, in feature-vector order.
inline constexpr std::array<SegmentId, 9> kProposalSegments = {
    SegmentId::NS,  SegmentId::EP,   SegmentId::UL34, SegmentId::UR34, SegmentId::U12,
    SegmentId::L34, SegmentId::UL12, SegmentId::R12,  SegmentId::L12};

inline constexpr std::size_t index_of(SegmentId s) { return static_cast<std::size_t>(s); }

std::string_view segment_name(SegmentId s);
std::optional<SegmentId> parse_segment(std::string_view name);

/// Left/right mirror partner (self for symmetric segments).
SegmentId mirror_segment(SegmentId s);

/// Position of `s` in kProposalSegments, if it belongs to the proposal set.
std::optional<std::size_t> proposal_index(SegmentId s);

/// Fractional rectangle of the canonical face, all coordinates in [0, 1].
struct FracRect {
  double fx1 = 0.0;
  double fy1 = 0.0;
  double fx2 = 1.0;
  double fy2 = 1.0;

  bool valid() const {
    return 0.0 <= fx1 && fx1 < fx2 && fx2 <= 1.0 && 0.0 <= fy1 && fy1 < fy2 && fy2 <= 1.0;
  }
  bool contains(const FracRect& o, double tol = 1e-9) const {
    return o.fx1 >= fx1 - tol && o.fy1 >= fy1 - tol && o.fx2 <= fx2 + tol && o.fy2 <= fy2 + tol;
  }
  FracRect intersect(const FracRect& o) const {
    return {std::max(fx1, o.fx1), std::max(fy1, o.fy1), std::min(fx2, o.fx2),
            std::min(fy2, o.fy2)};
  }
  bool operator==(const FracRect&) const = default;
};

struct ImageMeta {
  int width = 0;
  int height = 0;
};

/// Maps every SegmentId to its FracRect within the canonical face.
class SegmentCatalog {
 public:
  /// Default geometry: exact halves/three-fourths, plus interior eye-pair and nose patches.
  SegmentCatalog();

  const FracRect& rect(SegmentId s) const { return rects_[index_of(s)]; }
  void set(SegmentId s, const FracRect& r);

  bool operator==(const SegmentCatalog&) const = default;

 private:
  std::array<FracRect, kNumSegments> rects_;
};

const SegmentCatalog& default_catalog();

FracRect fraction_rect(SegmentId seg, const SegmentCatalog& catalog = default_catalog());

/// Face box scaled into the segment's fractional rectangle.
BBox segment_from_face(SegmentId seg, const BBox& face,
                       const SegmentCatalog& catalog = default_catalog());

struct FaceEstimate {
  BBox face;      ///< clipped to the image
  Point center;   ///< center of the unclipped estimate
  BBox unclipped;
};

/// Inverts segment_from_face for a detected segment box. Throws InvalidArgument for a
/// zero-width or zero-height detection.
FaceEstimate face_from_segment(SegmentId seg, const BBox& det, const ImageMeta& img,
                               const SegmentCatalog& catalog = default_catalog());

/// Fraction of the canonical face lying inside the image frame, or nullopt if none.
std::optional<FracRect> visible_face_region(const BBox& face, const ImageMeta& img);

}  // namespace segdet
