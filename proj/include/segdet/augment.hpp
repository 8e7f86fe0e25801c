#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "segdet/druid_loss.hpp"
#include "segdet/image.hpp"

namespace segdet {

using druid::GroundTruth;

/// Ground truth for a face box in image coordinates: segment boxes from the catalog,
/// each segment visible iff its FracRect lies inside the in-frame part of the face.
GroundTruth make_ground_truth(const BBox& face, const ImageMeta& img,
                              const SegmentCatalog& catalog = default_catalog());

/// Background sample: no face, nothing visible.
GroundTruth no_face_ground_truth();

enum class CropKind { Flip, ToL12, ToL34, ToR12, ToR34, ToU12, ToU34 };

inline constexpr std::array<CropKind, 7> kAllCropKinds = {
    CropKind::Flip, CropKind::ToL12, CropKind::ToL34, CropKind::ToR12,
    CropKind::ToR34, CropKind::ToU12, CropKind::ToU34};

std::string_view crop_kind_name(CropKind k);
std::optional<CropKind> parse_crop_kind(std::string_view name);

/// Segment a TO_* crop keeps visible (nullopt for Flip).
std::optional<SegmentId> crop_target(CropKind k);

/// Applicable kinds: Flip always; TO_X iff X is currently visible and the crop would
/// remove at least one pixel column/row carrying visible face beyond X's boundary.
std::vector<CropKind> crop_plan(const GroundTruth& gt, const ImageMeta& img,
                                const SegmentCatalog& catalog = default_catalog());

struct Sample {
  Image image;
  GroundTruth gt;
};

/// Crops at the face-fraction boundary of the target segment (rounded outward to whole
/// pixels) or mirrors the image; ground truth is rebuilt for the new frame. Throws
/// InvalidArgument when `kind` is not in crop_plan.
Sample apply_crop(const Image& image, const GroundTruth& gt, CropKind kind,
                  const SegmentCatalog& catalog = default_catalog());

struct PhotometricConfig {
  double blur_probability = 0.7;
  double blur_radius_min = 0.0;
  double blur_radius_max = 5.0;
  double gamma_exponent_stdev = 1.0;  ///< s ~ N(0, stdev^2); gamma = 2^s

  void validate() const;
};

/// Random draws behind one photometric transform.
struct PhotometricDraw {
  std::optional<double> blur_radius;
  double s = 0.0;
};

PhotometricDraw draw_photometric(const PhotometricConfig& cfg, std::uint64_t seed);

/// I_out = I_in^(2^s) on normalized intensities.
Image apply_gamma(const Image& image, double s);

/// Blur (if drawn) then gamma.
Image apply_photometric(const Image& image, const PhotometricDraw& draw);

Image photometric(const Image& image, const PhotometricConfig& cfg, std::uint64_t seed);

/// Background box of the face's size, inside the image, disjoint from the face.
/// Throws InvalidArgument if no placement exists or 100 attempts fail.
BBox negative_sample(const ImageMeta& img, const BBox& face, std::uint64_t seed);

/// One lazily materialized augmentation recipe.
struct AugmentOp {
  std::string kind;  ///< crop kind name, "PHOTOMETRIC" or "NEGATIVE"
  std::uint64_t seed = 0;
};

struct AugmentPlan {
  std::string source_id;
  std::vector<AugmentOp> ops;
};

nlohmann::ordered_json to_json(const AugmentPlan& plan);
AugmentPlan augment_plan_from_json(const nlohmann::json& j);

}  // namespace segdet
