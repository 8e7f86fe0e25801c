#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "segdet/bbox.hpp"

namespace segdet {

/// Result of running one detector on one image under the single-face protocol.
struct ImageOutcome {
  std::string image_id;
  bool has_gt_face = false;
  std::optional<double> score;  ///< absent when the detector reported nothing
  std::optional<double> iou;    ///< present iff score and a gt face are both present
};

/// Builds an outcome; iou is computed only when both boxes exist.
ImageOutcome make_outcome(std::string image_id, const std::optional<BBox>& gt_face,
                          const std::optional<BBox>& detection, std::optional<double> score);

struct CurvePoint {
  double threshold = 0.0;
  double x = 0.0;
  double y = 0.0;
};

/// Ordered sweep; for ROC x = FAR, y = TAR; for PR x = recall, y = precision.
struct Curve {
  std::vector<CurvePoint> points;
};

struct RocResult {
  Curve curve;  ///< starts at (+inf, 0, 0)
  double tar_at_far(double target = 0.01) const;
  double auc() const;
};

struct PrResult {
  Curve curve;
  double recall_at_precision(double target = 0.99) const;
};

/// TAR over face images (score >= t and iou >= theta), FAR over no-face images only.
/// Throws InvalidArgument if there are no no-face or no face images.
RocResult roc_curve(const std::vector<ImageOutcome>& outcomes, double theta = 0.5);

/// Throws InvalidArgument if there is no face image.
PrResult pr_curve(const std::vector<ImageOutcome>& outcomes, double theta = 0.5);

/// For each theta, the fraction of gt faces with at least one proposal at iou >= theta.
/// `proposals[i]` belongs to `gt_faces[i]`; images without a gt face are skipped.
Curve coverage_upper_bound(const std::vector<std::vector<BBox>>& proposals,
                           const std::vector<std::optional<BBox>>& gt_faces,
                           const std::vector<double>& thetas);

double coverage_at(const std::vector<std::vector<BBox>>& proposals,
                   const std::vector<std::optional<BBox>>& gt_faces, double theta);

/// "threshold,x,y" with one row per point.
std::string curve_csv(const Curve& c);

struct EvalSummary {
  double tar_at_1pct_far = 0.0;
  double recall_at_99pct_precision = 0.0;
  std::optional<double> coverage_at_50pct;
};

nlohmann::json to_json(const EvalSummary& s);

}  // namespace segdet
