#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "segdet/geometry.hpp"

namespace segdet::druid {

inline constexpr std::size_t kBranchOutputs = 10;
inline constexpr std::size_t kFaceOutputs = 5;
inline constexpr std::size_t kNumOutputs = kNumSegments * kBranchOutputs + kFaceOutputs;  // 145

/// Regression target in coordinates normalized to the network input square.
struct GroundTruth {
  BBox face;                                 ///< b^F
  std::array<BBox, kNumSegments> segments{}; ///< b_i
  std::array<int, kNumSegments> visible{};   ///< v_i in {0, 1}
  bool has_face = true;                      ///< false for background samples: box terms vanish

  double face_visibility() const;
};

/// v_F: the exact mean of the 14 binary visibilities.
double face_visibility(std::span<const int> visible);

/// Network output: per segment branch {box(4), v, face box(4), v_F}, then the face head
/// {box(4), v_F}. Boxes are unvalidated.
struct Prediction {
  std::array<std::array<double, kBranchOutputs>, kNumSegments> branches{};
  std::array<double, kFaceOutputs> face{};

  std::array<double, kNumOutputs> flatten() const;
  static Prediction unflatten(std::span<const double> values);
};

enum class Term : std::size_t { B = 0, V, X, Y, X1, X2, Y1, Y2, O };
inline constexpr std::size_t kNumTerms = 9;
using TermValues = std::array<double, kNumTerms>;

struct LossWeights {
  TermValues lambda{1, 1, 1, 1, 1, 1, 1, 1, 1};

  double& operator[](Term t) { return lambda[static_cast<std::size_t>(t)]; }
  double operator[](Term t) const { return lambda[static_cast<std::size_t>(t)]; }
  void validate() const;
};

/// Literal uses the printed indicator forms; Smooth replaces the ordering indicators by
/// squared hinges so the loss is differentiable almost everywhere.
enum class LossMode { Literal, Smooth };

struct LossOptions {
  LossMode mode = LossMode::Smooth;
  /// Keep the overlap indicator 1[IOU <= 0] exactly as printed; the default drops it so
  /// the term penalizes 1 - IOU for every visible segment.
  bool printed_overlap = false;
};

/// Branch index: 0..13 for segment branches, kFaceBranch for the face head.
inline constexpr std::size_t kFaceBranch = kNumSegments;

struct BranchLoss {
  TermValues own{};        ///< terms on the branch's own box and visibility
  TermValues face_aux{};   ///< terms on the branch's auxiliary face estimate (zero for the head)
};

struct LossBreakdown {
  std::array<BranchLoss, kNumSegments + 1> branches{};
  double total = 0.0;
};

/// Per-term values of one branch (unweighted).
BranchLoss loss_terms(const Prediction& pred, const GroundTruth& gt, std::size_t branch,
                      const LossOptions& opts = {});

/// All branches with weights applied; `total` is the weighted sum.
LossBreakdown loss_breakdown(const Prediction& pred, const GroundTruth& gt, const LossWeights& w,
                             const LossOptions& opts = {});

double total_loss(const Prediction& pred, const GroundTruth& gt, const LossWeights& w,
                  const LossOptions& opts = {});

/// Analytic gradient of total_loss with respect to all 145 outputs (flattened order).
/// Literal mode is rejected: its indicators have zero gradient almost everywhere.
std::array<double, kNumOutputs> loss_grad(const Prediction& pred, const GroundTruth& gt,
                                          const LossWeights& w, const LossOptions& opts = {});

/// Smallest distance from any input to a point where some term's derivative is
/// discontinuous (hinge corners, IOU min/max switches). Used to keep finite-difference
/// probes away from kinks.
double distance_to_kink(const Prediction& pred, const GroundTruth& gt);

/// Intersection over union that tolerates inverted predicted boxes (zero area).
double box_iou(const std::array<double, 4>& a, const BBox& b);

}  // namespace segdet::druid
