#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "segdet/corpus.hpp"
#include "segdet/detectors.hpp"
#include "segdet/evalkit.hpp"

namespace segdet {

/// Detector simulation and proposal settings shared by training and evaluation.
struct PrepareConfig {
  DetectorNoise noise;
  std::size_t min_segments = 2;   ///< c
  std::size_t max_per_cluster = 10;  ///< zeta
  double label_iou = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Simulated detections, proposals and labels for one image. Seeds derive from cfg.seed
/// and the image id, so results do not depend on the order images are processed.
ProposalImage prepare_image(const AnnotatedImage& ai, const PrepareConfig& cfg);
std::vector<ProposalImage> prepare_images(const std::vector<AnnotatedImage>& images, const PrepareConfig& cfg);

PriorTable fit_priors(const std::vector<ProposalImage>& images);

using ProposalScorer = std::function<std::vector<double>(const ProposalImage&)>;

/// Runs the single-best-proposal rule on every image.
std::vector<DetectionResult> run_detector(const std::vector<ProposalImage>& images, const ProposalScorer& scorer);

std::vector<ImageOutcome> to_outcomes(const std::vector<ProposalImage>& images,
                                      const std::vector<DetectionResult>& detections);

std::vector<ImageOutcome> evaluate_detector(const std::vector<ProposalImage>& images, const ProposalScorer& scorer);

/// Fraction of gt faces covered by some proposal at IOU >= theta.
double proposal_coverage(const std::vector<ProposalImage>& images, double theta = 0.5);

EvalSummary summarize(const std::vector<ImageOutcome>& outcomes, std::optional<double> coverage = std::nullopt);

/// One JSON line per image: image_id, width, height, face (visible gt or null) and the
/// proposals as segment tag/box lists with their labels. Face estimates and proposal
/// boxes are recomputed on load.
nlohmann::ordered_json proposal_image_to_json(const ProposalImage& pi);
void write_proposals(const std::filesystem::path& path, const std::vector<ProposalImage>& images);
/// Images are taken from `corpus` by id; throws std::runtime_error naming the line on bad input.
std::vector<ProposalImage> read_proposals(const std::filesystem::path& path, const std::vector<AnnotatedImage>& corpus);

ProposalScorer fsfd_scorer(const FsfdModel& m);
ProposalScorer segface_scorer(const SegFaceModel& m);
ProposalScorer deepsegface_scorer(const DeepSegFaceModel& m);

}  // namespace segdet
