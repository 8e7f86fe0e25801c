#pragma once

#include <array>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "segdet/hog.hpp"
#include "segdet/nn.hpp"
#include "segdet/priors.hpp"

namespace segdet {

// ---- linear scorer -------------------------------------------------------------

struct LinearModel {
  std::vector<double> w;
  double b = 0.0;

  std::size_t dim() const { return w.size(); }
  /// Signed decision value; throws on a dimension mismatch.
  double decision(std::span<const double> x) const;
};

struct LinearTrainConfig {
  int epochs = 30;
  double step = 0.05;
  double lambda = 1e-4;          ///< L2 penalty on the standardized weights
  bool balance_classes = true;   ///< weight each class by n / (2 n_class)
  std::uint64_t seed = 0;

  void validate() const;
};

struct LinearTrainResult {
  LinearModel model;
  std::vector<double> epoch_objective;  ///< non-increasing; index 0 is the starting point
};

/// Hinge-loss linear classifier by seeded stochastic subgradient descent on
/// standardized features. An epoch that raises the objective is undone and the step
/// halved. Labels are +1 / -1.
LinearTrainResult train_linear(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                               const LinearTrainConfig& cfg = {});

/// Mean (class-weighted) hinge loss of `m` on the data, without the penalty.
double hinge_loss(const LinearModel& m, const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                  bool balance_classes = false);

// ---- per-image proposal data -----------------------------------------------------

/// One image with its proposals and, for training, the visible gt face.
struct ProposalImage {
  std::string image_id;
  Image image;
  std::optional<BBox> gt_face;
  std::vector<Proposal> proposals;
  std::vector<char> is_face;  ///< filled by label_proposals
};

/// A proposal is a face when its box overlaps the gt face at IOU >= theta.
void label_proposals(ProposalImage& pi, double theta = 0.5);

std::vector<LabeledProposal> labeled_proposals(const std::vector<ProposalImage>& images);

/// The detection that represents segment `k` (index into kProposalSegments) in `p`:
/// its first member of that segment, if any.
const SegmentDetection* segment_member(const Proposal& p, std::size_t k);

// ---- FSFD ------------------------------------------------------------------------

double fsfd_score(const Proposal& p, const PriorTable& t, const LinearModel& m);

struct FsfdModel {
  PriorTable priors;
  LinearModel linear;
};

FsfdModel train_fsfd(const std::vector<ProposalImage>& images, const PriorTable& priors,
                     const LinearTrainConfig& cfg = {});

// ---- SegFace ---------------------------------------------------------------------

/// One HOG scorer per segment of the 9-segment proposal set.
struct SegmentScorerBank {
  HogConfig hog;
  std::array<LinearModel, 9> scorers;
};

/// [per-segment scores (0 when absent) || prior features], length 3M + 2.
std::vector<double> segface_features(const Proposal& p, const Image& image, const SegmentScorerBank& bank,
                                     const PriorTable& t);

struct SegFaceModel {
  PriorTable priors;
  SegmentScorerBank bank;
  LinearModel master;

  double score(const Proposal& p, const Image& image) const;
  /// Scores of all proposals of one image, scoring each detection's patch once.
  std::vector<double> scores(const std::vector<Proposal>& proposals, const Image& image) const;
};

/// Segment scorers learn from each segment's detections (positive when the detection's
/// face estimate overlaps the gt face at IOU >= 0.5); the master model from all proposals.
SegFaceModel train_segface(const std::vector<ProposalImage>& images, const PriorTable& priors,
                           const LinearTrainConfig& cfg = {});

// ---- DeepSegFace-toy ---------------------------------------------------------------

struct MultiColumnConfig {
  int patch = 32;      ///< segment patches are resized to patch x patch
  int conv1 = 8;
  int conv2 = 16;
  int reduced = 4;     ///< 1x1 reduction channels per column
  int hidden = 64;

  void validate() const;
  int column_dim() const { return reduced * (patch / 4) * (patch / 4); }
};

class MultiColumnNet {
 public:
  struct Column {
    nn::Conv conv1, conv2, reduce;
  };

  MultiColumnNet() = default;
  MultiColumnNet(const MultiColumnConfig& cfg, std::uint64_t seed);

  const MultiColumnConfig& config() const { return cfg_; }
  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;

  /// Patch fed to a column for detection box `box` (bilinear, zero outside the image).
  nn::Tensor patch(const Image& image, const BBox& box) const;

  /// Softmax outputs {non-face, face}; absent segments get all-zero patches.
  std::array<double, 2> softmax(const Proposal& p, const Image& image) const;
  /// Same from explicit per-column patches (nullopt = absent).
  std::array<double, 2> softmax(const std::array<std::optional<nn::Tensor>, 9>& patches) const;
  double prob(const Proposal& p, const Image& image) const { return softmax(p, image)[1]; }

  /// Face probabilities of all proposals of one image, embedding each detection once.
  std::vector<double> probs(const std::vector<Proposal>& proposals, const Image& image) const;

  // building blocks used by the trainer
  struct ColumnCache {
    nn::Tensor x, a1, p1, a2, p2, out;
    std::vector<std::uint32_t> arg1, arg2;
  };
  void column_forward(std::size_t k, const nn::Tensor& x, ColumnCache& cache) const;
  void column_backward(std::size_t k, ColumnCache& cache, const nn::Tensor& dout);
  /// Head on the concatenated embeddings; returns softmax and, when `dconcat` is
  /// non-null, backpropagates weight * d(-log p_label) into it and into head gradients.
  std::array<double, 2> head(const std::vector<double>& concat, int label, double weight,
                             std::vector<double>* dconcat);

  std::array<Column, 9> columns;
  nn::Linear fc1, fc2;

 private:
  std::array<double, 2> head_forward(const std::vector<double>& concat, std::vector<double>& hidden) const;

  MultiColumnConfig cfg_;
};

struct DsfTrainConfig {
  nn::AdamConfig adam{1e-3, 0.9, 0.999, 1e-8, 0.0};
  int epochs = 6;
  int images_per_batch = 8;
  int proposals_per_image = 16;  ///< sampled per image and epoch
  std::uint64_t seed = 0;

  void validate() const;
};

struct DeepSegFaceModel {
  PriorTable priors;
  MultiColumnNet net;
  bool rerank = true;

  /// rerank(prob, p, priors) when rerank is set, else the probability.
  std::vector<double> scores(const std::vector<Proposal>& proposals, const Image& image) const;
};

/// Trains on the enumerated proposals themselves (subsets act as segment drop-out) with
/// class-balanced cross-entropy. `log` receives the mean loss of each epoch.
DeepSegFaceModel train_deepsegface(const std::vector<ProposalImage>& images, const PriorTable& priors,
                                   const MultiColumnConfig& arch = {}, const DsfTrainConfig& cfg = {},
                                   const std::function<void(int, double)>& log = {});

// ---- detection rule ----------------------------------------------------------------

struct DetectionResult {
  std::string image_id;
  std::optional<std::size_t> best;  ///< index of the chosen proposal
  BBox box;
  double score = -std::numeric_limits<double>::infinity();

  bool detected() const { return best.has_value(); }
};

/// Highest-scoring proposal if its score reaches `threshold`; ties keep the first.
DetectionResult detect(const std::string& image_id, const std::vector<Proposal>& proposals,
                       const std::vector<double>& scores,
                       double threshold = -std::numeric_limits<double>::infinity());

DetectionResult detect(const std::string& image_id, const std::vector<Proposal>& proposals,
                       const std::function<double(const Proposal&)>& scorer,
                       double threshold = -std::numeric_limits<double>::infinity());

// ---- model containers ----------------------------------------------------------------

/// {"kind", "dims", "weights": base64 of little-endian float64, "priors"}.
nlohmann::json to_json(const FsfdModel& m);
nlohmann::json to_json(const SegFaceModel& m);
nlohmann::json to_json(const DeepSegFaceModel& m);
FsfdModel fsfd_from_json(const nlohmann::json& j);
SegFaceModel segface_from_json(const nlohmann::json& j);
DeepSegFaceModel deepsegface_from_json(const nlohmann::json& j);

}  // namespace segdet
