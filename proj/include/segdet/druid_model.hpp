#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "segdet/druid_loss.hpp"
#include "segdet/image.hpp"
#include "segdet/nn.hpp"

namespace segdet::druid {

struct ModelConfig {
  int input = 64;
  std::array<int, 3> trunk{8, 16, 32};
  int branch_channels = 8;
  int branch_grid = 4;  ///< pooled grid side per branch; 1 is global average pooling

  void validate() const;
  int trunk_side() const { return input / 8; }
  int pooled_dim() const { return branch_channels * branch_grid * branch_grid; }
};

/// Network input plus target in coordinates normalized to the input square.
struct DruidSample {
  nn::Tensor input;
  GroundTruth target;
};

/// Resizes `image` to the input square and normalizes the ground truth; the face target
/// is the in-frame part of the face. Without a ground truth the sample is background.
DruidSample make_sample(const Image& image, const std::optional<GroundTruth>& gt, int input = 64);

nn::Tensor to_input(const Image& image, int input = 64);

class DruidNet {
 public:
  struct Stage {
    nn::Conv conv, skip;  // out = pool(relu(conv(x) + skip(x)))
  };

  DruidNet() = default;
  DruidNet(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::vector<nn::Param*> params();
  std::vector<const nn::Param*> params() const;

  Prediction forward(const nn::Tensor& x) const;

  /// Smooth-mode loss of one sample; with `accumulate`, adds its gradient to the params.
  double loss(const DruidSample& s, const LossWeights& w, bool accumulate);

  /// Sets the final biases to the mean training targets so training starts from the
  /// average box layout.
  void init_output_bias(const std::vector<DruidSample>& samples);

  std::array<Stage, 3> trunk;
  std::array<nn::Conv, kNumSegments + 1> branch_conv;  // the last one feeds the face head
  std::array<nn::Linear, kNumSegments> branch_out;
  nn::Linear face_out;

 private:
  struct Workspace;
  Prediction run(const nn::Tensor& x, Workspace& ws) const;
  void backprop(Workspace& ws, const std::array<double, kNumOutputs>& grad);

  ModelConfig cfg_;
};

struct TrainConfig {
  nn::AdamConfig adam;  // lr 1e-4, betas 0.9 / 0.999, eps 1e-8
  int epochs = 25;
  int batch_size = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  DruidNet net;
  std::vector<double> epoch_loss;
};

/// Adam on the smooth loss over shuffled minibatches. Throws std::runtime_error naming
/// the epoch and batch if the loss or any parameter becomes non-finite.
TrainResult train(const std::vector<DruidSample>& samples, const ModelConfig& arch, const TrainConfig& cfg,
                  const LossWeights& w = {}, const std::function<void(int, double)>& log = {});

struct SegmentReport {
  BBox box;
  double visibility = 0.0;
};

struct Inference {
  BBox face;
  double confidence = 0.0;
  std::array<SegmentReport, kNumSegments> segments{};
};

/// One forward pass on the resized image; boxes map back to source pixels.
Inference infer(const Image& image, const DruidNet& net);

void save_params(const std::filesystem::path& path, const DruidNet& net);
DruidNet load_params(const std::filesystem::path& path);
std::string serialize_params(const DruidNet& net);
DruidNet deserialize_params(std::string_view bytes);

}  // namespace segdet::druid
