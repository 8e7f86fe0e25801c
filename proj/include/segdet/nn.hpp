#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "segdet/rng.hpp"

// Small double-precision layer kit: channel-major tensors, explicit forward and
// backward functions, Adam. Backward functions accumulate parameter gradients.
namespace segdet::nn {

struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int c, int h, int w, double fill = 0.0) : c(c), h(h), w(w), v(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t size() const { return v.size(); }
  double* plane(int ch) { return v.data() + static_cast<std::size_t>(ch) * h * w; }
  const double* plane(int ch) const { return v.data() + static_cast<std::size_t>(ch) * h * w; }
  double& at(int ch, int y, int x) { return plane(ch)[static_cast<std::size_t>(y) * w + x]; }
  double at(int ch, int y, int x) const { return plane(ch)[static_cast<std::size_t>(y) * w + x]; }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }
};

struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<double> value;
  std::vector<double> grad;

  Param() = default;
  Param(std::string name, std::vector<int> shape);
  std::size_t size() const { return value.size(); }
  void zero_grad();
};

/// Square convolution with zero "same" padding; k is 1 or 3.
struct Conv {
  int in = 0, out = 0, k = 3;
  Param weight;  // [out][in][k][k]
  Param bias;    // [out]

  Conv() = default;
  Conv(std::string name, int in, int out, int k);
};

void conv_forward(const Conv& conv, const Tensor& x, Tensor& y);
/// Accumulates weight/bias gradients; writes dx when non-null.
void conv_backward(Conv& conv, const Tensor& x, const Tensor& dy, Tensor* dx);

struct Linear {
  int in = 0, out = 0;
  Param weight;  // [out][in]
  Param bias;    // [out]

  Linear() = default;
  Linear(std::string name, int in, int out);
};

void linear_forward(const Linear& fc, std::span<const double> x, std::span<double> y);
/// dx may be empty to skip the input gradient.
void linear_backward(Linear& fc, std::span<const double> x, std::span<const double> dy, std::span<double> dx);

void relu_inplace(std::span<double> x);
/// Zeroes dy wherever the ReLU output y is not positive.
void relu_backward(std::span<const double> y, std::span<double> dy);

/// 2x2 max pooling with stride 2 (even sides required); `arg` records the winners.
void maxpool2_forward(const Tensor& x, Tensor& y, std::vector<std::uint32_t>& arg);
void maxpool2_backward(const Tensor& dy, const std::vector<std::uint32_t>& arg, const Tensor& x_shape, Tensor& dx);

/// Average pooling over non-overlapping f x f windows (sides divisible by f).
void avgpool_forward(const Tensor& x, int f, Tensor& y);
void avgpool_backward(const Tensor& dy, int f, Tensor& dx);

/// He-normal weights (stdev sqrt(2 / fan_in)), zero biases.
void he_init(Conv& conv, Rng& rng);
void he_init(Linear& fc, Rng& rng);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }
  /// One update from the accumulated gradients, scaled by `grad_scale`.
  void step(const std::vector<Param*>& params, double grad_scale = 1.0);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

std::size_t total_size(const std::vector<Param*>& params);
bool all_finite(const std::vector<Param*>& params);

// Little-endian float64 packing and base64 text encoding for model containers.
std::string pack_f64(std::span<const double> values);
std::vector<double> unpack_f64(std::string_view bytes);
std::string base64_encode(std::string_view bytes);
std::string base64_decode(std::string_view text);

}  // namespace segdet::nn
