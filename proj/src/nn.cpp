#include "segdet/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "segdet/bbox.hpp"

namespace segdet::nn {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (int k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
  }
  double s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

std::size_t product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

}  // namespace

Param::Param(std::string n, std::vector<int> s)
    : name(std::move(n)), shape(std::move(s)), value(product(shape), 0.0), grad(value.size(), 0.0) {}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

Conv::Conv(std::string name, int in_ch, int out_ch, int kernel)
    : in(in_ch), out(out_ch), k(kernel),
      weight(name + ".w", {out_ch, in_ch, kernel, kernel}),
      bias(name + ".b", {out_ch}) {
  if (kernel != 1 && kernel != 3) throw InvalidArgument("convolution kernel must be 1 or 3");
}

void conv_forward(const Conv& conv, const Tensor& x, Tensor& y) {
  if (x.c != conv.in) throw InvalidArgument("conv input channel mismatch");
  const int H = x.h, W = x.w, K = conv.k, r = K / 2;
  if (!(y.c == conv.out && y.h == H && y.w == W)) y = Tensor(conv.out, H, W);
  for (int oc = 0; oc < conv.out; ++oc) {
    double* dst = y.plane(oc);
    std::fill(dst, dst + static_cast<std::size_t>(H) * W, conv.bias.value[oc]);
    for (int ic = 0; ic < conv.in; ++ic) {
      const double* src = x.plane(ic);
      const double* wk = conv.weight.value.data() + (static_cast<std::size_t>(oc) * conv.in + ic) * K * K;
      for (int ky = 0; ky < K; ++ky) {
        const int oy = ky - r;
        const int y0 = std::max(0, -oy), y1 = std::min(H, H - oy);
        for (int kx = 0; kx < K; ++kx) {
          const int ox = kx - r;
          const int x0 = std::max(0, -ox), x1 = std::min(W, W - ox);
          const double wv = wk[ky * K + kx];
          for (int yy = y0; yy < y1; ++yy) {
            double* d = dst + static_cast<std::size_t>(yy) * W;
            const double* s = src + static_cast<std::size_t>(yy + oy) * W + ox;
            for (int xx = x0; xx < x1; ++xx) d[xx] += wv * s[xx];
          }
        }
      }
    }
  }
}

void conv_backward(Conv& conv, const Tensor& x, const Tensor& dy, Tensor* dx) {
  const int H = x.h, W = x.w, K = conv.k, r = K / 2;
  if (dy.c != conv.out || dy.h != H || dy.w != W) throw InvalidArgument("conv gradient shape mismatch");
  if (dx) *dx = Tensor(conv.in, H, W);
  std::vector<double> acc(static_cast<std::size_t>(W));
  for (int oc = 0; oc < conv.out; ++oc) {
    const double* g = dy.plane(oc);
    conv.bias.grad[oc] += std::accumulate(g, g + static_cast<std::size_t>(H) * W, 0.0);
    for (int ic = 0; ic < conv.in; ++ic) {
      const double* src = x.plane(ic);
      const std::size_t wbase = (static_cast<std::size_t>(oc) * conv.in + ic) * K * K;
      for (int ky = 0; ky < K; ++ky) {
        const int oy = ky - r;
        const int y0 = std::max(0, -oy), y1 = std::min(H, H - oy);
        for (int kx = 0; kx < K; ++kx) {
          const int ox = kx - r;
          const int x0 = std::max(0, -ox), x1 = std::min(W, W - ox);
          std::fill(acc.begin(), acc.end(), 0.0);
          const double wv = conv.weight.value[wbase + ky * K + kx];
          for (int yy = y0; yy < y1; ++yy) {
            const double* gr = g + static_cast<std::size_t>(yy) * W;
            const double* s = src + static_cast<std::size_t>(yy + oy) * W + ox;
            for (int xx = x0; xx < x1; ++xx) acc[xx] += gr[xx] * s[xx];
            if (dx) {
              double* d = dx->plane(ic) + static_cast<std::size_t>(yy + oy) * W + ox;
              for (int xx = x0; xx < x1; ++xx) d[xx] += wv * gr[xx];
            }
          }
          conv.weight.grad[wbase + ky * K + kx] += std::accumulate(acc.begin(), acc.end(), 0.0);
        }
      }
    }
  }
}

Linear::Linear(std::string name, int in_dim, int out_dim)
    : in(in_dim), out(out_dim), weight(name + ".w", {out_dim, in_dim}), bias(name + ".b", {out_dim}) {}

void linear_forward(const Linear& fc, std::span<const double> x, std::span<double> y) {
  if (x.size() != static_cast<std::size_t>(fc.in) || y.size() != static_cast<std::size_t>(fc.out)) {
    throw InvalidArgument("linear layer size mismatch");
  }
  for (int o = 0; o < fc.out; ++o) {
    y[o] = fc.bias.value[o] + dot(fc.weight.value.data() + static_cast<std::size_t>(o) * fc.in, x.data(), fc.in);
  }
}

void linear_backward(Linear& fc, std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
  if (!dx.empty()) std::fill(dx.begin(), dx.end(), 0.0);
  for (int o = 0; o < fc.out; ++o) {
    const double g = dy[o];
    fc.bias.grad[o] += g;
    if (g == 0.0) continue;
    double* gw = fc.weight.grad.data() + static_cast<std::size_t>(o) * fc.in;
    for (int i = 0; i < fc.in; ++i) gw[i] += g * x[i];
    if (!dx.empty()) {
      const double* w = fc.weight.value.data() + static_cast<std::size_t>(o) * fc.in;
      for (int i = 0; i < fc.in; ++i) dx[i] += g * w[i];
    }
  }
}

void relu_inplace(std::span<double> x) {
  for (double& v : x) v = v > 0.0 ? v : 0.0;
}

void relu_backward(std::span<const double> y, std::span<double> dy) {
  for (std::size_t i = 0; i < dy.size(); ++i) {
    if (!(y[i] > 0.0)) dy[i] = 0.0;
  }
}

void maxpool2_forward(const Tensor& x, Tensor& y, std::vector<std::uint32_t>& arg) {
  if (x.h % 2 || x.w % 2) throw InvalidArgument("max pooling needs even sides");
  const int H = x.h / 2, W = x.w / 2;
  y = Tensor(x.c, H, W);
  arg.assign(y.size(), 0);
  std::size_t o = 0;
  for (int c = 0; c < x.c; ++c) {
    const double* p = x.plane(c);
    for (int yy = 0; yy < H; ++yy) {
      for (int xx = 0; xx < W; ++xx, ++o) {
        const std::uint32_t base = static_cast<std::uint32_t>((2 * yy) * x.w + 2 * xx);
        std::uint32_t best = base;
        for (std::uint32_t cand : {base + 1, base + static_cast<std::uint32_t>(x.w),
                                   base + static_cast<std::uint32_t>(x.w) + 1}) {
          if (p[cand] > p[best]) best = cand;
        }
        y.v[o] = p[best];
        arg[o] = best;
      }
    }
  }
}

void maxpool2_backward(const Tensor& dy, const std::vector<std::uint32_t>& arg, const Tensor& x_shape, Tensor& dx) {
  dx = Tensor(x_shape.c, x_shape.h, x_shape.w);
  const std::size_t per = static_cast<std::size_t>(dy.h) * dy.w;
  for (int c = 0; c < dy.c; ++c) {
    double* d = dx.plane(c);
    for (std::size_t i = 0; i < per; ++i) d[arg[c * per + i]] += dy.v[c * per + i];
  }
}

void avgpool_forward(const Tensor& x, int f, Tensor& y) {
  if (f < 1 || x.h % f || x.w % f) throw InvalidArgument("average pooling window must divide the sides");
  const int H = x.h / f, W = x.w / f;
  y = Tensor(x.c, H, W);
  const double inv = 1.0 / (f * f);
  for (int c = 0; c < x.c; ++c) {
    for (int yy = 0; yy < x.h; ++yy) {
      const double* row = x.plane(c) + static_cast<std::size_t>(yy) * x.w;
      double* out = y.plane(c) + static_cast<std::size_t>(yy / f) * W;
      for (int xx = 0; xx < x.w; ++xx) out[xx / f] += row[xx];
    }
    double* p = y.plane(c);
    for (int i = 0; i < H * W; ++i) p[i] *= inv;
  }
}

void avgpool_backward(const Tensor& dy, int f, Tensor& dx) {
  dx = Tensor(dy.c, dy.h * f, dy.w * f);
  const double inv = 1.0 / (f * f);
  for (int c = 0; c < dx.c; ++c) {
    for (int yy = 0; yy < dx.h; ++yy) {
      const double* g = dy.plane(c) + static_cast<std::size_t>(yy / f) * dy.w;
      double* row = dx.plane(c) + static_cast<std::size_t>(yy) * dx.w;
      for (int xx = 0; xx < dx.w; ++xx) row[xx] = g[xx / f] * inv;
    }
  }
}

void he_init(Conv& conv, Rng& rng) {
  const double sd = std::sqrt(2.0 / (conv.in * conv.k * conv.k));
  for (double& w : conv.weight.value) w = rng.normal(0.0, sd);
  std::fill(conv.bias.value.begin(), conv.bias.value.end(), 0.0);
}

void he_init(Linear& fc, Rng& rng) {
  const double sd = std::sqrt(2.0 / fc.in);
  for (double& w : fc.weight.value) w = rng.normal(0.0, sd);
  std::fill(fc.bias.value.begin(), fc.bias.value.end(), 0.0);
}

void AdamConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw InvalidArgument("learning rate must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("moment decay rates must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw InvalidArgument("weight decay must be nonnegative");
}

void Adam::step(const std::vector<Param*>& params, double grad_scale) {
  if (m_.empty()) {
    for (const Param* p : params) {
      m_.emplace_back(p->size(), 0.0);
      v_.emplace_back(p->size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw InvalidArgument("optimizer parameter list changed");
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param& p = *params[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad[i] * grad_scale + cfg_.weight_decay * p.value[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      p.value[i] -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

std::size_t total_size(const std::vector<Param*>& params) {
  std::size_t n = 0;
  for (const Param* p : params) n += p->size();
  return n;
}

bool all_finite(const std::vector<Param*>& params) {
  for (const Param* p : params) {
    for (double v : p->value) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

std::string pack_f64(std::span<const double> values) {
  std::string out(values.size() * 8, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  return out;
}

std::vector<double> unpack_f64(std::string_view bytes) {
  if (bytes.size() % 8) throw InvalidArgument("float64 payload length is not a multiple of 8");
  std::vector<double> out(bytes.size() / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= bytes.size(); i += 3) {
    const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8) | static_cast<unsigned char>(bytes[i + 2]);
    out += kB64[(n >> 18) & 63];
    out += kB64[(n >> 12) & 63];
    out += kB64[(n >> 6) & 63];
    out += kB64[n & 63];
  }
  const std::size_t rest = bytes.size() - i;
  if (rest) {
    std::uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
    if (rest == 2) n |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    out += kB64[(n >> 18) & 63];
    out += kB64[(n >> 12) & 63];
    out += rest == 2 ? kB64[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4) throw InvalidArgument("base64 text length is not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else {
        v[k] = val(c);
        if (v[k] < 0 || pad) throw InvalidArgument("invalid base64 character");
      }
    }
    const std::uint32_t n = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out += static_cast<char>((n >> 16) & 0xff);
    if (pad < 2) out += static_cast<char>((n >> 8) & 0xff);
    if (pad < 1) out += static_cast<char>(n & 0xff);
  }
  return out;
}

}  // namespace segdet::nn
