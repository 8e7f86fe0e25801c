#include "segdet/druid_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace segdet::druid {

namespace {

constexpr char kMagic[8] = {'D', 'R', 'U', 'I', 'D', 'T', 'O', 'Y'};
constexpr std::uint32_t kVersion = 1;

BBox normalize(const BBox& b, double w, double h) { return {b.x1 / w, b.y1 / h, b.x2 / w, b.y2 / h}; }

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

void ModelConfig::validate() const {
  if (input < 8 || input % 8) throw InvalidArgument("input side must be a positive multiple of 8");
  for (int c : trunk) {
    if (c < 1) throw InvalidArgument("trunk widths must be positive");
  }
  if (branch_channels < 1) throw InvalidArgument("branch width must be positive");
  if (branch_grid < 1 || trunk_side() % branch_grid) {
    throw InvalidArgument("branch grid must divide the trunk output side");
  }
}

nn::Tensor to_input(const Image& image, int input) {
  if (image.empty()) throw InvalidArgument("empty image");
  const Image r = (image.width() == input && image.height() == input) ? image : resize(image, input, input);
  nn::Tensor t(1, input, input);
  std::copy(r.pixels().begin(), r.pixels().end(), t.v.begin());
  // zero mean, unit variance per image
  const double n = static_cast<double>(t.v.size());
  const double mean = std::accumulate(t.v.begin(), t.v.end(), 0.0) / n;
  double var = 0.0;
  for (double v : t.v) var += (v - mean) * (v - mean);
  const double sd = std::max(std::sqrt(var / n), 1e-3);
  for (double& v : t.v) v = (v - mean) / sd;
  return t;
}

DruidSample make_sample(const Image& image, const std::optional<GroundTruth>& gt, int input) {
  DruidSample s;
  s.input = to_input(image, input);
  if (!gt || !gt->has_face) {
    s.target.has_face = false;
    return s;
  }
  const double w = image.width(), h = image.height();
  s.target = *gt;
  s.target.face = normalize(clip_box(gt->face, w, h), w, h);
  for (std::size_t i = 0; i < kNumSegments; ++i) s.target.segments[i] = normalize(gt->segments[i], w, h);
  return s;
}

// ---- network -----------------------------------------------------------------------

struct DruidNet::Workspace {
  nn::Tensor x;
  std::array<nn::Tensor, 3> act, out;  // per trunk stage: relu(conv + skip), pooled
  std::array<nn::Tensor, kNumSegments + 1> bact;
  std::array<nn::Tensor, kNumSegments + 1> bpool;
  std::vector<double> concat;
};

DruidNet::DruidNet(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg.validate();
  Rng rng(seed);
  int in = 1;
  for (int i = 0; i < 3; ++i) {
    const std::string name = "trunk" + std::to_string(i);
    trunk[i].conv = nn::Conv(name + ".conv", in, cfg.trunk[i], 3);
    trunk[i].skip = nn::Conv(name + ".skip", in, cfg.trunk[i], 1);
    nn::he_init(trunk[i].conv, rng);
    nn::he_init(trunk[i].skip, rng);
    in = cfg.trunk[i];
  }
  for (std::size_t j = 0; j <= kNumSegments; ++j) {
    const std::string name = j < kNumSegments ? "branch_" + std::string(segment_name(kAllSegments[j])) : "face";
    branch_conv[j] = nn::Conv(name + ".conv", in, cfg.branch_channels, 3);
    nn::he_init(branch_conv[j], rng);
  }
  const int pd = cfg.pooled_dim();
  for (std::size_t j = 0; j < kNumSegments; ++j) {
    branch_out[j] = nn::Linear("branch_" + std::string(segment_name(kAllSegments[j])) + ".out", pd,
                               static_cast<int>(kBranchOutputs));
    nn::he_init(branch_out[j], rng);
  }
  face_out = nn::Linear("face.out", pd * static_cast<int>(kNumSegments + 1), static_cast<int>(kFaceOutputs));
  nn::he_init(face_out, rng);
  // small output layers keep the initial predictions near their biases
  for (auto& l : branch_out) {
    for (double& v : l.weight.value) v *= 0.1;
  }
  for (double& v : face_out.weight.value) v *= 0.1;
}

std::vector<nn::Param*> DruidNet::params() {
  std::vector<nn::Param*> out;
  for (Stage& s : trunk) {
    for (nn::Conv* c : {&s.conv, &s.skip}) {
      out.push_back(&c->weight);
      out.push_back(&c->bias);
    }
  }
  for (nn::Conv& c : branch_conv) {
    out.push_back(&c.weight);
    out.push_back(&c.bias);
  }
  for (nn::Linear& l : branch_out) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  out.push_back(&face_out.weight);
  out.push_back(&face_out.bias);
  return out;
}

std::vector<const nn::Param*> DruidNet::params() const {
  auto ps = const_cast<DruidNet*>(this)->params();
  return {ps.begin(), ps.end()};
}

Prediction DruidNet::run(const nn::Tensor& x, Workspace& ws) const {
  if (x.c != 1 || x.h != cfg_.input || x.w != cfg_.input) {
    throw InvalidArgument("input must be 1 x " + std::to_string(cfg_.input) + " x " + std::to_string(cfg_.input));
  }
  ws.x = x;
  const nn::Tensor* in = &ws.x;
  nn::Tensor skip;
  for (int i = 0; i < 3; ++i) {
    nn::conv_forward(trunk[i].conv, *in, ws.act[i]);
    nn::conv_forward(trunk[i].skip, *in, skip);
    for (std::size_t k = 0; k < skip.size(); ++k) ws.act[i].v[k] += skip.v[k];
    nn::relu_inplace(ws.act[i].v);
    nn::avgpool_forward(ws.act[i], 2, ws.out[i]);
    in = &ws.out[i];
  }
  const int f = cfg_.trunk_side() / cfg_.branch_grid;
  const std::size_t pd = static_cast<std::size_t>(cfg_.pooled_dim());
  ws.concat.assign(pd * (kNumSegments + 1), 0.0);
  for (std::size_t j = 0; j <= kNumSegments; ++j) {
    nn::conv_forward(branch_conv[j], *in, ws.bact[j]);
    nn::relu_inplace(ws.bact[j].v);
    nn::avgpool_forward(ws.bact[j], f, ws.bpool[j]);
    // face head input: its own pooled vector first, then the 14 branches
    const std::size_t slot = j == kNumSegments ? 0 : j + 1;
    std::copy(ws.bpool[j].v.begin(), ws.bpool[j].v.end(), ws.concat.begin() + static_cast<std::ptrdiff_t>(slot * pd));
  }
  Prediction p;
  for (std::size_t j = 0; j < kNumSegments; ++j) nn::linear_forward(branch_out[j], ws.bpool[j].v, p.branches[j]);
  nn::linear_forward(face_out, ws.concat, p.face);
  return p;
}

Prediction DruidNet::forward(const nn::Tensor& x) const {
  Workspace ws;
  return run(x, ws);
}

void DruidNet::backprop(Workspace& ws, const std::array<double, kNumOutputs>& grad) {
  const std::size_t pd = static_cast<std::size_t>(cfg_.pooled_dim());
  const int f = cfg_.trunk_side() / cfg_.branch_grid;
  std::vector<double> dconcat(ws.concat.size(), 0.0);
  nn::linear_backward(face_out, ws.concat, std::span<const double>(grad).subspan(kNumSegments * kBranchOutputs),
                      dconcat);

  const nn::Tensor& t3 = ws.out[2];
  nn::Tensor dt3(t3.c, t3.h, t3.w), dpool, dact, dx;
  for (std::size_t j = 0; j <= kNumSegments; ++j) {
    const std::size_t slot = j == kNumSegments ? 0 : j + 1;
    dpool = nn::Tensor(ws.bpool[j].c, ws.bpool[j].h, ws.bpool[j].w);
    std::copy_n(dconcat.begin() + static_cast<std::ptrdiff_t>(slot * pd), pd, dpool.v.begin());
    if (j < kNumSegments) {
      std::vector<double> d(pd);
      nn::linear_backward(branch_out[j], ws.bpool[j].v, std::span<const double>(grad).subspan(j * kBranchOutputs, kBranchOutputs), d);
      add_into(dpool.v, d);
    }
    nn::avgpool_backward(dpool, f, dact);
    nn::relu_backward(ws.bact[j].v, dact.v);
    nn::conv_backward(branch_conv[j], t3, dact, &dx);
    add_into(dt3.v, dx.v);
  }

  nn::Tensor dout = std::move(dt3), dskip;
  for (int i = 2; i >= 0; --i) {
    const nn::Tensor& in = i == 0 ? ws.x : ws.out[i - 1];
    nn::avgpool_backward(dout, 2, dact);
    nn::relu_backward(ws.act[i].v, dact.v);
    if (i == 0) {
      nn::conv_backward(trunk[i].conv, in, dact, nullptr);
      nn::conv_backward(trunk[i].skip, in, dact, nullptr);
    } else {
      nn::conv_backward(trunk[i].conv, in, dact, &dx);
      nn::conv_backward(trunk[i].skip, in, dact, &dskip);
      add_into(dx.v, dskip.v);
      dout = std::move(dx);
    }
  }
}

double DruidNet::loss(const DruidSample& s, const LossWeights& w, bool accumulate) {
  Workspace ws;
  const Prediction p = run(s.input, ws);
  for (double v : p.flatten()) {
    if (!std::isfinite(v)) return std::numeric_limits<double>::quiet_NaN();
  }
  const LossOptions opts{LossMode::Smooth, false};
  const double l = total_loss(p, s.target, w, opts);
  if (accumulate) backprop(ws, loss_grad(p, s.target, w, opts));
  return l;
}

void DruidNet::init_output_bias(const std::vector<DruidSample>& samples) {
  std::array<std::array<double, 4>, kNumSegments> seg_sum{};
  std::array<double, kNumSegments> seg_n{}, vis_sum{};
  std::array<double, 4> face_sum{};
  double faces = 0, vf_sum = 0;
  for (const auto& s : samples) {
    const GroundTruth& g = s.target;
    vf_sum += g.has_face ? g.face_visibility() : 0.0;
    if (!g.has_face) continue;
    faces += 1;
    const auto fa = g.face.as_array();
    for (int k = 0; k < 4; ++k) face_sum[k] += fa[k];
    for (std::size_t i = 0; i < kNumSegments; ++i) {
      vis_sum[i] += g.visible[i];
      if (!g.visible[i]) continue;
      seg_n[i] += 1;
      const auto b = g.segments[i].as_array();
      for (int k = 0; k < 4; ++k) seg_sum[i][k] += b[k];
    }
  }
  if (samples.empty()) return;
  const double n = static_cast<double>(samples.size());
  std::array<double, 4> face_mean{0.25, 0.25, 0.75, 0.75};
  if (faces > 0) {
    for (int k = 0; k < 4; ++k) face_mean[k] = face_sum[k] / faces;
  }
  for (std::size_t i = 0; i < kNumSegments; ++i) {
    auto& b = branch_out[i].bias.value;
    for (int k = 0; k < 4; ++k) b[k] = seg_n[i] > 0 ? seg_sum[i][k] / seg_n[i] : face_mean[k];
    b[4] = vis_sum[i] / n;
    for (int k = 0; k < 4; ++k) b[5 + k] = face_mean[k];
    b[9] = vf_sum / n;
  }
  for (int k = 0; k < 4; ++k) face_out.bias.value[k] = face_mean[k];
  face_out.bias.value[4] = vf_sum / n;
}

// ---- training ------------------------------------------------------------------------

void TrainConfig::validate() const {
  adam.validate();
  if (epochs < 1) throw InvalidArgument("training needs at least one epoch");
  if (batch_size < 1) throw InvalidArgument("batch size must be positive");
}

TrainResult train(const std::vector<DruidSample>& samples, const ModelConfig& arch, const TrainConfig& cfg,
                  const LossWeights& w, const std::function<void(int, double)>& log) {
  cfg.validate();
  w.validate();
  if (samples.empty()) throw InvalidArgument("training corpus is empty");
  TrainResult res;
  res.net = DruidNet(arch, cfg.seed);
  res.net.init_output_bias(samples);
  auto params = res.net.params();
  nn::Adam opt(cfg.adam);
  std::vector<std::size_t> order(samples.size());
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(cfg.seed, 0xd00d0000ULL + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    double sum = 0;
    for (std::size_t start = 0, batch = 1; start < order.size(); start += bs, ++batch) {
      const std::size_t stop = std::min(order.size(), start + bs);
      for (nn::Param* p : params) p->zero_grad();
      for (std::size_t i = start; i < stop; ++i) {
        const double l = res.net.loss(samples[order[i]], w, true);
        if (!std::isfinite(l)) {
          std::ostringstream msg;
          msg << "training diverged: non-finite loss in epoch " << epoch + 1 << ", batch " << batch;
          throw std::runtime_error(msg.str());
        }
        sum += l;
      }
      opt.step(params, 1.0 / static_cast<double>(stop - start));
      if (!nn::all_finite(params)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite parameters after epoch " << epoch + 1 << ", batch " << batch;
        throw std::runtime_error(msg.str());
      }
    }
    const double mean = sum / static_cast<double>(samples.size());
    res.epoch_loss.push_back(mean);
    if (log) log(epoch + 1, mean);
  }
  return res;
}

// ---- inference -----------------------------------------------------------------------

Inference infer(const Image& image, const DruidNet& net) {
  const Prediction p = net.forward(to_input(image, net.config().input));
  const double w = image.width(), h = image.height();
  auto denorm = [&](double x1, double y1, double x2, double y2) { return BBox{x1 * w, y1 * h, x2 * w, y2 * h}; };
  Inference r;
  r.face = denorm(p.face[0], p.face[1], p.face[2], p.face[3]);
  r.confidence = std::clamp(p.face[4], 0.0, 1.0);
  for (std::size_t i = 0; i < kNumSegments; ++i) {
    const auto& b = p.branches[i];
    r.segments[i].box = denorm(b[0], b[1], b[2], b[3]);
    r.segments[i].visibility = std::clamp(b[4], 0.0, 1.0);
  }
  return r;
}

// ---- parameter file ------------------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view b) : b_(b) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw InvalidArgument("parameter file is truncated");
  }
  std::string_view b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_params(const DruidNet& net) {
  const ModelConfig& c = net.config();
  std::string out(kMagic, sizeof kMagic);
  put_u32(out, kVersion);
  for (int v : {c.input, c.trunk[0], c.trunk[1], c.trunk[2], c.branch_channels, c.branch_grid}) {
    put_u32(out, static_cast<std::uint32_t>(v));
  }
  const auto ps = net.params();
  put_u32(out, static_cast<std::uint32_t>(ps.size()));
  for (const nn::Param* p : ps) {
    put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put_u32(out, static_cast<std::uint32_t>(p->shape.size()));
    for (int d : p->shape) put_u32(out, static_cast<std::uint32_t>(d));
  }
  for (const nn::Param* p : ps) out += nn::pack_f64(p->value);
  return out;
}

DruidNet deserialize_params(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) {
    throw InvalidArgument("not a DRUIDTOY parameter file");
  }
  const std::uint32_t version = r.u32();
  if (version != kVersion) throw InvalidArgument("unsupported parameter file version " + std::to_string(version));
  ModelConfig c;
  c.input = static_cast<int>(r.u32());
  for (int& t : c.trunk) t = static_cast<int>(r.u32());
  c.branch_channels = static_cast<int>(r.u32());
  c.branch_grid = static_cast<int>(r.u32());
  DruidNet net(c, 0);
  auto ps = net.params();
  if (r.u32() != ps.size()) throw InvalidArgument("parameter count does not match the architecture");
  for (nn::Param* p : ps) {
    const std::string_view name = r.take(r.u32());
    if (name != p->name) throw InvalidArgument("unexpected parameter " + std::string(name));
    const std::uint32_t rank = r.u32();
    if (rank != p->shape.size()) throw InvalidArgument("rank mismatch for " + p->name);
    for (int d : p->shape) {
      if (r.u32() != static_cast<std::uint32_t>(d)) throw InvalidArgument("shape mismatch for " + p->name);
    }
  }
  for (nn::Param* p : ps) {
    p->value = nn::unpack_f64(r.take(p->size() * 8));
    for (double v : p->value) {
      if (!std::isfinite(v)) throw InvalidArgument("non-finite value in " + p->name);
    }
  }
  if (!r.done()) throw InvalidArgument("trailing bytes in parameter file");
  return net;
}

void save_params(const std::filesystem::path& path, const DruidNet& net) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  const std::string b = serialize_params(net);
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

DruidNet load_params(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return deserialize_params(ss.str());
}

}  // namespace segdet::druid
