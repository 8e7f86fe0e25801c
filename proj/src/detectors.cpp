#include "segdet/detectors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace segdet {

namespace {

using json = nlohmann::json;

void check_labels(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  if (x.empty() || x.size() != y.size()) throw InvalidArgument("features and labels must be nonempty and aligned");
  const std::size_t d = x.front().size();
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i].size() != d) throw InvalidArgument("feature rows differ in length");
    for (double v : x[i]) {
      if (!std::isfinite(v)) throw InvalidArgument("non-finite feature value");
    }
    if (y[i] == 1) pos = true;
    else if (y[i] == -1) neg = true;
    else throw InvalidArgument("labels must be +1 or -1");
  }
  if (!pos || !neg) throw InvalidArgument("training data must contain both labels");
}

std::array<double, 2> class_weights(const std::vector<int>& y, bool balance) {
  if (!balance) return {1.0, 1.0};
  const double n = static_cast<double>(y.size());
  const double np = static_cast<double>(std::count(y.begin(), y.end(), 1));
  return {n / (2.0 * (n - np)), n / (2.0 * np)};  // {negative, positive}
}

double dot(const std::vector<double>& a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool same_detection(const SegmentDetection& a, const SegmentDetection& b) { return a.seg == b.seg && a.box == b.box; }

// Unique detections of an image's proposals in first-seen order.
std::vector<SegmentDetection> unique_members(const std::vector<Proposal>& proposals) {
  std::vector<SegmentDetection> out;
  for (const auto& p : proposals) {
    for (const auto& d : p.segments) {
      if (std::none_of(out.begin(), out.end(), [&](const SegmentDetection& o) { return same_detection(o, d); })) {
        out.push_back(d);
      }
    }
  }
  return out;
}

std::size_t find_detection(const std::vector<SegmentDetection>& list, const SegmentDetection& d) {
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (same_detection(list[i], d)) return i;
  }
  throw InvalidArgument("detection not found");
}

json linear_payload(const LinearModel& m, std::vector<double>& out) {
  out.insert(out.end(), m.w.begin(), m.w.end());
  out.push_back(m.b);
  return json(m.dim());
}

LinearModel take_linear(const std::vector<double>& v, std::size_t& pos, std::size_t dim) {
  if (pos + dim + 1 > v.size()) throw InvalidArgument("model weight payload is too short");
  LinearModel m;
  m.w.assign(v.begin() + static_cast<std::ptrdiff_t>(pos), v.begin() + static_cast<std::ptrdiff_t>(pos + dim));
  m.b = v[pos + dim];
  pos += dim + 1;
  return m;
}

void expect_kind(const json& j, const char* kind) {
  if (!j.is_object() || j.value("kind", "") != kind) {
    throw InvalidArgument(std::string("model container is not of kind ") + kind);
  }
}

}  // namespace

// ---- linear scorer -------------------------------------------------------------

double LinearModel::decision(std::span<const double> x) const {
  if (x.size() != w.size()) {
    throw InvalidArgument("feature dimension " + std::to_string(x.size()) + " does not match model dimension " +
                          std::to_string(w.size()));
  }
  return dot(w, x) + b;
}

void LinearTrainConfig::validate() const {
  if (epochs < 1) throw InvalidArgument("linear training needs at least one epoch");
  if (!(step > 0.0) || !std::isfinite(step)) throw InvalidArgument("linear step size must be positive");
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("linear penalty must be nonnegative");
}

double hinge_loss(const LinearModel& m, const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                  bool balance_classes) {
  const auto cw = class_weights(y, balance_classes);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    s += cw[y[i] > 0] * std::max(0.0, 1.0 - y[i] * m.decision(x[i]));
  }
  return s / static_cast<double>(x.size());
}

LinearTrainResult train_linear(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                               const LinearTrainConfig& cfg) {
  cfg.validate();
  check_labels(x, y);
  const std::size_t n = x.size(), d = x.front().size();

  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (const auto& row : x) {
    for (std::size_t j = 0; j < d; ++j) mu[j] += row[j];
  }
  for (double& m : mu) m /= static_cast<double>(n);
  for (const auto& row : x) {
    for (std::size_t j = 0; j < d; ++j) sd[j] += (row[j] - mu[j]) * (row[j] - mu[j]);
  }
  for (double& s : sd) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 1e-12)) s = 1.0;
  }
  std::vector<std::vector<double>> z(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) z[i][j] = (x[i][j] - mu[j]) / sd[j];
  }
  const auto cw = class_weights(y, cfg.balance_classes);

  std::vector<double> w(d, 0.0);
  double b = 0.0;
  auto objective = [&]() {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cw[y[i] > 0] * std::max(0.0, 1.0 - y[i] * (dot(w, z[i]) + b));
    double r = 0.0;
    for (double v : w) r += v * v;
    return s / static_cast<double>(n) + 0.5 * cfg.lambda * r;
  };

  LinearTrainResult res;
  double best = objective();
  res.epoch_objective.push_back(best);
  double eta = cfg.step;
  std::vector<std::size_t> order(n);
  for (int e = 0; e < cfg.epochs; ++e) {
    const std::vector<double> w_prev = w;
    const double b_prev = b;
    std::iota(order.begin(), order.end(), 0);
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(e)));
    rng.shuffle(order.begin(), order.end());
    for (std::size_t i : order) {
      const double margin = y[i] * (dot(w, z[i]) + b);
      if (cfg.lambda > 0.0) {
        const double shrink = 1.0 - eta * cfg.lambda;
        for (double& v : w) v *= shrink;
      }
      if (margin < 1.0) {
        const double g = eta * cw[y[i] > 0] * y[i];
        for (std::size_t j = 0; j < d; ++j) w[j] += g * z[i][j];
        b += g;
      }
    }
    const double obj = objective();
    if (obj > best) {
      w = w_prev;
      b = b_prev;
      eta *= 0.5;
    } else {
      best = obj;
    }
    res.epoch_objective.push_back(best);
  }

  // fold the standardization back into the weights
  res.model.w.resize(d);
  res.model.b = b;
  for (std::size_t j = 0; j < d; ++j) {
    res.model.w[j] = w[j] / sd[j];
    res.model.b -= w[j] * mu[j] / sd[j];
  }
  return res;
}

// ---- per-image proposal data -----------------------------------------------------

void label_proposals(ProposalImage& pi, double theta) {
  pi.is_face.assign(pi.proposals.size(), 0);
  if (!pi.gt_face) return;
  for (std::size_t i = 0; i < pi.proposals.size(); ++i) {
    pi.is_face[i] = iou(pi.proposals[i].bbox, *pi.gt_face) >= theta ? 1 : 0;
  }
}

std::vector<LabeledProposal> labeled_proposals(const std::vector<ProposalImage>& images) {
  std::vector<LabeledProposal> out;
  for (const auto& pi : images) {
    if (pi.is_face.size() != pi.proposals.size()) throw InvalidArgument(pi.image_id + ": proposals are not labeled");
    for (std::size_t i = 0; i < pi.proposals.size(); ++i) out.push_back({pi.proposals[i], pi.is_face[i] != 0});
  }
  return out;
}

const SegmentDetection* segment_member(const Proposal& p, std::size_t k) {
  for (const auto& d : p.segments) {
    if (proposal_index(d.seg) == k) return &d;
  }
  return nullptr;
}

// ---- FSFD ------------------------------------------------------------------------

double fsfd_score(const Proposal& p, const PriorTable& t, const LinearModel& m) {
  return m.decision(prior_features(p, t));
}

FsfdModel train_fsfd(const std::vector<ProposalImage>& images, const PriorTable& priors,
                     const LinearTrainConfig& cfg) {
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (const auto& lp : labeled_proposals(images)) {
    x.push_back(prior_features(lp.proposal, priors));
    y.push_back(lp.is_face ? 1 : -1);
  }
  return {priors, train_linear(x, y, cfg).model};
}

// ---- SegFace ---------------------------------------------------------------------

namespace {

// Per-column score of one detection.
double segment_score(const SegmentDetection& d, const Image& image, const SegmentScorerBank& bank, std::size_t k) {
  return bank.scorers[k].decision(hog_for_box(image, d.box, bank.hog));
}

std::vector<double> assemble_segface(const Proposal& p, const PriorTable& t,
                                     const std::function<double(const SegmentDetection&, std::size_t)>& score) {
  constexpr std::size_t M = kProposalSegments.size();
  std::vector<double> f(M, 0.0);
  for (std::size_t k = 0; k < M; ++k) {
    if (const SegmentDetection* d = segment_member(p, k)) f[k] = score(*d, k);
  }
  const auto prior = prior_features(p, t);
  f.insert(f.end(), prior.begin(), prior.end());
  return f;
}

}  // namespace

std::vector<double> segface_features(const Proposal& p, const Image& image, const SegmentScorerBank& bank,
                                     const PriorTable& t) {
  return assemble_segface(p, t, [&](const SegmentDetection& d, std::size_t k) {
    return segment_score(d, image, bank, k);
  });
}

double SegFaceModel::score(const Proposal& p, const Image& image) const {
  return master.decision(segface_features(p, image, bank, priors));
}

std::vector<double> SegFaceModel::scores(const std::vector<Proposal>& proposals, const Image& image) const {
  const auto dets = unique_members(proposals);
  std::vector<double> cache(dets.size(), 0.0);
  std::vector<char> have(dets.size(), 0);
  std::vector<double> out;
  out.reserve(proposals.size());
  for (const auto& p : proposals) {
    const auto f = assemble_segface(p, priors, [&](const SegmentDetection& d, std::size_t k) {
      const std::size_t i = find_detection(dets, d);
      if (!have[i]) {
        cache[i] = segment_score(d, image, bank, k);
        have[i] = 1;
      }
      return cache[i];
    });
    out.push_back(master.decision(f));
  }
  return out;
}

SegFaceModel train_segface(const std::vector<ProposalImage>& images, const PriorTable& priors,
                           const LinearTrainConfig& cfg) {
  constexpr std::size_t M = kProposalSegments.size();
  SegFaceModel model;
  model.priors = priors;
  std::array<std::vector<std::vector<double>>, M> xs;
  std::array<std::vector<int>, M> ys;
  for (const auto& pi : images) {
    for (const auto& d : unique_members(pi.proposals)) {
      const auto k = proposal_index(d.seg);
      if (!k) continue;
      xs[*k].push_back(hog_for_box(pi.image, d.box, model.bank.hog));
      ys[*k].push_back(pi.gt_face && iou(d.est_face, *pi.gt_face) >= 0.5 ? 1 : -1);
    }
  }
  const std::size_t dim = model.bank.hog.dimension();
  for (std::size_t k = 0; k < M; ++k) {
    const bool pos = std::count(ys[k].begin(), ys[k].end(), 1) > 0;
    const bool neg = std::count(ys[k].begin(), ys[k].end(), -1) > 0;
    if (pos && neg) {
      LinearTrainConfig c = cfg;
      c.seed = mix_seed(cfg.seed, k + 1);
      model.bank.scorers[k] = train_linear(xs[k], ys[k], c).model;
    } else {
      // a segment seen with one label only scores as that label
      model.bank.scorers[k].w.assign(dim, 0.0);
      model.bank.scorers[k].b = pos ? 1.0 : -1.0;
    }
  }

  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (const auto& pi : images) {
    if (pi.is_face.size() != pi.proposals.size()) throw InvalidArgument(pi.image_id + ": proposals are not labeled");
    const auto dets = unique_members(pi.proposals);
    std::vector<double> cache(dets.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const auto k = proposal_index(dets[i].seg);
      cache[i] = k ? segment_score(dets[i], pi.image, model.bank, *k) : 0.0;
    }
    for (std::size_t i = 0; i < pi.proposals.size(); ++i) {
      x.push_back(assemble_segface(pi.proposals[i], priors, [&](const SegmentDetection& d, std::size_t) {
        return cache[find_detection(dets, d)];
      }));
      y.push_back(pi.is_face[i] ? 1 : -1);
    }
  }
  LinearTrainConfig c = cfg;
  c.seed = mix_seed(cfg.seed, 0);
  model.master = train_linear(x, y, c).model;
  return model;
}

// ---- DeepSegFace-toy ---------------------------------------------------------------

void MultiColumnConfig::validate() const {
  if (patch < 4 || patch % 4) throw InvalidArgument("column patch side must be a positive multiple of 4");
  if (conv1 < 1 || conv2 < 1 || reduced < 1 || hidden < 1) throw InvalidArgument("layer widths must be positive");
}

MultiColumnNet::MultiColumnNet(const MultiColumnConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg.validate();
  Rng rng(seed);
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const std::string name = "col" + std::to_string(k);
    Column& c = columns[k];
    c.conv1 = nn::Conv(name + ".conv1", 1, cfg.conv1, 3);
    c.conv2 = nn::Conv(name + ".conv2", cfg.conv1, cfg.conv2, 3);
    c.reduce = nn::Conv(name + ".reduce", cfg.conv2, cfg.reduced, 1);
    nn::he_init(c.conv1, rng);
    nn::he_init(c.conv2, rng);
    nn::he_init(c.reduce, rng);
  }
  fc1 = nn::Linear("fc1", static_cast<int>(columns.size()) * cfg.column_dim(), cfg.hidden);
  fc2 = nn::Linear("fc2", cfg.hidden, 2);
  nn::he_init(fc1, rng);
  nn::he_init(fc2, rng);
}

std::vector<nn::Param*> MultiColumnNet::params() {
  std::vector<nn::Param*> out;
  for (Column& c : columns) {
    for (nn::Conv* conv : {&c.conv1, &c.conv2, &c.reduce}) {
      out.push_back(&conv->weight);
      out.push_back(&conv->bias);
    }
  }
  for (nn::Linear* fc : {&fc1, &fc2}) {
    out.push_back(&fc->weight);
    out.push_back(&fc->bias);
  }
  return out;
}

std::vector<const nn::Param*> MultiColumnNet::params() const {
  auto ps = const_cast<MultiColumnNet*>(this)->params();
  return {ps.begin(), ps.end()};
}

nn::Tensor MultiColumnNet::patch(const Image& image, const BBox& box) const {
  const Image p = resample_region(image, box, cfg_.patch, cfg_.patch);
  nn::Tensor t(1, cfg_.patch, cfg_.patch);
  std::copy(p.pixels().begin(), p.pixels().end(), t.v.begin());
  return t;
}

void MultiColumnNet::column_forward(std::size_t k, const nn::Tensor& x, ColumnCache& c) const {
  const Column& col = columns.at(k);
  c.x = x;
  nn::conv_forward(col.conv1, c.x, c.a1);
  nn::relu_inplace(c.a1.v);
  nn::maxpool2_forward(c.a1, c.p1, c.arg1);
  nn::conv_forward(col.conv2, c.p1, c.a2);
  nn::relu_inplace(c.a2.v);
  nn::maxpool2_forward(c.a2, c.p2, c.arg2);
  nn::conv_forward(col.reduce, c.p2, c.out);
}

void MultiColumnNet::column_backward(std::size_t k, ColumnCache& c, const nn::Tensor& dout) {
  Column& col = columns.at(k);
  nn::Tensor dp2, da2, dp1, da1;
  nn::conv_backward(col.reduce, c.p2, dout, &dp2);
  nn::maxpool2_backward(dp2, c.arg2, c.a2, da2);
  nn::relu_backward(c.a2.v, da2.v);
  nn::conv_backward(col.conv2, c.p1, da2, &dp1);
  nn::maxpool2_backward(dp1, c.arg1, c.a1, da1);
  nn::relu_backward(c.a1.v, da1.v);
  nn::conv_backward(col.conv1, c.x, da1, nullptr);
}

std::array<double, 2> MultiColumnNet::head_forward(const std::vector<double>& concat,
                                                   std::vector<double>& hidden) const {
  hidden.assign(static_cast<std::size_t>(cfg_.hidden), 0.0);
  nn::linear_forward(fc1, concat, hidden);
  nn::relu_inplace(hidden);
  std::array<double, 2> logits{};
  nn::linear_forward(fc2, hidden, logits);
  const double m = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - m), e1 = std::exp(logits[1] - m);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

std::array<double, 2> MultiColumnNet::head(const std::vector<double>& concat, int label, double weight,
                                           std::vector<double>* dconcat) {
  std::vector<double> hidden;
  const auto sm = head_forward(concat, hidden);
  if (!dconcat) return sm;
  std::array<double, 2> dlogits{weight * (sm[0] - (label == 0 ? 1.0 : 0.0)),
                                weight * (sm[1] - (label == 1 ? 1.0 : 0.0))};
  std::vector<double> dhidden(hidden.size());
  nn::linear_backward(fc2, hidden, dlogits, dhidden);
  nn::relu_backward(hidden, dhidden);
  dconcat->assign(concat.size(), 0.0);
  nn::linear_backward(fc1, concat, dhidden, *dconcat);
  return sm;
}

std::array<double, 2> MultiColumnNet::softmax(const std::array<std::optional<nn::Tensor>, 9>& patches) const {
  const std::size_t cd = static_cast<std::size_t>(cfg_.column_dim());
  std::vector<double> concat(columns.size() * cd);
  ColumnCache cache;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    column_forward(k, patches[k] ? *patches[k] : nn::Tensor(1, cfg_.patch, cfg_.patch), cache);
    std::copy(cache.out.v.begin(), cache.out.v.end(), concat.begin() + static_cast<std::ptrdiff_t>(k * cd));
  }
  std::vector<double> hidden;
  return head_forward(concat, hidden);
}

std::array<double, 2> MultiColumnNet::softmax(const Proposal& p, const Image& image) const {
  std::array<std::optional<nn::Tensor>, 9> patches;
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (const SegmentDetection* d = segment_member(p, k)) patches[k] = patch(image, d->box);
  }
  return softmax(patches);
}

std::vector<double> MultiColumnNet::probs(const std::vector<Proposal>& proposals, const Image& image) const {
  const std::size_t cd = static_cast<std::size_t>(cfg_.column_dim());
  const auto dets = unique_members(proposals);
  std::vector<std::vector<double>> emb(dets.size());
  std::array<std::vector<double>, 9> zero_emb;
  ColumnCache cache;
  std::vector<double> out, concat(columns.size() * cd), hidden;
  for (const auto& p : proposals) {
    for (std::size_t k = 0; k < columns.size(); ++k) {
      const std::vector<double>* e = nullptr;
      if (const SegmentDetection* d = segment_member(p, k)) {
        const std::size_t i = find_detection(dets, *d);
        if (emb[i].empty()) {
          column_forward(k, patch(image, d->box), cache);
          emb[i] = cache.out.v;
        }
        e = &emb[i];
      } else {
        if (zero_emb[k].empty()) {
          column_forward(k, nn::Tensor(1, cfg_.patch, cfg_.patch), cache);
          zero_emb[k] = cache.out.v;
        }
        e = &zero_emb[k];
      }
      std::copy(e->begin(), e->end(), concat.begin() + static_cast<std::ptrdiff_t>(k * cd));
    }
    out.push_back(head_forward(concat, hidden)[1]);
  }
  return out;
}

void DsfTrainConfig::validate() const {
  adam.validate();
  if (epochs < 1) throw InvalidArgument("DeepSegFace training needs at least one epoch");
  if (images_per_batch < 1 || proposals_per_image < 1) throw InvalidArgument("batch sizes must be positive");
}

std::vector<double> DeepSegFaceModel::scores(const std::vector<Proposal>& proposals, const Image& image) const {
  auto p = net.probs(proposals, image);
  if (rerank) {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = segdet::rerank(p[i], proposals[i], priors);
  }
  return p;
}

DeepSegFaceModel train_deepsegface(const std::vector<ProposalImage>& images, const PriorTable& priors,
                                   const MultiColumnConfig& arch, const DsfTrainConfig& cfg,
                                   const std::function<void(int, double)>& log) {
  cfg.validate();
  DeepSegFaceModel model;
  model.priors = priors;
  model.net = MultiColumnNet(arch, cfg.seed);
  MultiColumnNet& net = model.net;
  const std::size_t cd = static_cast<std::size_t>(arch.column_dim());
  constexpr std::size_t kCols = 9;

  double n_pos = 0, n_neg = 0;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& pi = images[i];
    if (pi.is_face.size() != pi.proposals.size()) throw InvalidArgument(pi.image_id + ": proposals are not labeled");
    for (char f : pi.is_face) (f ? n_pos : n_neg) += 1;
    if (!pi.proposals.empty()) usable.push_back(i);
  }
  if (n_pos == 0 || n_neg == 0) throw InvalidArgument("DeepSegFace training needs face and non-face proposals");
  const double w_pos = (n_pos + n_neg) / (2 * n_pos), w_neg = (n_pos + n_neg) / (2 * n_neg);

  auto params = net.params();
  nn::Adam opt(cfg.adam);
  const nn::Tensor zero_patch(1, arch.patch, arch.patch);
  std::array<MultiColumnNet::ColumnCache, kCols> zero_cache;
  std::array<nn::Tensor, kCols> zero_grad;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = usable;
    Rng rng(mix_seed(cfg.seed, 0x5eed0000ULL + static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    double epoch_loss = 0, epoch_weight = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.images_per_batch)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.images_per_batch));
      for (nn::Param* p : params) p->zero_grad();
      for (std::size_t k = 0; k < kCols; ++k) {
        net.column_forward(k, zero_patch, zero_cache[k]);
        zero_grad[k] = nn::Tensor(zero_cache[k].out.c, zero_cache[k].out.h, zero_cache[k].out.w);
      }
      double batch_weight = 0;

      for (std::size_t b = start; b < stop; ++b) {
        const ProposalImage& pi = images[order[b]];
        std::vector<std::size_t> picks(pi.proposals.size());
        std::iota(picks.begin(), picks.end(), 0);
        const std::size_t take = std::min(picks.size(), static_cast<std::size_t>(cfg.proposals_per_image));
        for (std::size_t i = 0; i < take; ++i) {
          std::swap(picks[i], picks[i + static_cast<std::size_t>(rng.below(picks.size() - i))]);
        }
        picks.resize(take);

        const auto dets = unique_members(pi.proposals);
        std::vector<MultiColumnNet::ColumnCache> caches(dets.size());
        std::vector<nn::Tensor> grads(dets.size());
        std::vector<char> used(dets.size(), 0);
        std::vector<std::array<long, kCols>> slots(take);
        for (std::size_t t = 0; t < take; ++t) {
          const Proposal& p = pi.proposals[picks[t]];
          for (std::size_t k = 0; k < kCols; ++k) {
            slots[t][k] = -1;
            if (const SegmentDetection* d = segment_member(p, k)) {
              const std::size_t i = find_detection(dets, *d);
              slots[t][k] = static_cast<long>(i);
              if (!used[i]) {
                net.column_forward(k, net.patch(pi.image, d->box), caches[i]);
                grads[i] = nn::Tensor(caches[i].out.c, caches[i].out.h, caches[i].out.w);
                used[i] = 1;
              }
            }
          }
        }

        std::vector<double> concat(kCols * cd), dconcat;
        for (std::size_t t = 0; t < take; ++t) {
          for (std::size_t k = 0; k < kCols; ++k) {
            const auto& src = slots[t][k] >= 0 ? caches[static_cast<std::size_t>(slots[t][k])].out.v : zero_cache[k].out.v;
            std::copy(src.begin(), src.end(), concat.begin() + static_cast<std::ptrdiff_t>(k * cd));
          }
          const int label = pi.is_face[picks[t]] ? 1 : 0;
          const double w = label ? w_pos : w_neg;
          const auto sm = net.head(concat, label, w, &dconcat);
          epoch_loss += -w * std::log(std::max(sm[label], 1e-300));
          epoch_weight += w;
          batch_weight += w;
          for (std::size_t k = 0; k < kCols; ++k) {
            nn::Tensor& g = slots[t][k] >= 0 ? grads[static_cast<std::size_t>(slots[t][k])] : zero_grad[k];
            for (std::size_t j = 0; j < cd; ++j) g.v[j] += dconcat[k * cd + j];
          }
        }
        for (std::size_t i = 0; i < dets.size(); ++i) {
          if (used[i]) net.column_backward(*proposal_index(dets[i].seg), caches[i], grads[i]);
        }
      }
      for (std::size_t k = 0; k < kCols; ++k) net.column_backward(k, zero_cache[k], zero_grad[k]);
      if (batch_weight > 0) opt.step(params, 1.0 / batch_weight);
      if (!nn::all_finite(params)) {
        throw std::runtime_error("DeepSegFace training diverged in epoch " + std::to_string(epoch + 1));
      }
    }
    if (log) log(epoch + 1, epoch_weight > 0 ? epoch_loss / epoch_weight : 0.0);
  }
  return model;
}

// ---- detection rule ----------------------------------------------------------------

DetectionResult detect(const std::string& image_id, const std::vector<Proposal>& proposals,
                       const std::vector<double>& scores, double threshold) {
  if (scores.size() != proposals.size()) throw InvalidArgument("one score per proposal is required");
  DetectionResult r;
  r.image_id = image_id;
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    if (!r.best || scores[i] > r.score) {
      r.best = i;
      r.score = scores[i];
    }
  }
  if (r.best && r.score >= threshold) {
    r.box = proposals[*r.best].bbox;
  } else {
    r.best.reset();
    r.score = -std::numeric_limits<double>::infinity();
  }
  return r;
}

DetectionResult detect(const std::string& image_id, const std::vector<Proposal>& proposals,
                       const std::function<double(const Proposal&)>& scorer, double threshold) {
  std::vector<double> s;
  s.reserve(proposals.size());
  for (const auto& p : proposals) s.push_back(scorer(p));
  return detect(image_id, proposals, s, threshold);
}

// ---- model containers ----------------------------------------------------------------

json to_json(const FsfdModel& m) {
  std::vector<double> w;
  json j;
  j["kind"] = "fsfd";
  j["dims"] = {{"features", linear_payload(m.linear, w)}};
  j["weights"] = nn::base64_encode(nn::pack_f64(w));
  j["priors"] = to_json(m.priors);
  return j;
}

FsfdModel fsfd_from_json(const json& j) {
  expect_kind(j, "fsfd");
  FsfdModel m;
  m.priors = prior_table_from_json(j.at("priors"));
  const auto w = nn::unpack_f64(nn::base64_decode(j.at("weights").get<std::string>()));
  std::size_t pos = 0;
  m.linear = take_linear(w, pos, j.at("dims").at("features").get<std::size_t>());
  if (pos != w.size()) throw InvalidArgument("model weight payload has trailing values");
  return m;
}

json to_json(const SegFaceModel& m) {
  std::vector<double> w;
  json dims;
  dims["patch"] = m.bank.hog.patch;
  dims["cell"] = m.bank.hog.cell;
  dims["bins"] = m.bank.hog.bins;
  dims["block"] = m.bank.hog.block;
  dims["clip"] = m.bank.hog.clip;
  dims["segments"] = m.bank.scorers.size();
  for (const auto& s : m.bank.scorers) dims["segment_features"] = linear_payload(s, w);
  dims["features"] = linear_payload(m.master, w);
  json j;
  j["kind"] = "segface";
  j["dims"] = dims;
  j["weights"] = nn::base64_encode(nn::pack_f64(w));
  j["priors"] = to_json(m.priors);
  return j;
}

SegFaceModel segface_from_json(const json& j) {
  expect_kind(j, "segface");
  SegFaceModel m;
  const json& d = j.at("dims");
  m.bank.hog.patch = d.at("patch").get<int>();
  m.bank.hog.cell = d.at("cell").get<int>();
  m.bank.hog.bins = d.at("bins").get<int>();
  m.bank.hog.block = d.at("block").get<int>();
  m.bank.hog.clip = d.at("clip").get<double>();
  m.bank.hog.validate();
  if (d.at("segments").get<std::size_t>() != m.bank.scorers.size()) throw InvalidArgument("segment count mismatch");
  const std::size_t sd = d.at("segment_features").get<std::size_t>();
  if (sd != m.bank.hog.dimension()) throw InvalidArgument("segment scorer dimension disagrees with the HOG layout");
  m.priors = prior_table_from_json(j.at("priors"));
  const auto w = nn::unpack_f64(nn::base64_decode(j.at("weights").get<std::string>()));
  std::size_t pos = 0;
  for (auto& s : m.bank.scorers) s = take_linear(w, pos, sd);
  m.master = take_linear(w, pos, d.at("features").get<std::size_t>());
  if (pos != w.size()) throw InvalidArgument("model weight payload has trailing values");
  return m;
}

json to_json(const DeepSegFaceModel& m) {
  const auto& c = m.net.config();
  std::vector<double> w;
  for (const nn::Param* p : m.net.params()) w.insert(w.end(), p->value.begin(), p->value.end());
  json j;
  j["kind"] = "deepsegface";
  j["dims"] = {{"patch", c.patch}, {"conv1", c.conv1}, {"conv2", c.conv2}, {"reduced", c.reduced}, {"hidden", c.hidden}};
  j["rerank"] = m.rerank;
  j["weights"] = nn::base64_encode(nn::pack_f64(w));
  j["priors"] = to_json(m.priors);
  return j;
}

DeepSegFaceModel deepsegface_from_json(const json& j) {
  expect_kind(j, "deepsegface");
  const json& d = j.at("dims");
  MultiColumnConfig c;
  c.patch = d.at("patch").get<int>();
  c.conv1 = d.at("conv1").get<int>();
  c.conv2 = d.at("conv2").get<int>();
  c.reduced = d.at("reduced").get<int>();
  c.hidden = d.at("hidden").get<int>();
  DeepSegFaceModel m;
  m.net = MultiColumnNet(c, 0);
  m.rerank = j.value("rerank", true);
  m.priors = prior_table_from_json(j.at("priors"));
  const auto w = nn::unpack_f64(nn::base64_decode(j.at("weights").get<std::string>()));
  auto params = m.net.params();
  if (w.size() != nn::total_size(params)) throw InvalidArgument("model weight payload does not match its dims");
  std::size_t pos = 0;
  for (nn::Param* p : params) {
    std::copy_n(w.begin() + static_cast<std::ptrdiff_t>(pos), p->size(), p->value.begin());
    pos += p->size();
  }
  return m;
}

}  // namespace segdet
