#include "segdet/druid_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace segdet::druid {

namespace {

constexpr std::size_t idx(Term t) { return static_cast<std::size_t>(t); }

double hinge(double z) { return z > 0.0 ? z : 0.0; }

// One box-plus-visibility prediction group and its targets.
struct Group {
  const double* p;          // x1, y1, x2, y2, v
  BBox target;
  double vis_target;
  double gate;              // v_i (or v_F) multiplying the gated terms
  const BBox* container;    // face box for containment terms, null if none
  bool box_active;
};

struct IouParts {
  double iou = 0.0;
  std::array<double, 4> grad{};  // d IOU / d (x1, y1, x2, y2)
};

IouParts iou_with_grad(const double* p, const BBox& t) {
  IouParts r;
  const double wp = p[2] - p[0];
  const double hp = p[3] - p[1];
  const double wpc = hinge(wp);
  const double hpc = hinge(hp);
  const double ap = wpc * hpc;
  const double at = t.area();
  const double lo_x = std::max(p[0], t.x1), hi_x = std::min(p[2], t.x2);
  const double lo_y = std::max(p[1], t.y1), hi_y = std::min(p[3], t.y2);
  const double iw = hinge(hi_x - lo_x);
  const double ih = hinge(hi_y - lo_y);
  const double inter = iw * ih;
  const double uni = ap + at - inter;
  if (!(uni > 0.0)) return r;
  r.iou = inter / uni;

  const double d_inter = (uni + inter) / (uni * uni);
  const double d_area = -inter / (uni * uni);
  // partials of the intersection; ties resolve to the target side (zero subgradient)
  std::array<double, 4> di{};
  if (iw > 0.0 && ih > 0.0) {
    if (p[0] > t.x1) di[0] = -ih;
    if (p[2] < t.x2) di[2] = ih;
    if (p[1] > t.y1) di[1] = -iw;
    if (p[3] < t.y2) di[3] = iw;
  }
  std::array<double, 4> da{};
  if (wp > 0.0 && hp > 0.0) {
    da[0] = -hpc;
    da[2] = hpc;
    da[1] = -wpc;
    da[3] = wpc;
  }
  for (std::size_t k = 0; k < 4; ++k) r.grad[k] = d_inter * di[k] + d_area * da[k];
  return r;
}

// Fills `terms`; when `grad` is set, accumulates sum_k lambda_k dL_k/dp into grad[0..4].
void evaluate_group(const Group& g, const LossOptions& opts, TermValues& terms,
                    const TermValues* lambda, double* grad) {
  const double* p = g.p;
  const bool smooth = opts.mode == LossMode::Smooth;
  const std::array<double, 4> t = g.target.as_array();
  auto add = [&](std::size_t k, double dv) {
    if (grad) grad[k] += dv;
  };
  auto lam = [&](Term term) { return lambda ? (*lambda)[idx(term)] : 0.0; };

  // L_b
  double lb = 0.0;
  if (g.box_active) {
    for (std::size_t k = 0; k < 4; ++k) {
      const double d = p[k] - t[k];
      lb += d * d;
      add(k, lam(Term::B) * 2.0 * d);
    }
  }
  terms[idx(Term::B)] = lb;

  // L_v
  {
    const double d = p[4] - g.vis_target;
    terms[idx(Term::V)] = d * d;
    add(4, lam(Term::V) * 2.0 * d);
  }

  // L_x, L_y: ordering of the corners
  auto ordering = [&](Term term, std::size_t lo, std::size_t hi) {
    const double z = p[lo] - p[hi];
    if (smooth) {
      const double h = g.gate * hinge(z);
      terms[idx(term)] = h * h;
      if (z > 0.0) {
        add(lo, lam(term) * 2.0 * h * g.gate);
        add(hi, -lam(term) * 2.0 * h * g.gate);
      }
    } else {
      const double h = g.gate * (z > 0.0 ? 1.0 : 0.0);
      terms[idx(term)] = h * h;
    }
  };
  ordering(Term::X, 0, 2);
  ordering(Term::Y, 1, 3);

  // L_x1 .. L_y2: containment within the face box (identical in both modes)
  auto contain = [&](Term term, std::size_t k, double z, double dz_dp) {
    const double h = g.gate * hinge(z);
    terms[idx(term)] = h * h;
    if (z > 0.0) add(k, lam(term) * 2.0 * h * g.gate * dz_dp);
  };
  if (g.container) {
    contain(Term::X1, 0, g.container->x1 - p[0], -1.0);
    contain(Term::X2, 2, p[2] - g.container->x2, 1.0);
    contain(Term::Y1, 1, g.container->y1 - p[1], -1.0);
    contain(Term::Y2, 3, p[3] - g.container->y2, 1.0);
  } else {
    terms[idx(Term::X1)] = terms[idx(Term::X2)] = terms[idx(Term::Y1)] = terms[idx(Term::Y2)] = 0.0;
  }

  // L_O
  {
    const double active = g.gate != 0.0 ? 1.0 : 0.0;
    const IouParts io = iou_with_grad(p, g.target);
    double factor = 1.0 - io.iou;
    if (opts.printed_overlap) factor *= io.iou <= 0.0 ? 1.0 : 0.0;
    const double val = factor * active;
    terms[idx(Term::O)] = val * val;
    if (active != 0.0 && !opts.printed_overlap) {
      for (std::size_t k = 0; k < 4; ++k) add(k, lam(Term::O) * -2.0 * val * io.grad[k]);
    }
  }
}

void check_finite(const Prediction& pred, const GroundTruth& gt) {
  for (const auto& b : pred.branches) {
    for (double v : b) {
      if (!std::isfinite(v)) throw InvalidArgument("non-finite prediction value");
    }
  }
  for (double v : pred.face) {
    if (!std::isfinite(v)) throw InvalidArgument("non-finite prediction value");
  }
  auto finite_box = [](const BBox& b) {
    return std::isfinite(b.x1) && std::isfinite(b.y1) && std::isfinite(b.x2) && std::isfinite(b.y2);
  };
  if (!finite_box(gt.face)) throw InvalidArgument("non-finite ground-truth face box");
  for (const auto& b : gt.segments) {
    if (!finite_box(b)) throw InvalidArgument("non-finite ground-truth segment box");
  }
}

// The (up to) two groups that make up a branch.
BranchLoss branch_terms(const Prediction& pred, const GroundTruth& gt, std::size_t branch,
                        const LossOptions& opts, const TermValues* lambda, double* grad) {
  BranchLoss out;
  const double vf = gt.face_visibility();
  if (branch == kFaceBranch) {
    Group face{pred.face.data(), gt.face, vf, vf, nullptr, gt.has_face};
    evaluate_group(face, opts, out.own, lambda, grad);
    return out;
  }
  if (branch > kFaceBranch) throw InvalidArgument("branch index out of range");
  const auto& b = pred.branches[branch];
  const double vi = gt.visible[branch];
  Group own{b.data(), gt.segments[branch], vi, vi, &gt.face, gt.has_face};
  evaluate_group(own, opts, out.own, lambda, grad);
  Group aux{b.data() + 5, gt.face, vf, vf, nullptr, gt.has_face};
  evaluate_group(aux, opts, out.face_aux, lambda, grad ? grad + 5 : nullptr);
  return out;
}

double weighted(const TermValues& terms, const LossWeights& w) {
  double s = 0.0;
  for (std::size_t k = 0; k < kNumTerms; ++k) s += w.lambda[k] * terms[k];
  return s;
}

}  // namespace

double face_visibility(std::span<const int> visible) {
  if (visible.empty()) return 0.0;
  int sum = 0;
  for (int v : visible) sum += v;
  return static_cast<double>(sum) / static_cast<double>(visible.size());
}

double GroundTruth::face_visibility() const { return druid::face_visibility(visible); }

std::array<double, kNumOutputs> Prediction::flatten() const {
  std::array<double, kNumOutputs> out{};
  for (std::size_t i = 0; i < kNumSegments; ++i) {
    std::copy(branches[i].begin(), branches[i].end(), out.begin() + i * kBranchOutputs);
  }
  std::copy(face.begin(), face.end(), out.begin() + kNumSegments * kBranchOutputs);
  return out;
}

Prediction Prediction::unflatten(std::span<const double> values) {
  if (values.size() != kNumOutputs) throw InvalidArgument("prediction must have 145 values");
  Prediction p;
  for (std::size_t i = 0; i < kNumSegments; ++i) {
    std::copy_n(values.begin() + i * kBranchOutputs, kBranchOutputs, p.branches[i].begin());
  }
  std::copy_n(values.begin() + kNumSegments * kBranchOutputs, kFaceOutputs, p.face.begin());
  return p;
}

void LossWeights::validate() const {
  for (double l : lambda) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw InvalidArgument("loss weights must be finite and >= 0");
  }
}

BranchLoss loss_terms(const Prediction& pred, const GroundTruth& gt, std::size_t branch,
                      const LossOptions& opts) {
  check_finite(pred, gt);
  return branch_terms(pred, gt, branch, opts, nullptr, nullptr);
}

LossBreakdown loss_breakdown(const Prediction& pred, const GroundTruth& gt, const LossWeights& w,
                             const LossOptions& opts) {
  w.validate();
  check_finite(pred, gt);
  LossBreakdown out;
  for (std::size_t i = 0; i <= kFaceBranch; ++i) {
    out.branches[i] = branch_terms(pred, gt, i, opts, nullptr, nullptr);
    out.total += weighted(out.branches[i].own, w) + weighted(out.branches[i].face_aux, w);
  }
  return out;
}

double total_loss(const Prediction& pred, const GroundTruth& gt, const LossWeights& w,
                  const LossOptions& opts) {
  return loss_breakdown(pred, gt, w, opts).total;
}

std::array<double, kNumOutputs> loss_grad(const Prediction& pred, const GroundTruth& gt,
                                          const LossWeights& w, const LossOptions& opts) {
  if (opts.mode != LossMode::Smooth) {
    throw InvalidArgument("loss_grad requires LossMode::Smooth; literal indicators have no gradient");
  }
  w.validate();
  check_finite(pred, gt);
  std::array<double, kNumOutputs> grad{};
  for (std::size_t i = 0; i < kNumSegments; ++i) {
    branch_terms(pred, gt, i, opts, &w.lambda, grad.data() + i * kBranchOutputs);
  }
  branch_terms(pred, gt, kFaceBranch, opts, &w.lambda, grad.data() + kNumSegments * kBranchOutputs);
  return grad;
}

double distance_to_kink(const Prediction& pred, const GroundTruth& gt) {
  double d = std::numeric_limits<double>::infinity();
  auto note = [&](double z) { d = std::min(d, std::abs(z)); };
  auto group = [&](const double* p, const BBox& t, const BBox* container) {
    note(p[0] - p[2]);
    note(p[1] - p[3]);
    note(p[0] - t.x1);
    note(p[2] - t.x2);
    note(p[1] - t.y1);
    note(p[3] - t.y2);
    note(std::min(p[2], t.x2) - std::max(p[0], t.x1));
    note(std::min(p[3], t.y2) - std::max(p[1], t.y1));
    if (container) {
      note(container->x1 - p[0]);
      note(p[2] - container->x2);
      note(container->y1 - p[1]);
      note(p[3] - container->y2);
    }
  };
  for (std::size_t i = 0; i < kNumSegments; ++i) {
    group(pred.branches[i].data(), gt.segments[i], &gt.face);
    group(pred.branches[i].data() + 5, gt.face, nullptr);
  }
  group(pred.face.data(), gt.face, nullptr);
  return d;
}

double box_iou(const std::array<double, 4>& a, const BBox& b) { return iou_with_grad(a.data(), b).iou; }

}  // namespace segdet::druid
