#include <doctest.h>

#include <cmath>

#include "segdet/augment.hpp"
#include "segdet/druid_loss.hpp"
#include "segdet/rng.hpp"

using namespace segdet;
using namespace segdet::druid;

namespace {

GroundTruth random_gt(Rng& rng) {
  const double x1 = rng.uniform(0.0, 0.4), y1 = rng.uniform(0.0, 0.4);
  GroundTruth gt = make_ground_truth({x1, y1, x1 + rng.uniform(0.3, 0.6), y1 + rng.uniform(0.3, 0.6)}, {1, 1});
  for (auto& v : gt.visible) v = rng.bernoulli(0.6) ? 1 : 0;
  return gt;
}

Prediction exact_prediction(const GroundTruth& gt) {
  Prediction p;
  const double vf = gt.face_visibility();
  for (std::size_t i = 0; i < kNumSegments; ++i) {
    const auto b = gt.segments[i].as_array();
    const auto f = gt.face.as_array();
    std::copy(b.begin(), b.end(), p.branches[i].begin());
    p.branches[i][4] = gt.visible[i];
    std::copy(f.begin(), f.end(), p.branches[i].begin() + 5);
    p.branches[i][9] = vf;
  }
  const auto f = gt.face.as_array();
  std::copy(f.begin(), f.end(), p.face.begin());
  p.face[4] = vf;
  return p;
}

Prediction perturbed(const Prediction& base, Rng& rng, double sigma) {
  auto v = base.flatten();
  for (double& x : v) x += rng.normal(0.0, sigma);
  return Prediction::unflatten(v);
}

}  // namespace

TEST_CASE("face visibility is the mean of the fourteen indicators") {
  std::array<int, 14> v{1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0, 1, 0};
  CHECK(face_visibility(v) == 0.5);
  std::array<int, 14> all{};
  all.fill(1);
  CHECK(face_visibility(all) == 1.0);
}

TEST_CASE("flatten and unflatten are inverse") {
  Rng rng(1);
  Prediction p = perturbed(Prediction{}, rng, 1.0);
  CHECK(Prediction::unflatten(p.flatten()).flatten() == p.flatten());
  CHECK_THROWS_AS(Prediction::unflatten(std::vector<double>(10)), InvalidArgument);
}

TEST_CASE("loss vanishes at the ground truth in both modes") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const GroundTruth gt = random_gt(rng);
    const Prediction p = exact_prediction(gt);
    CHECK(total_loss(p, gt, {}) == 0.0);
    CHECK(total_loss(p, gt, {}, {LossMode::Literal}) == 0.0);
    CHECK(total_loss(p, gt, {}, {LossMode::Smooth, true}) == 0.0);
  }
  GroundTruth bg = no_face_ground_truth();
  CHECK(total_loss(Prediction{}, bg, {}) == 0.0);
}

TEST_CASE("loss is nonnegative on random inputs") {
  Rng rng(3);
  for (int trial = 0; trial < 20000; ++trial) {
    const GroundTruth gt = random_gt(rng);
    const Prediction p = perturbed(Prediction{}, rng, 1.0);
    const LossMode mode = trial % 2 ? LossMode::Literal : LossMode::Smooth;
    const auto br = loss_breakdown(p, gt, {}, {mode});
    CHECK(br.total >= 0.0);
  }
}

TEST_CASE("smooth gradient matches central differences") {
  Rng rng(4);
  const double h = 1e-5;
  int checked = 0;
  while (checked < 30) {
    const GroundTruth gt = random_gt(rng);
    const Prediction p = perturbed(exact_prediction(gt), rng, 0.1);
    if (distance_to_kink(p, gt) < 2 * h) continue;
    LossWeights w;
    for (double& l : w.lambda) l = rng.uniform(0.1, 2.0);
    const auto g = loss_grad(p, gt, w);
    auto x = p.flatten();
    double num = 0, den_a = 0, den_n = 0;
    for (std::size_t k = 0; k < kNumOutputs; ++k) {
      const double keep = x[k];
      x[k] = keep + h;
      const double up = total_loss(Prediction::unflatten(x), gt, w);
      x[k] = keep - h;
      const double dn = total_loss(Prediction::unflatten(x), gt, w);
      x[k] = keep;
      const double fd = (up - dn) / (2 * h);
      num += (fd - g[k]) * (fd - g[k]);
      den_a += g[k] * g[k];
      den_n += fd * fd;
    }
    CHECK(std::sqrt(num) / std::max({std::sqrt(den_a), std::sqrt(den_n), 1e-12}) < 1e-4);
    ++checked;
  }
}

TEST_CASE("literal mode has no gradient") {
  Rng rng(5);
  const GroundTruth gt = random_gt(rng);
  CHECK_THROWS_AS(loss_grad(exact_prediction(gt), gt, {}, {LossMode::Literal}), InvalidArgument);
}

TEST_CASE("invisible segments contribute only box and visibility terms") {
  Rng rng(6);
  GroundTruth gt = random_gt(rng);
  gt.visible.fill(0);
  Prediction p = perturbed(exact_prediction(gt), rng, 0.3);
  for (std::size_t i = 0; i < kNumSegments; ++i) {
    const auto t = loss_terms(p, gt, i);
    for (Term term : {Term::X, Term::Y, Term::X1, Term::X2, Term::Y1, Term::Y2, Term::O}) {
      CHECK(t.own[static_cast<std::size_t>(term)] == 0.0);
      CHECK(t.face_aux[static_cast<std::size_t>(term)] == 0.0);
    }
  }
  // the ungated terms still see the error
  CHECK(loss_terms(p, gt, 0).own[static_cast<std::size_t>(Term::B)] > 0.0);
}

TEST_CASE("individual terms on a hand-built example") {
  GroundTruth gt = make_ground_truth({0.2, 0.2, 0.6, 0.8}, {1, 1});
  Prediction p = exact_prediction(gt);
  const std::size_t l12 = index_of(SegmentId::L12);
  // inverted x-order by 0.1, and x1 left of the face by 0.05
  p.branches[l12][0] = 0.15;
  p.branches[l12][2] = 0.05;
  const auto t = loss_terms(p, gt, l12);
  CHECK(t.own[static_cast<std::size_t>(Term::X)] == doctest::Approx(0.01));
  CHECK(t.own[static_cast<std::size_t>(Term::X1)] == doctest::Approx(0.0025));
  CHECK(t.own[static_cast<std::size_t>(Term::O)] == doctest::Approx(1.0));
  CHECK(loss_terms(p, gt, l12, {LossMode::Literal}).own[static_cast<std::size_t>(Term::X)] == 1.0);
  CHECK(t.own[static_cast<std::size_t>(Term::B)] ==
        doctest::Approx(0.05 * 0.05 + 0.35 * 0.35));
}

TEST_CASE("printed overlap indicator is active only without overlap") {
  GroundTruth gt = make_ground_truth({0.2, 0.2, 0.6, 0.8}, {1, 1});
  Prediction p = exact_prediction(gt);
  p.face[2] = 0.7;  // partial overlap
  const double smooth = loss_terms(p, gt, kFaceBranch).own[static_cast<std::size_t>(Term::O)];
  const double printed = loss_terms(p, gt, kFaceBranch, {LossMode::Smooth, true}).own[static_cast<std::size_t>(Term::O)];
  CHECK(smooth > 0.0);
  CHECK(printed == 0.0);
  p.face = {0.8, 0.8, 0.9, 0.9, 1.0};
  CHECK(loss_terms(p, gt, kFaceBranch, {LossMode::Smooth, true}).own[static_cast<std::size_t>(Term::O)] == 1.0);
}

TEST_CASE("loss changes continuously in smooth mode") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const GroundTruth gt = random_gt(rng);
    const Prediction p = perturbed(exact_prediction(gt), rng, 0.2);
    const Prediction q = perturbed(p, rng, 1e-8);
    CHECK(std::abs(total_loss(p, gt, {}) - total_loss(q, gt, {})) < 1e-5);
  }
}

TEST_CASE("weights and inputs are validated") {
  LossWeights w;
  w[Term::O] = -1;
  CHECK_THROWS_AS(w.validate(), InvalidArgument);
  Prediction p;
  p.face[0] = std::nan("");
  CHECK_THROWS_AS(total_loss(p, no_face_ground_truth(), {}), InvalidArgument);
}

TEST_CASE("box_iou tolerates inverted boxes") {
  CHECK(box_iou({0.5, 0.5, 0.1, 0.1}, {0, 0, 1, 1}) == 0.0);
  CHECK(box_iou({0, 0, 1, 1}, {0, 0, 1, 1}) == 1.0);
}
