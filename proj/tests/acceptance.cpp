// Acceptance checks, one PASS/FAIL line per criterion. Pass criterion numbers to run a
// subset, e.g. `acceptance 1 2 3`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "segdet/augment.hpp"
#include "segdet/druid_model.hpp"
#include "segdet/pipeline.hpp"

using namespace segdet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = "failed: " + what;
    pass = pass && ok;
  }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- 1 -----------------------------------------------------------------------------

Outcome geometry_round_trip() {
  Outcome r;
  Rng rng(101);
  const ImageMeta img{1000, 1000};
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double x1 = rng.uniform(50, 450), y1 = rng.uniform(50, 450);
    const BBox face{x1, y1, x1 + rng.uniform(20, 500), y1 + rng.uniform(20, 500)};
    for (SegmentId s : kAllSegments) {
      const BBox f = face_from_segment(s, segment_from_face(s, face), img).face;
      worst = std::max({worst, std::abs(f.x1 - face.x1), std::abs(f.y1 - face.y1), std::abs(f.x2 - face.x2),
                        std::abs(f.y2 - face.y2)});
    }
  }
  r.require(worst <= 1e-9, "round-trip error " + fmt("%.3g", worst));

  // L12 covers the left half of the face: x2_face = min(w_img, x2 + (x2 - x1)).
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double x1 = rng.uniform(0, 900), y1 = rng.uniform(0, 800);
    const BBox det{x1, y1, x1 + rng.uniform(1, 300), y1 + rng.uniform(1, 200)};
    const BBox f = face_from_segment(SegmentId::L12, det, img).face;
    const double want = std::min<double>(img.width, det.x2 + (det.x2 - det.x1));
    if (!(f.x2 == want && f.x1 == det.x1 && f.y1 == det.y1 && f.y2 == det.y2)) ++mismatches;
  }
  r.require(mismatches == 0, std::to_string(mismatches) + " L12 closed-form mismatches");
  if (r.pass) r.detail = "max error " + fmt("%.2g", worst) + ", L12 closed form exact on 1000 boxes";
  return r;
}

// ---- 2 -----------------------------------------------------------------------------

Outcome subset_counts() {
  Outcome r;
  const ImageMeta img{200, 200};
  for (std::size_t n = 1; n <= 6; ++n) {
    Cluster cl;
    for (std::size_t i = 0; i < n; ++i) {
      const double o = static_cast<double>(i);
      const SegmentId s = kProposalSegments[i];
      cl.members.push_back(make_detection(s, segment_from_face(s, {50 + o, 50, 110 + o, 120}), img));
      cl.source_index.push_back(i);
    }
    for (std::size_t c = 1; c <= 3; ++c) {
      for (std::size_t anchor = 0; anchor < n; ++anchor) {
        cl.anchor = anchor;
        std::set<std::set<std::size_t>> brute;
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
          if (!(mask >> anchor & 1u)) continue;
          std::set<std::size_t> members;
          for (std::size_t i = 0; i < n; ++i)
            if (mask >> i & 1u) members.insert(i);
          if (members.size() >= c) brute.insert(members);
        }
        ProposalConfig cfg;
        cfg.min_segments = c;
        cfg.max_per_cluster = ProposalConfig::kUnlimited;
        std::set<std::set<std::size_t>> got;
        for (const auto& p : enumerate_subsets(cl, cfg)) {
          std::set<std::size_t> members;
          for (const auto& d : p.segments)
            for (std::size_t i = 0; i < n; ++i)
              if (d == cl.members[i]) members.insert(i);
          got.insert(members);
        }
        const std::string tag = "n=" + std::to_string(n) + " c=" + std::to_string(c);
        r.require(got == brute, tag + " subsets differ from the power set");
        r.require(subset_family_size(n, c) == brute.size(), tag + " family size");
      }
    }
  }
  r.require(subset_family_size(5, 2) == 15, "five members with c=2 should give 15 subsets");
  if (r.pass) r.detail = "n=1..6, c=1..3, every anchor; 5 members c=2 gives 15";
  return r;
}

// ---- 3 -----------------------------------------------------------------------------

Proposal with_segments(const std::vector<SegmentId>& segs) {
  Proposal p;
  for (SegmentId s : segs) {
    SegmentDetection d;
    d.seg = s;
    d.box = {0, 0, 10, 10};
    p.segments.push_back(d);
  }
  return p;
}

std::vector<LabeledProposal> random_labeled(std::size_t n, Rng& rng) {
  std::vector<LabeledProposal> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<SegmentId> segs;
    for (SegmentId s : kProposalSegments)
      if (rng.bernoulli(0.45)) segs.push_back(s);
    if (segs.empty()) segs.push_back(kProposalSegments[rng.below(9)]);
    rng.shuffle(segs.begin(), segs.end());
    out.push_back({with_segments(segs), rng.bernoulli(0.35)});
  }
  return out;
}

Outcome prior_features_check() {
  Outcome r;
  Rng rng(303);
  const auto train = random_labeled(10000, rng);
  const auto probe = random_labeled(10000, rng);
  const PriorTable table = fit_priors(train);

  // direct counts: per class, per segment, per exact segment set
  std::map<bool, double> total;
  std::map<bool, std::array<double, 9>> seg;
  std::map<bool, std::map<std::set<SegmentId>, double>> sets;
  for (const auto& lp : train) {
    std::set<SegmentId> s;
    for (const auto& d : lp.proposal.segments) s.insert(d.seg);
    total[lp.is_face] += 1;
    for (std::size_t k = 0; k < 9; ++k) seg[lp.is_face][k] += s.count(kProposalSegments[k]);
    sets[lp.is_face][s] += 1;
  }
  std::size_t bad = 0;
  for (const auto& lp : probe) {
    std::set<SegmentId> s;
    for (const auto& d : lp.proposal.segments) s.insert(d.seg);
    const auto f = prior_features(lp.proposal, table);
    if (f.size() != 20) {
      r.require(false, "dimension " + std::to_string(f.size()));
      return r;
    }
    std::vector<double> want(20, 0.0);
    for (std::size_t k = 0; k < 9; ++k) {
      if (!s.count(kProposalSegments[k])) continue;
      want[2 * k] = seg[true][k] / total[true];
      want[2 * k + 1] = seg[false][k] / total[false];
    }
    want[18] = sets[true].count(s) ? sets[true][s] / total[true] : 0.0;
    want[19] = sets[false].count(s) ? sets[false][s] / total[false] : 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < 20; ++i) {
      ok = ok && std::abs(f[i] - want[i]) <= 1e-12 && f[i] >= 0.0 && f[i] <= 1.0;
      if (i < 18 && !s.count(kProposalSegments[i / 2])) ok = ok && f[i] == 0.0;
    }
    bad += !ok;
  }
  r.require(bad == 0, std::to_string(bad) + " of 10000 proposals disagree with direct counting");
  if (r.pass) r.detail = "20 dims, 10000 proposals match direct counting";
  return r;
}

// ---- 4 -----------------------------------------------------------------------------

druid::GroundTruth random_gt(Rng& rng) {
  const double x1 = rng.uniform(0.0, 0.4), y1 = rng.uniform(0.0, 0.4);
  auto gt = make_ground_truth({x1, y1, x1 + rng.uniform(0.3, 0.6), y1 + rng.uniform(0.3, 0.6)}, {1, 1});
  for (auto& v : gt.visible) v = rng.bernoulli(0.6) ? 1 : 0;
  return gt;
}

druid::Prediction exact_prediction(const druid::GroundTruth& gt) {
  druid::Prediction p;
  const double vf = gt.face_visibility();
  const auto f = gt.face.as_array();
  for (std::size_t i = 0; i < kNumSegments; ++i) {
    const auto b = gt.segments[i].as_array();
    std::copy(b.begin(), b.end(), p.branches[i].begin());
    p.branches[i][4] = gt.visible[i];
    std::copy(f.begin(), f.end(), p.branches[i].begin() + 5);
    p.branches[i][9] = vf;
  }
  std::copy(f.begin(), f.end(), p.face.begin());
  p.face[4] = vf;
  return p;
}

Outcome druid_loss_check() {
  using namespace druid;
  Outcome r;
  Rng rng(404);
  double at_gt = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto gt = random_gt(rng);
    at_gt = std::max({at_gt, std::abs(total_loss(exact_prediction(gt), gt, {})),
                      std::abs(total_loss(exact_prediction(gt), gt, {}, {LossMode::Literal}))});
  }
  r.require(at_gt == 0.0, "loss at ground truth " + fmt("%.3g", at_gt));

  double lowest = INFINITY;
  for (int i = 0; i < 100000; ++i) {
    const auto gt = random_gt(rng);
    auto x = exact_prediction(gt).flatten();
    const double sigma = i % 3 == 0 ? 1.0 : i % 3 == 1 ? 0.1 : 1e-3;
    for (double& v : x) v += rng.normal(0.0, sigma);
    const LossMode mode = i % 2 ? LossMode::Literal : LossMode::Smooth;
    lowest = std::min(lowest, total_loss(Prediction::unflatten(x), gt, {}, {mode}));
  }
  r.require(lowest >= 0.0, "negative loss " + fmt("%.3g", lowest));

  const double h = 1e-5;
  double worst = 0.0;
  for (int checked = 0; checked < 100;) {
    const auto gt = random_gt(rng);
    auto x = exact_prediction(gt).flatten();
    for (double& v : x) v += rng.normal(0.0, 0.1);
    const auto p = Prediction::unflatten(x);
    if (distance_to_kink(p, gt) < 2 * h) continue;
    LossWeights w;
    for (double& l : w.lambda) l = rng.uniform(0.1, 2.0);
    const auto g = loss_grad(p, gt, w);
    double num = 0, da = 0, dn = 0;
    for (std::size_t k = 0; k < kNumOutputs; ++k) {
      const double keep = x[k];
      x[k] = keep + h;
      const double up = total_loss(Prediction::unflatten(x), gt, w);
      x[k] = keep - h;
      const double down = total_loss(Prediction::unflatten(x), gt, w);
      x[k] = keep;
      const double fd = (up - down) / (2 * h);
      num += (fd - g[k]) * (fd - g[k]);
      da += g[k] * g[k];
      dn += fd * fd;
    }
    worst = std::max(worst, std::sqrt(num) / std::max({std::sqrt(da), std::sqrt(dn), 1e-12}));
    ++checked;
  }
  r.require(worst < 1e-4, "finite-difference relative error " + fmt("%.3g", worst));

  std::array<int, 14> half{};
  for (int i = 0; i < 7; ++i) half[2 * i] = 1;
  r.require(face_visibility(half) == 0.5, "v_F of 7 visible segments");
  if (r.pass) r.detail = "max gradient rel. error " + fmt("%.2g", worst) + ", min loss " + fmt("%.3g", lowest);
  return r;
}

// ---- 5 -----------------------------------------------------------------------------

Outcome augmentation_closure() {
  Outcome r;
  const ImageMeta meta{128, 128};
  Image img(128, 128);
  Rng rng(505);
  for (float& v : img.pixels()) v = static_cast<float>(rng.uniform(0, 1));
  const auto& cat = default_catalog();
  const auto full = make_ground_truth({20, 20, 100, 100}, meta);
  for (CropKind k : kAllCropKinds) {
    const Sample s = apply_crop(img, full, k);
    for (SegmentId a : kAllSegments) {
      for (SegmentId b : kAllSegments) {
        if (!cat.rect(a).contains(cat.rect(b))) continue;
        r.require(!s.gt.visible[index_of(a)] || s.gt.visible[index_of(b)],
                  std::string(crop_kind_name(k)) + ": " + std::string(segment_name(a)) + " visible without " +
                      std::string(segment_name(b)));
      }
    }
    const auto& v = s.gt.visible;
    r.require(!v[index_of(SegmentId::L34)] ||
                  (v[index_of(SegmentId::L12)] && v[index_of(SegmentId::UL12)]),
              "L34 visible without L12 and UL12");
    double mean = 0;
    for (int x : v) mean += x;
    r.require(s.gt.face_visibility() == mean / 14.0, "v_F is not the mean visibility");
  }
  for (int trial = 0; trial < 200; ++trial) {
    const double x = static_cast<double>(rng.between(0, 60)), y = static_cast<double>(rng.between(0, 60));
    Sample base{img, make_ground_truth({x, y, x + 60, y + 60 * rng.uniform(1.0, 1.1)}, meta)};
    const auto plan = crop_plan(base.gt, meta);
    const CropKind k = plan[rng.below(plan.size())];
    if (k != CropKind::Flip) base = apply_crop(img, base.gt, k);
    const Sample once = apply_crop(base.image, base.gt, CropKind::Flip);
    const Sample twice = apply_crop(once.image, once.gt, CropKind::Flip);
    r.require(twice.gt.face == base.gt.face && twice.gt.segments == base.gt.segments &&
                  twice.gt.visible == base.gt.visible && twice.image == base.image,
              "flip twice differs from the original");
  }
  if (r.pass) r.detail = "14 x 14 containment over 7 ops, flip involution on 200 samples";
  return r;
}

// ---- 6 -----------------------------------------------------------------------------

std::vector<ProposalImage> synthetic_proposals(std::size_t n, std::uint64_t scene_seed, std::uint64_t noise_seed,
                                               double miss) {
  SceneSpec spec;
  spec.seed = scene_seed;
  PrepareConfig pc;
  pc.noise.miss_probability = miss;
  pc.noise.center_jitter = 2.0;
  pc.noise.false_positives = 2.0;
  pc.seed = noise_seed;
  return prepare_images(render_synthetic(spec, n), pc);
}

Outcome metric_engine() {
  Outcome r;
  Rng rng(606);
  std::vector<ImageOutcome> o;
  for (int i = 0; i < 1000; ++i) {
    ImageOutcome x;
    x.image_id = std::to_string(i);
    x.has_gt_face = rng.bernoulli(0.8);
    if (rng.bernoulli(0.9)) {
      x.score = std::round(rng.uniform(0, 1) * 40) / 40;
      if (x.has_gt_face) x.iou = rng.uniform(0, 1);
    }
    o.push_back(x);
  }
  const auto roc = roc_curve(o);
  const auto pr = pr_curve(o);
  std::set<double, std::greater<>> thresholds;
  double nf = 0, nn = 0;
  for (const auto& x : o) {
    if (x.score) thresholds.insert(*x.score);
    (x.has_gt_face ? nf : nn) += 1;
  }
  bool same = roc.curve.points.size() == thresholds.size() + 1 && pr.curve.points.size() == thresholds.size();
  std::size_t i = 0;
  for (double t : thresholds) {
    if (!same) break;
    double tp = 0, fa = 0, fired = 0;
    for (const auto& x : o) {
      if (!x.score || *x.score < t) continue;
      fired += 1;
      if (!x.has_gt_face) fa += 1;
      else if (*x.iou >= 0.5) tp += 1;
    }
    const auto& rp = roc.curve.points[i + 1];
    const auto& pp = pr.curve.points[i];
    same = rp.threshold == t && rp.x == fa / nn && rp.y == tp / nf && pp.threshold == t && pp.x == tp / nf &&
           pp.y == tp / fired;
    ++i;
  }
  r.require(same, "curves differ from the per-threshold recount");

  const auto train = synthetic_proposals(300, 61, 62, 0.3);
  const auto test = synthetic_proposals(300, 63, 64, 0.3);
  std::vector<std::vector<BBox>> boxes;
  std::vector<std::optional<BBox>> faces;
  for (const auto& pi : test) {
    std::vector<BBox> b;
    for (const auto& p : pi.proposals) b.push_back(p.bbox);
    boxes.push_back(b);
    faces.push_back(pi.gt_face);
  }
  std::vector<double> thetas;
  for (int k = 1; k <= 20; ++k) thetas.push_back(k / 20.0);
  const Curve cov = coverage_upper_bound(boxes, faces, thetas);
  for (std::size_t k = 1; k < cov.points.size(); ++k)
    r.require(cov.points[k].y <= cov.points[k - 1].y, "coverage increases with theta");
  const double c50 = coverage_at(boxes, faces, 0.5);

  const PriorTable priors = fit_priors(train);
  LinearTrainConfig svm;
  svm.epochs = 10;
  DsfTrainConfig dc;
  dc.epochs = 1;
  const std::vector<std::pair<std::string, ProposalScorer>> detectors{
      {"FSFD", fsfd_scorer(train_fsfd(train, priors, svm))},
      {"SegFace", segface_scorer(train_segface(train, priors, svm))},
      {"DSF", deepsegface_scorer(train_deepsegface(train, priors, {}, dc))}};
  for (const auto& [name, scorer] : detectors) {
    const auto curve = roc_curve(evaluate_detector(test, scorer)).curve;
    double top = 0;
    for (const auto& p : curve.points) top = std::max(top, p.y);
    r.require(top <= c50, name + " TAR " + fmt("%.3f", top) + " exceeds coverage");
  }
  if (r.pass) r.detail = "recount exact on 1000 outcomes; coverage@0.5 " + fmt("%.3f", c50) + " bounds all detectors";
  return r;
}

// ---- 7 -----------------------------------------------------------------------------

Outcome proposal_pipeline() {
  Outcome r;
  const auto train = synthetic_proposals(2000, 7, 11, 0.3);
  const auto test = synthetic_proposals(2000, 8, 12, 0.3);
  const PriorTable priors = fit_priors(train);
  const double fsfd = roc_curve(evaluate_detector(test, fsfd_scorer(train_fsfd(train, priors)))).tar_at_far(0.01);
  const double segface =
      roc_curve(evaluate_detector(test, segface_scorer(train_segface(train, priors)))).tar_at_far(0.01);
  const auto dsf_model = train_deepsegface(train, priors);
  const double dsf = roc_curve(evaluate_detector(test, deepsegface_scorer(dsf_model))).tar_at_far(0.01);
  r.require(dsf >= 0.80, "DSF TAR@1%FAR " + fmt("%.3f", dsf) + " < 0.80");
  r.require(dsf >= fsfd - 0.02, "DSF below FSFD - 0.02");
  r.detail = "TAR@1%FAR FSFD " + fmt("%.3f", fsfd) + ", SegFace " + fmt("%.3f", segface) + ", DSF " +
             fmt("%.3f", dsf) + (r.pass ? "" : " (" + r.detail + ")");
  return r;
}

// ---- 8 -----------------------------------------------------------------------------

Outcome druid_end_to_end() {
  Outcome r;
  SceneSpec spec;
  spec.seed = 7;
  const auto train_images = render_synthetic(spec, 2000);
  spec.seed = 8;
  const auto test_images = render_synthetic(spec, 1000);

  const druid::ModelConfig arch;
  std::vector<druid::DruidSample> samples;
  for (const auto& ai : train_images) samples.push_back(druid::make_sample(ai.image, ai.gt, arch.input));
  const druid::TrainConfig cfg;
  const auto net = druid::train(samples, arch, cfg).net;

  std::vector<ImageOutcome> outcomes;
  int faces = 0, hits = 0;
  for (const auto& ai : test_images) {
    const auto inf = druid::infer(ai.image, net);
    const auto gt = ai.visible_face();
    outcomes.push_back(make_outcome(ai.image_id, gt, inf.face, inf.confidence));
    if (gt && faces < 200) {
      ++faces;
      hits += iou(inf.face, *gt) >= 0.5;
    }
  }
  const double druid_tar = roc_curve(outcomes).tar_at_far(0.01);

  PrepareConfig pc;
  pc.noise.miss_probability = 0.6;
  pc.noise.center_jitter = 2.0;
  pc.noise.false_positives = 2.0;
  pc.seed = 11;
  const auto train = prepare_images(train_images, pc);
  pc.seed = 12;
  const auto test = prepare_images(test_images, pc);
  const auto dsf_model = train_deepsegface(train, fit_priors(train));
  const double dsf_tar = roc_curve(evaluate_detector(test, deepsegface_scorer(dsf_model))).tar_at_far(0.01);

  r.require(hits >= 180, std::to_string(hits) + "/200 faces at IOU >= 0.5");
  r.require(druid_tar > dsf_tar, "DRUID TAR not above DSF at miss 0.6");
  r.detail = std::to_string(hits) + "/200 faces at IOU >= 0.5, TAR@1%FAR DRUID " + fmt("%.3f", druid_tar) +
             " vs DSF(miss 0.6) " + fmt("%.3f", dsf_tar) + (r.pass ? "" : " (" + r.detail + ")");
  return r;
}

// ---- 9 -----------------------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream f(e.path(), std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    files[fs::relative(e.path(), dir).generic_string()] = s.str();
  }
  return files;
}

Outcome determinism() {
  Outcome r;
  const fs::path root = fs::temp_directory_path() / "segdet_acceptance_determinism";
  fs::remove_all(root);
  const auto in = [&](const std::string& p) { return (root / "in" / p).string(); };
  auto cli = [&](std::vector<std::string> args) {
    std::ostringstream out, err;
    const int rc = cli::run(args, out, err);
    if (rc != 0) r.require(false, args[0] + " exited with " + std::to_string(rc) + ": " + err.str());
    return rc == 0;
  };
  // inputs shared by both runs
  if (!cli({"gen-data", "--n", "40", "--seed", "9", "--out", in("data")}) ||
      !cli({"propose", "--corpus", in("data"), "--out", in("prop")}) ||
      !cli({"train-fsfd", "--proposals", in("prop"), "--svm.epochs", "5", "--out", in("fsfd")}) ||
      !cli({"train-segface", "--proposals", in("prop"), "--svm.epochs", "5", "--out", in("sf")}) ||
      !cli({"train-dsf", "--proposals", in("prop"), "--epochs", "1", "--out", in("dsf")}) ||
      !cli({"train-druid", "--corpus", in("data"), "--epochs", "1", "--out", in("druid")})) {
    return r;
  }
  {
    std::ofstream f(in("dets.jsonl"));
    f << R"({"image_id":"a","gt_face":[0,0,10,10],"box":[1,1,10,10],"score":0.7})" << "\n"
      << R"({"image_id":"b","gt_face":null,"box":[1,1,10,10],"score":0.2})" << "\n";
  }
  const std::vector<std::vector<std::string>> commands{
      {"gen-data", "--n", "40", "--seed", "9"},
      {"propose", "--corpus", in("data")},
      {"fit-priors", "--proposals", in("prop")},
      {"train-fsfd", "--proposals", in("prop"), "--svm.epochs", "5"},
      {"train-segface", "--proposals", in("prop"), "--svm.epochs", "5"},
      {"train-dsf", "--proposals", in("prop"), "--epochs", "1"},
      {"train-druid", "--corpus", in("data"), "--epochs", "1"},
      {"eval", "--detector", "fsfd", "--weights-in", in("fsfd/fsfd.json"), "--proposals", in("prop")},
      {"eval", "--detector", "segface", "--weights-in", in("sf/segface.json"), "--proposals", in("prop")},
      {"eval", "--detector", "dsf", "--weights-in", in("dsf/dsf.json"), "--proposals", in("prop")},
      {"eval", "--detector", "druid", "--weights-in", in("druid/druid.bin"), "--corpus", in("data")},
      {"eval", "--detector", "detections", "--detections", in("dets.jsonl")},
      {"loss-check", "--samples", "20"},
      {"coverage", "--proposals", in("prop")},
  };
  std::size_t compared = 0;
  for (std::size_t i = 0; i < commands.size(); ++i) {
    std::map<std::string, std::string> runs[2];
    for (int k = 0; k < 2; ++k) {
      const fs::path out = root / ("run" + std::to_string(k)) / std::to_string(i);
      auto args = commands[i];
      args.insert(args.end(), {"--out", out.string()});
      if (!cli(args)) return r;
      runs[k] = snapshot(out);
    }
    r.require(runs[0] == runs[1], "outputs of '" + commands[i][0] + "' differ between runs");
    compared += runs[0].size();
  }
  fs::remove_all(root);
  if (r.pass) r.detail = std::to_string(commands.size()) + " invocations, " + std::to_string(compared) +
                         " artifacts byte-identical";
  return r;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "geometry round trip", 1, geometry_round_trip},
      {2, "subset enumeration", 1, subset_counts},
      {3, "prior features", 5, prior_features_check},
      {4, "DRUID loss", 30, druid_loss_check},
      {5, "augmentation closure", 1, augmentation_closure},
      {6, "metric engine", 10, metric_engine},
      {7, "proposal pipeline", 15 * 60, proposal_pipeline},
      {8, "DRUID end to end", 30 * 60, druid_end_to_end},
      {9, "determinism", 5 * 60, determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) o.require(false, "over the time budget");
    failures += !o.pass;
    std::printf("criterion %d %-22s %s  %s  [%.2fs / %.0fs]\n", c.id, c.name, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs, c.budget_s);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
