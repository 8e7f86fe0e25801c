#include "segdet/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace segdet {

namespace {

struct Scored {
  double score;
  bool face_image;
  bool matched;
};

std::vector<Scored> scored_outcomes(const std::vector<ImageOutcome>& outcomes, double theta) {
  std::vector<Scored> s;
  for (const auto& o : outcomes) {
    if (!o.score) continue;
    const bool matched = o.has_gt_face && o.iou && *o.iou >= theta;
    s.push_back({*o.score, o.has_gt_face, matched});
  }
  std::stable_sort(s.begin(), s.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  return s;
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ImageOutcome make_outcome(std::string image_id, const std::optional<BBox>& gt_face,
                          const std::optional<BBox>& detection, std::optional<double> score) {
  ImageOutcome o;
  o.image_id = std::move(image_id);
  o.has_gt_face = gt_face.has_value();
  if (detection && score) {
    o.score = score;
    if (gt_face) o.iou = iou(*detection, *gt_face);
  }
  return o;
}

RocResult roc_curve(const std::vector<ImageOutcome>& outcomes, double theta) {
  double n_face = 0, n_nonface = 0;
  for (const auto& o : outcomes) (o.has_gt_face ? n_face : n_nonface) += 1;
  if (n_nonface == 0) throw InvalidArgument("roc_curve: FAR undefined without no-face images");
  if (n_face == 0) throw InvalidArgument("roc_curve: TAR undefined without face images");

  const auto s = scored_outcomes(outcomes, theta);
  RocResult r;
  r.curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  double tp = 0, fa = 0;
  for (std::size_t i = 0; i < s.size();) {
    const double t = s[i].score;
    // every outcome tied at t enters in the same step
    for (; i < s.size() && s[i].score == t; ++i) {
      if (s[i].face_image) {
        if (s[i].matched) tp += 1;
      } else {
        fa += 1;
      }
    }
    r.curve.points.push_back({t, fa / n_nonface, tp / n_face});
  }
  return r;
}

double RocResult::tar_at_far(double target) const {
  const auto& p = curve.points;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].x <= target) last = i;
  }
  if (last + 1 >= p.size()) return p[last].y;
  const auto& a = p[last];
  const auto& b = p[last + 1];
  if (b.x == a.x) return a.y;
  return a.y + (b.y - a.y) * (target - a.x) / (b.x - a.x);
}

double RocResult::auc() const {
  const auto& p = curve.points;
  double area = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i) area += (p[i].x - p[i - 1].x) * (p[i].y + p[i - 1].y) / 2.0;
  // extend the last point horizontally to FAR = 1
  if (!p.empty()) area += (1.0 - p.back().x) * p.back().y;
  return area;
}

PrResult pr_curve(const std::vector<ImageOutcome>& outcomes, double theta) {
  double n_face = 0;
  for (const auto& o : outcomes) n_face += o.has_gt_face ? 1 : 0;
  if (n_face == 0) throw InvalidArgument("pr_curve: recall undefined without face images");

  const auto s = scored_outcomes(outcomes, theta);
  PrResult r;
  double matched = 0, fired = 0;
  for (std::size_t i = 0; i < s.size();) {
    const double t = s[i].score;
    for (; i < s.size() && s[i].score == t; ++i) {
      fired += 1;
      if (s[i].matched) matched += 1;
    }
    r.curve.points.push_back({t, matched / n_face, matched / fired});
  }
  return r;
}

double PrResult::recall_at_precision(double target) const {
  double best = 0.0;
  for (const auto& p : curve.points) {
    if (p.y >= target) best = std::max(best, p.x);
  }
  return best;
}

double coverage_at(const std::vector<std::vector<BBox>>& proposals,
                   const std::vector<std::optional<BBox>>& gt_faces, double theta) {
  if (proposals.size() != gt_faces.size()) {
    throw InvalidArgument("coverage: proposal and ground-truth lists differ in length");
  }
  double faces = 0, covered = 0;
  for (std::size_t i = 0; i < gt_faces.size(); ++i) {
    if (!gt_faces[i]) continue;
    faces += 1;
    for (const BBox& b : proposals[i]) {
      if (iou(b, *gt_faces[i]) >= theta) {
        covered += 1;
        break;
      }
    }
  }
  return faces == 0 ? 0.0 : covered / faces;
}

Curve coverage_upper_bound(const std::vector<std::vector<BBox>>& proposals,
                           const std::vector<std::optional<BBox>>& gt_faces,
                           const std::vector<double>& thetas) {
  Curve c;
  for (double th : thetas) {
    const double cov = coverage_at(proposals, gt_faces, th);
    c.points.push_back({th, th, cov});
  }
  return c;
}

std::string curve_csv(const Curve& c) {
  std::string out = "threshold,x,y\n";
  for (const auto& p : c.points) {
    out += format_double(p.threshold) + "," + format_double(p.x) + "," + format_double(p.y) + "\n";
  }
  return out;
}

nlohmann::json to_json(const EvalSummary& s) {
  nlohmann::json j;
  j["tar_at_1pct_far"] = s.tar_at_1pct_far;
  j["recall_at_99pct_precision"] = s.recall_at_99pct_precision;
  j["coverage_at_50pct"] = s.coverage_at_50pct ? nlohmann::json(*s.coverage_at_50pct) : nlohmann::json(nullptr);
  return j;
}

}  // namespace segdet
