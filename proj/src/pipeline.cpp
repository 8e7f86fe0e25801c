#include "segdet/pipeline.hpp"

#include <fstream>
#include <map>
#include <stdexcept>

namespace segdet {

void PrepareConfig::validate() const {
  noise.validate();
  if (min_segments < 1) throw InvalidArgument("c must be at least 1");
  if (max_per_cluster < 1) throw InvalidArgument("zeta must be at least 1");
  if (!(label_iou > 0.0 && label_iou <= 1.0)) throw InvalidArgument("label IOU must lie in (0, 1]");
}

ProposalImage prepare_image(const AnnotatedImage& ai, const PrepareConfig& cfg) {
  const std::uint64_t id_hash = hash_string(ai.image_id);
  const auto dets = simulate_segment_detectors(ai, cfg.noise, mix_seed(cfg.seed, id_hash));
  ProposalConfig pc = ProposalConfig::for_image(ai.meta());
  pc.min_segments = cfg.min_segments;
  pc.max_per_cluster = cfg.max_per_cluster;
  pc.seed = mix_seed(cfg.seed ^ 0x9e3779b97f4a7c15ULL, id_hash);
  ProposalImage pi;
  pi.image_id = ai.image_id;
  pi.image = ai.image;
  pi.gt_face = ai.visible_face();
  pi.proposals = generate_proposals(dets, pc);
  label_proposals(pi, cfg.label_iou);
  return pi;
}

std::vector<ProposalImage> prepare_images(const std::vector<AnnotatedImage>& images, const PrepareConfig& cfg) {
  cfg.validate();
  std::vector<ProposalImage> out;
  out.reserve(images.size());
  for (const auto& ai : images) out.push_back(prepare_image(ai, cfg));
  return out;
}

PriorTable fit_priors(const std::vector<ProposalImage>& images) { return fit_priors(labeled_proposals(images)); }

std::vector<DetectionResult> run_detector(const std::vector<ProposalImage>& images, const ProposalScorer& scorer) {
  std::vector<DetectionResult> out;
  out.reserve(images.size());
  for (const auto& pi : images) {
    out.push_back(pi.proposals.empty() ? detect(pi.image_id, pi.proposals, std::vector<double>{})
                                       : detect(pi.image_id, pi.proposals, scorer(pi)));
  }
  return out;
}

std::vector<ImageOutcome> to_outcomes(const std::vector<ProposalImage>& images,
                                      const std::vector<DetectionResult>& detections) {
  if (images.size() != detections.size()) throw InvalidArgument("one detection per image is required");
  std::vector<ImageOutcome> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& d = detections[i];
    out.push_back(make_outcome(images[i].image_id, images[i].gt_face,
                               d.detected() ? std::optional<BBox>(d.box) : std::nullopt,
                               d.detected() ? std::optional<double>(d.score) : std::nullopt));
  }
  return out;
}

std::vector<ImageOutcome> evaluate_detector(const std::vector<ProposalImage>& images, const ProposalScorer& scorer) {
  return to_outcomes(images, run_detector(images, scorer));
}

double proposal_coverage(const std::vector<ProposalImage>& images, double theta) {
  std::vector<std::vector<BBox>> boxes;
  std::vector<std::optional<BBox>> faces;
  for (const auto& pi : images) {
    std::vector<BBox> b;
    for (const auto& p : pi.proposals) b.push_back(p.bbox);
    boxes.push_back(std::move(b));
    faces.push_back(pi.gt_face);
  }
  return coverage_at(boxes, faces, theta);
}

EvalSummary summarize(const std::vector<ImageOutcome>& outcomes, std::optional<double> coverage) {
  EvalSummary s;
  s.tar_at_1pct_far = roc_curve(outcomes).tar_at_far(0.01);
  s.recall_at_99pct_precision = pr_curve(outcomes).recall_at_precision(0.99);
  s.coverage_at_50pct = coverage;
  return s;
}

namespace {

using ojson = nlohmann::ordered_json;

ojson box_json(const BBox& b) { return ojson::array({b.x1, b.y1, b.x2, b.y2}); }

BBox box_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw InvalidArgument("box must be an array of four numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

ojson proposal_image_to_json(const ProposalImage& pi) {
  ojson j;
  j["image_id"] = pi.image_id;
  j["width"] = pi.image.width();
  j["height"] = pi.image.height();
  j["face"] = pi.gt_face ? box_json(*pi.gt_face) : ojson(nullptr);
  ojson ps = ojson::array();
  for (std::size_t i = 0; i < pi.proposals.size(); ++i) {
    const Proposal& p = pi.proposals[i];
    ojson segs = ojson::array();
    for (const auto& d : p.segments) segs.push_back(ojson({{"seg", segment_name(d.seg)}, {"box", box_json(d.box)}}));
    ojson e;
    e["cluster"] = p.cluster_id;
    e["bbox"] = box_json(p.bbox);
    e["is_face"] = i < pi.is_face.size() ? pi.is_face[i] != 0 : false;
    e["segments"] = segs;
    ps.push_back(e);
  }
  j["proposals"] = ps;
  return j;
}

void write_proposals(const std::filesystem::path& path, const std::vector<ProposalImage>& images) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  for (const auto& pi : images) f << proposal_image_to_json(pi).dump() << '\n';
  if (!f) throw std::runtime_error("failed writing " + path.string());
}

std::vector<ProposalImage> read_proposals(const std::filesystem::path& path, const std::vector<AnnotatedImage>& corpus) {
  std::map<std::string, const AnnotatedImage*> by_id;
  for (const auto& ai : corpus) by_id[ai.image_id] = &ai;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  std::vector<ProposalImage> out;
  std::string line;
  for (std::size_t n = 1; std::getline(f, line); ++n) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ProposalImage pi;
      pi.image_id = j.at("image_id").get<std::string>();
      const auto it = by_id.find(pi.image_id);
      if (it == by_id.end()) throw InvalidArgument("image " + pi.image_id + " is not in the corpus");
      pi.image = it->second->image;
      const ImageMeta meta{pi.image.width(), pi.image.height()};
      if (j.at("width").get<int>() != meta.width || j.at("height").get<int>() != meta.height) {
        throw InvalidArgument("image size disagrees with the corpus");
      }
      if (!j.at("face").is_null()) pi.gt_face = box_from(j.at("face"));
      for (const auto& e : j.at("proposals")) {
        Proposal p;
        for (const auto& d : e.at("segments")) {
          const auto seg = parse_segment(d.at("seg").get<std::string>());
          if (!seg) throw InvalidArgument("unknown segment " + d.at("seg").get<std::string>());
          p.segments.push_back(make_detection(*seg, box_from(d.at("box")), meta));
        }
        p.bbox = proposal_bbox(p.segments);
        p.cluster_id = e.at("cluster").get<std::size_t>();
        pi.proposals.push_back(std::move(p));
        pi.is_face.push_back(e.at("is_face").get<bool>() ? 1 : 0);
      }
      out.push_back(std::move(pi));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

ProposalScorer fsfd_scorer(const FsfdModel& m) {
  return [m](const ProposalImage& pi) {
    std::vector<double> s;
    for (const auto& p : pi.proposals) s.push_back(fsfd_score(p, m.priors, m.linear));
    return s;
  };
}

ProposalScorer segface_scorer(const SegFaceModel& m) {
  return [m](const ProposalImage& pi) { return m.scores(pi.proposals, pi.image); };
}

ProposalScorer deepsegface_scorer(const DeepSegFaceModel& m) {
  return [m](const ProposalImage& pi) { return m.scores(pi.proposals, pi.image); };
}

}  // namespace segdet
