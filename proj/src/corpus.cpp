#include "segdet/corpus.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "segdet/rng.hpp"

namespace segdet {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void fill_ellipse(Image& img, double cx, double cy, double rx, double ry, float value) {
  const int x0 = std::max(0, static_cast<int>(std::floor(cx - rx)));
  const int x1 = std::min(img.width() - 1, static_cast<int>(std::ceil(cx + rx)));
  const int y0 = std::max(0, static_cast<int>(std::floor(cy - ry)));
  const int y1 = std::min(img.height() - 1, static_cast<int>(std::ceil(cy + ry)));
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = (x + 0.5 - cx) / rx;
      const double dy = (y + 0.5 - cy) / ry;
      if (dx * dx + dy * dy <= 1.0) img.at(x, y) = value;
    }
  }
}

void fill_rect(Image& img, double x1, double y1, double x2, double y2, float value) {
  const int xa = std::max(0, static_cast<int>(std::floor(x1)));
  const int xb = std::min(img.width(), static_cast<int>(std::ceil(x2)));
  const int ya = std::max(0, static_cast<int>(std::floor(y1)));
  const int yb = std::min(img.height(), static_cast<int>(std::ceil(y2)));
  for (int y = ya; y < yb; ++y) {
    for (int x = xa; x < xb; ++x) img.at(x, y) = value;
  }
}

// Triangle with apex (ax, ay) and a horizontal base at by spanning [bx1, bx2].
void fill_wedge(Image& img, double ax, double ay, double bx1, double bx2, double by, float value) {
  const int ya = std::max(0, static_cast<int>(std::floor(ay)));
  const int yb = std::min(img.height(), static_cast<int>(std::ceil(by)));
  for (int y = ya; y < yb; ++y) {
    const double t = (y + 0.5 - ay) / (by - ay);
    if (t < 0.0 || t > 1.0) continue;
    const double lo = ax + t * (bx1 - ax);
    const double hi = ax + t * (bx2 - ax);
    for (int x = std::max(0, static_cast<int>(std::floor(lo))); x < std::min(img.width(), static_cast<int>(std::ceil(hi))); ++x) {
      img.at(x, y) = value;
    }
  }
}

Image render_background(int w, int h, Rng& rng) {
  Image img(w, h);
  const double base = rng.uniform(0.15, 0.55);
  constexpr int kGrid = 9;
  std::array<double, kGrid * kGrid> grid{};
  for (double& g : grid) g = rng.uniform(-0.15, 0.15);
  for (int y = 0; y < h; ++y) {
    const double gy = static_cast<double>(y) / h * (kGrid - 1);
    const int iy = std::min(kGrid - 2, static_cast<int>(gy));
    const double ty = gy - iy;
    for (int x = 0; x < w; ++x) {
      const double gx = static_cast<double>(x) / w * (kGrid - 1);
      const int ix = std::min(kGrid - 2, static_cast<int>(gx));
      const double tx = gx - ix;
      const double v = (1 - ty) * ((1 - tx) * grid[iy * kGrid + ix] + tx * grid[iy * kGrid + ix + 1]) +
                       ty * ((1 - tx) * grid[(iy + 1) * kGrid + ix] + tx * grid[(iy + 1) * kGrid + ix + 1]);
      img.at(x, y) = static_cast<float>(base + v);
    }
  }
  const int shapes = static_cast<int>(rng.between(0, 3));
  for (int s = 0; s < shapes; ++s) {
    const double cx = rng.uniform(0, w), cy = rng.uniform(0, h);
    const double rx = rng.uniform(4, 20), ry = rng.uniform(4, 20);
    const float v = static_cast<float>(rng.uniform(0.0, 1.0));
    if (rng.bernoulli(0.5)) {
      fill_ellipse(img, cx, cy, rx, ry, v);
    } else {
      fill_rect(img, cx - rx, cy - ry, cx + rx, cy + ry, v);
    }
  }
  for (float& p : img.pixels()) p = std::clamp(p + static_cast<float>(rng.normal(0.0, 0.03)), 0.0f, 1.0f);
  return img;
}

std::string image_id_for(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%06zu", i);
  return buf;
}

ojson box_json(const BBox& b) { return ojson::array({b.x1, b.y1, b.x2, b.y2}); }

BBox box_from(const json& j) {
  if (!j.is_array() || j.size() != 4) throw std::runtime_error("box must be an array of 4 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

}  // namespace

void SceneSpec::validate() const {
  if (width <= 0 || height <= 0) throw InvalidArgument("scene dimensions must be positive");
  if (!(face_min > 0 && face_min <= face_max)) throw InvalidArgument("face size range is empty");
  if (!(aspect_min > 0 && aspect_min <= aspect_max)) throw InvalidArgument("face aspect range is empty");
  if (face_max > width || face_max * aspect_max > height) {
    throw InvalidArgument("largest face does not fit in the scene");
  }
  for (double p : {no_face_fraction, occlusion_probability, flip_probability}) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("scene probabilities must lie in [0, 1]");
  }
  photometric_config.validate();
}

ojson to_json(const SceneSpec& s) {
  ojson j;
  j["width"] = s.width;
  j["height"] = s.height;
  j["face_min"] = s.face_min;
  j["face_max"] = s.face_max;
  j["aspect_min"] = s.aspect_min;
  j["aspect_max"] = s.aspect_max;
  j["no_face_fraction"] = s.no_face_fraction;
  j["occlusion_probability"] = s.occlusion_probability;
  j["flip_probability"] = s.flip_probability;
  j["photometric"] = s.photometric;
  j["blur_probability"] = s.photometric_config.blur_probability;
  j["blur_radius_min"] = s.photometric_config.blur_radius_min;
  j["blur_radius_max"] = s.photometric_config.blur_radius_max;
  j["gamma_exponent_stdev"] = s.photometric_config.gamma_exponent_stdev;
  j["seed"] = s.seed;
  return j;
}

SceneSpec scene_spec_from_json(const json& j) {
  SceneSpec s;
  s.width = j.value("width", s.width);
  s.height = j.value("height", s.height);
  s.face_min = j.value("face_min", s.face_min);
  s.face_max = j.value("face_max", s.face_max);
  s.aspect_min = j.value("aspect_min", s.aspect_min);
  s.aspect_max = j.value("aspect_max", s.aspect_max);
  s.no_face_fraction = j.value("no_face_fraction", s.no_face_fraction);
  s.occlusion_probability = j.value("occlusion_probability", s.occlusion_probability);
  s.flip_probability = j.value("flip_probability", s.flip_probability);
  s.photometric = j.value("photometric", s.photometric);
  auto& pc = s.photometric_config;
  pc.blur_probability = j.value("blur_probability", pc.blur_probability);
  pc.blur_radius_min = j.value("blur_radius_min", pc.blur_radius_min);
  pc.blur_radius_max = j.value("blur_radius_max", pc.blur_radius_max);
  pc.gamma_exponent_stdev = j.value("gamma_exponent_stdev", pc.gamma_exponent_stdev);
  s.seed = j.value("seed", s.seed);
  return s;
}

std::optional<BBox> AnnotatedImage::visible_face() const {
  if (!gt || !gt->has_face) return std::nullopt;
  return clip_box(gt->face, image.width(), image.height());
}

std::size_t no_face_count(std::size_t n, double fraction) {
  return static_cast<std::size_t>(std::floor(static_cast<double>(n) * fraction + 1e-9));
}

bool is_no_face_index(std::size_t i, double fraction) {
  return no_face_count(i + 1, fraction) > no_face_count(i, fraction);
}

void draw_face(Image& img, const BBox& face, float skin, float feature) {
  const double w = face.width(), h = face.height();
  auto fx = [&](double f) { return face.x1 + f * w; };
  auto fy = [&](double f) { return face.y1 + f * h; };
  fill_ellipse(img, fx(0.5), fy(0.5), 0.5 * w, 0.5 * h, skin);
  // eyes sit inside the eye-pair band, the nose inside the nose patch
  fill_ellipse(img, fx(0.31), fy(0.38), 0.075 * w, 0.06 * h, feature);
  fill_ellipse(img, fx(0.69), fy(0.38), 0.075 * w, 0.06 * h, feature);
  fill_rect(img, fx(0.20), fy(0.27), fx(0.42), fy(0.30), feature);
  fill_rect(img, fx(0.58), fy(0.27), fx(0.80), fy(0.30), feature);
  fill_wedge(img, fx(0.5), fy(0.44), fx(0.41), fx(0.59), fy(0.70), feature);
  fill_rect(img, fx(0.32), fy(0.80), fx(0.68), fy(0.86), feature);
}

AnnotatedImage render_one(const SceneSpec& spec, std::size_t index, const SegmentCatalog& catalog) {
  Rng rng(mix_seed(spec.seed ^ static_cast<std::uint64_t>(index)));
  AnnotatedImage ai;
  ai.image_id = image_id_for(index);
  Image img = render_background(spec.width, spec.height, rng);
  GroundTruth gt = no_face_ground_truth();
  if (!is_no_face_index(index, spec.no_face_fraction)) {
    const double fw = std::round(rng.uniform(spec.face_min, spec.face_max));
    const double fh = std::min<double>(spec.height, std::round(fw * rng.uniform(spec.aspect_min, spec.aspect_max)));
    const double x1 = static_cast<double>(rng.between(0, static_cast<long long>(spec.width - fw)));
    const double y1 = static_cast<double>(rng.between(0, static_cast<long long>(spec.height - fh)));
    const BBox face{x1, y1, x1 + fw, y1 + fh};
    const float skin = static_cast<float>(rng.uniform(0.6, 0.9));
    const float feature = static_cast<float>(skin - rng.uniform(0.35, 0.55));
    draw_face(img, face, skin, feature);
    gt = make_ground_truth(face, {img.width(), img.height()}, catalog);

    const bool flip = rng.bernoulli(spec.flip_probability);
    const bool occlude = rng.bernoulli(spec.occlusion_probability);
    const std::uint64_t pick = rng.next();
    if (flip) {
      Sample s = apply_crop(img, gt, CropKind::Flip, catalog);
      img = std::move(s.image);
      gt = s.gt;
    }
    if (occlude) {
      auto plan = crop_plan(gt, {img.width(), img.height()}, catalog);
      plan.erase(plan.begin());  // drop FLIP
      if (!plan.empty()) {
        Sample s = apply_crop(img, gt, plan[pick % plan.size()], catalog);
        img = std::move(s.image);
        gt = s.gt;
      }
    }
  }
  const std::uint64_t photo_seed = rng.next();
  if (spec.photometric) img = photometric(img, spec.photometric_config, photo_seed);
  quantize_8bit(img);
  ai.image = std::move(img);
  if (gt.has_face) ai.gt = gt;
  return ai;
}

std::vector<AnnotatedImage> render_synthetic(const SceneSpec& spec, std::size_t n, const SegmentCatalog& catalog) {
  spec.validate();
  std::vector<AnnotatedImage> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(render_one(spec, i, catalog));
  return out;
}

void DetectorNoise::validate() const {
  if (!(miss_probability >= 0.0 && miss_probability <= 1.0)) {
    throw InvalidArgument("miss probability must lie in [0, 1]");
  }
  if (!(center_jitter >= 0.0 && scale_jitter >= 0.0 && false_positives >= 0.0)) {
    throw InvalidArgument("detector jitter and false-positive rate must be nonnegative");
  }
}

std::vector<SegmentDetection> simulate_segment_detectors(const AnnotatedImage& ai, const DetectorNoise& noise,
                                                         std::uint64_t seed, const SegmentCatalog& catalog) {
  noise.validate();
  Rng rng(seed);
  const ImageMeta meta = ai.meta();
  std::vector<SegmentDetection> dets;
  auto emit = [&](SegmentId seg, const BBox& raw) {
    const BBox b = clip_box(raw, meta.width, meta.height);
    if (!(b.width() > 1.0 && b.height() > 1.0)) return;
    dets.push_back(make_detection(seg, b, meta, catalog));
  };
  if (ai.gt && ai.gt->has_face) {
    for (SegmentId seg : kProposalSegments) {
      if (!ai.gt->visible[index_of(seg)]) continue;
      if (rng.bernoulli(noise.miss_probability)) continue;
      BBox box = ai.gt->segments[index_of(seg)];
      if (noise.center_jitter > 0.0 || noise.scale_jitter > 0.0) {
        const Point c = box.center();
        const double dx = rng.normal(0.0, noise.center_jitter);
        const double dy = rng.normal(0.0, noise.center_jitter);
        const double s = std::max(0.2, 1.0 + rng.normal(0.0, noise.scale_jitter));
        const double hw = box.width() * s / 2.0, hh = box.height() * s / 2.0;
        box = {c.x + dx - hw, c.y + dy - hh, c.x + dx + hw, c.y + dy + hh};
      }
      emit(seg, box);
    }
  }
  const int fps = rng.poisson(noise.false_positives);
  for (int k = 0; k < fps; ++k) {
    const SegmentId seg = kProposalSegments[rng.below(kProposalSegments.size())];
    const FracRect& r = catalog.rect(seg);
    const double fw = rng.uniform(0.3, 0.75) * std::min(meta.width, meta.height);
    const double fh = fw * rng.uniform(1.0, 1.2);
    const double bw = std::min<double>(meta.width, (r.fx2 - r.fx1) * fw);
    const double bh = std::min<double>(meta.height, (r.fy2 - r.fy1) * fh);
    const double x1 = rng.uniform(0.0, meta.width - bw);
    const double y1 = rng.uniform(0.0, meta.height - bh);
    emit(seg, {x1, y1, x1 + bw, y1 + bh});
  }
  return dets;
}

ojson annotation_to_json(const AnnotatedImage& ai) {
  ojson j;
  j["image_id"] = ai.image_id;
  j["width"] = ai.image.width();
  j["height"] = ai.image.height();
  if (ai.gt && ai.gt->has_face) {
    j["face"] = box_json(ai.gt->face);
    ojson segs = ojson::object();
    for (SegmentId s : kAllSegments) {
      ojson e;
      e["box"] = box_json(ai.gt->segments[index_of(s)]);
      e["v"] = ai.gt->visible[index_of(s)];
      segs[std::string(segment_name(s))] = e;
    }
    j["segments"] = segs;
  } else {
    j["face"] = nullptr;
    j["segments"] = ojson::object();
  }
  return j;
}

AnnotatedImage annotation_from_json(const json& j) {
  AnnotatedImage ai;
  ai.image_id = j.at("image_id").get<std::string>();
  const int w = j.at("width").get<int>();
  const int h = j.at("height").get<int>();
  if (w <= 0 || h <= 0) throw std::runtime_error("width and height must be positive");
  ai.image = Image(w, h);
  const json& face = j.at("face");
  if (!face.is_null()) {
    GroundTruth gt;
    gt.has_face = true;
    gt.face = box_from(face);
    const json& segs = j.at("segments");
    for (auto it = segs.begin(); it != segs.end(); ++it) {
      const auto seg = parse_segment(it.key());
      if (!seg) throw std::runtime_error("unknown segment tag " + it.key());
      gt.segments[index_of(*seg)] = box_from(it.value().at("box"));
      const int v = it.value().at("v").get<int>();
      if (v != 0 && v != 1) throw std::runtime_error("visibility must be 0 or 1");
      gt.visible[index_of(*seg)] = v;
    }
    ai.gt = gt;
  }
  return ai;
}

void write_annotations(const std::filesystem::path& path, const std::vector<AnnotatedImage>& images) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& ai : images) out << annotation_to_json(ai).dump() << '\n';
}

std::vector<AnnotatedImage> read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<AnnotatedImage> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(annotation_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_corpus(const std::filesystem::path& dir, const std::vector<AnnotatedImage>& images,
                  const SceneSpec& spec) {
  std::filesystem::create_directories(dir / "images");
  for (const auto& ai : images) write_pgm(dir / "images" / (ai.image_id + ".pgm"), ai.image);
  write_annotations(dir / "annotations.jsonl", images);
  std::ofstream(dir / "spec.json", std::ios::binary) << to_json(spec).dump(2) << '\n';
}

std::vector<AnnotatedImage> read_corpus(const std::filesystem::path& dir) {
  auto images = read_annotations(dir / "annotations.jsonl");
  for (auto& ai : images) {
    Image img = read_pgm(dir / "images" / (ai.image_id + ".pgm"));
    if (img.width() != ai.image.width() || img.height() != ai.image.height()) {
      throw std::runtime_error(ai.image_id + ": image size disagrees with its annotation");
    }
    ai.image = std::move(img);
  }
  return images;
}

}  // namespace segdet
