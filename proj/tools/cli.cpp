#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "segdet/augment.hpp"
#include "segdet/druid_model.hpp"
#include "segdet/pipeline.hpp"

namespace segdet::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr const char* kVersion = "segdet 1.0";

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Key {
  std::string name;
  json def;
  std::string help;
  std::string alias;  // extra flag spelling, e.g. "c" for proposal.c
};

struct Context {
  const json& cfg;
  fs::path out;
  std::ostream& log;

  template <typename T>
  T get(const std::string& key) const { return cfg.at(key).get<T>(); }
  std::string path(const std::string& key) const {
    const auto v = get<std::string>(key);
    if (v.empty()) throw ConfigError("missing required setting " + key);
    return v;
  }
};

using Artifacts = std::vector<std::string>;

struct Command {
  std::string name;
  std::string help;
  std::vector<Key> keys;
  std::function<Artifacts(const Context&)> exec;
};

// ---- config resolution -------------------------------------------------------------

json parse_value(const Key& k, const std::string& text) {
  try {
    std::size_t used = 0;
    if (k.def.is_boolean()) {
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw ConfigError("");
    }
    if (k.def.is_number_integer()) {
      const long long v = std::stoll(text, &used);
      if (used != text.size()) throw ConfigError("");
      return v;
    }
    if (k.def.is_number()) {
      const double v = std::stod(text, &used);
      if (used != text.size() || !std::isfinite(v)) throw ConfigError("");
      return v;
    }
    return text;
  } catch (const std::exception&) {
    throw ConfigError("invalid value '" + text + "' for " + k.name);
  }
}

json check_type(const Key& k, const json& v) {
  const bool ok = k.def.is_boolean() ? v.is_boolean()
                  : k.def.is_number_integer() ? v.is_number_integer()
                  : k.def.is_number() ? v.is_number()
                  : v.is_string();
  if (!ok) throw ConfigError("setting " + k.name + " has the wrong type");
  return v;
}

json resolve_config(const Command& cmd, const std::string& config_path,
                    const std::map<std::string, std::string>& flags) {
  json cfg = json::object();
  for (const Key& k : cmd.keys) cfg[k.name] = k.def;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw ConfigError("cannot read config file " + config_path);
    json file;
    try {
      file = json::parse(f);
    } catch (const json::exception& e) {
      throw ConfigError("config file " + config_path + " is not valid JSON: " + e.what());
    }
    if (!file.is_object()) throw ConfigError("config file must hold a flat JSON object");
    for (const auto& [name, value] : file.items()) {
      const auto it = std::find_if(cmd.keys.begin(), cmd.keys.end(), [&](const Key& k) { return k.name == name; });
      if (it == cmd.keys.end()) throw ConfigError("unknown setting " + name + " for " + cmd.name);
      cfg[name] = check_type(*it, value);
    }
  }
  for (const Key& k : cmd.keys) {
    const auto it = flags.find(k.name);
    if (it != flags.end()) cfg[k.name] = parse_value(k, it->second);
  }
  return cfg;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
  if (!f) throw std::runtime_error("failed writing " + p.string());
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  return json::parse(f);
}

// Turns validation failures of config-derived settings into configuration errors.
template <typename F>
auto configure(F&& f) {
  try {
    return f();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

json box_json(const BBox& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

std::optional<BBox> optional_box(const json& j) {
  if (j.is_null()) return std::nullopt;
  if (!j.is_array() || j.size() != 4) throw InvalidArgument("box must be an array of four numbers");
  return BBox{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

// ---- shared loaders ------------------------------------------------------------------

struct ProposalData {
  std::vector<AnnotatedImage> corpus;
  std::vector<ProposalImage> images;
};

ProposalData load_proposals(const Context& c) {
  const fs::path dir = c.path("proposals");
  std::string corpus = c.get<std::string>("corpus");
  if (corpus.empty()) corpus = read_json(dir / "config.json").at("corpus").get<std::string>();
  ProposalData d;
  d.corpus = read_corpus(corpus);
  d.images = read_proposals(dir / "proposals.jsonl", d.corpus);
  return d;
}

PriorTable load_or_fit_priors(const Context& c, const std::vector<ProposalImage>& images) {
  const auto p = c.get<std::string>("priors");
  if (p.empty()) return fit_priors(images);
  return prior_table_from_json(read_json(p));
}

LinearTrainConfig svm_config(const Context& c) {
  return configure([&] {
    LinearTrainConfig s;
    s.epochs = c.get<int>("svm.epochs");
    s.step = c.get<double>("svm.step");
    s.lambda = c.get<double>("svm.lambda");
    s.seed = c.get<std::uint64_t>("seed");
    s.validate();
    return s;
  });
}

fs::path weights_out(const Context& c, const char* fallback) {
  const auto w = c.get<std::string>("weights-out");
  return w.empty() ? c.out / fallback : fs::path(w);
}

std::string artifact_name(const Context& c, const fs::path& p) {
  const auto rel = p.lexically_relative(c.out);
  return (!rel.empty() && *rel.begin() != "..") ? rel.generic_string() : p.generic_string();
}

std::string loss_log_csv(const std::vector<std::pair<int, double>>& rows, const char* column) {
  std::string s = std::string("epoch,") + column + "\n";
  for (const auto& [e, l] : rows) s += std::to_string(e) + "," + fmt(l) + "\n";
  return s;
}

// ---- subcommands ----------------------------------------------------------------------

Artifacts gen_data(const Context& c) {
  const SceneSpec spec = configure([&] {
    SceneSpec s;
    s.width = c.get<int>("scene.width");
    s.height = c.get<int>("scene.height");
    s.face_min = c.get<double>("scene.face_min");
    s.face_max = c.get<double>("scene.face_max");
    s.no_face_fraction = c.get<double>("scene.no_face_fraction");
    s.occlusion_probability = c.get<double>("scene.occlusion_probability");
    s.flip_probability = c.get<double>("scene.flip_probability");
    s.photometric = c.get<bool>("scene.photometric");
    s.seed = c.get<std::uint64_t>("seed");
    s.validate();
    return s;
  });
  const long n = c.get<long>("data.n");
  if (n < 1) throw ConfigError("data.n must be positive");
  const auto images = render_synthetic(spec, static_cast<std::size_t>(n));
  write_corpus(c.out, images, spec);
  c.log << "wrote " << images.size() << " images to " << c.out.string() << "\n";
  return {"annotations.jsonl", "images/", "spec.json"};
}

Artifacts propose(const Context& c) {
  const PrepareConfig pc = configure([&] {
    PrepareConfig p;
    p.noise.miss_probability = c.get<double>("noise.miss");
    p.noise.center_jitter = c.get<double>("noise.jitter");
    p.noise.scale_jitter = c.get<double>("noise.scale_jitter");
    p.noise.false_positives = c.get<double>("noise.false_positives");
    const long cc = c.get<long>("proposal.c"), zeta = c.get<long>("proposal.zeta");
    if (cc < 1 || zeta < 1) throw InvalidArgument("proposal.c and proposal.zeta must be positive");
    p.min_segments = static_cast<std::size_t>(cc);
    p.max_per_cluster = static_cast<std::size_t>(zeta);
    p.label_iou = c.get<double>("label_iou");
    p.seed = c.get<std::uint64_t>("seed");
    p.validate();
    return p;
  });
  const auto corpus = read_corpus(c.path("corpus"));
  const auto images = prepare_images(corpus, pc);
  write_proposals(c.out / "proposals.jsonl", images);
  std::size_t total = 0;
  for (const auto& pi : images) total += pi.proposals.size();
  c.log << "wrote " << total << " proposals for " << images.size() << " images\n";
  return {"proposals.jsonl"};
}

Artifacts fit_priors_cmd(const Context& c) {
  const auto d = load_proposals(c);
  write_text(c.out / "priors.json", to_json(fit_priors(d.images)).dump(2) + "\n");
  return {"priors.json"};
}

Artifacts train_fsfd_cmd(const Context& c) {
  const auto cfg = svm_config(c);
  const auto d = load_proposals(c);
  const PriorTable priors = load_or_fit_priors(c, d.images);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (const auto& lp : labeled_proposals(d.images)) {
    x.push_back(prior_features(lp.proposal, priors));
    y.push_back(lp.is_face ? 1 : -1);
  }
  const auto r = train_linear(x, y, cfg);
  const fs::path w = weights_out(c, "fsfd.json");
  write_text(w, to_json(FsfdModel{priors, r.model}).dump() + "\n");
  std::vector<std::pair<int, double>> rows;
  for (std::size_t e = 0; e < r.epoch_objective.size(); ++e) rows.emplace_back(static_cast<int>(e), r.epoch_objective[e]);
  write_text(c.out / "train_log.csv", loss_log_csv(rows, "objective"));
  return {artifact_name(c, w), "train_log.csv"};
}

Artifacts train_segface_cmd(const Context& c) {
  const auto cfg = svm_config(c);
  const auto d = load_proposals(c);
  const PriorTable priors = load_or_fit_priors(c, d.images);
  const SegFaceModel m = train_segface(d.images, priors, cfg);
  const fs::path w = weights_out(c, "segface.json");
  write_text(w, to_json(m).dump() + "\n");
  return {artifact_name(c, w)};
}

Artifacts train_dsf_cmd(const Context& c) {
  const auto [arch, cfg] = configure([&] {
    MultiColumnConfig a;
    a.patch = c.get<int>("arch.patch");
    a.hidden = c.get<int>("arch.hidden");
    a.validate();
    DsfTrainConfig t;
    t.adam.lr = c.get<double>("train.lr");
    t.epochs = c.get<int>("train.epochs");
    t.images_per_batch = c.get<int>("train.images_per_batch");
    t.proposals_per_image = c.get<int>("train.proposals_per_image");
    t.seed = c.get<std::uint64_t>("seed");
    t.validate();
    return std::pair{a, t};
  });
  const auto d = load_proposals(c);
  const PriorTable priors = load_or_fit_priors(c, d.images);
  std::vector<std::pair<int, double>> rows;
  const auto m = train_deepsegface(d.images, priors, arch, cfg, [&](int e, double l) {
    rows.emplace_back(e, l);
    c.log << "epoch " << e << " loss " << fmt(l) << "\n";
  });
  const fs::path w = weights_out(c, "dsf.json");
  write_text(w, to_json(m).dump() + "\n");
  write_text(c.out / "train_log.csv", loss_log_csv(rows, "loss"));
  return {artifact_name(c, w), "train_log.csv"};
}

Artifacts train_druid_cmd(const Context& c) {
  const auto [arch, cfg] = configure([&] {
    druid::ModelConfig a;
    a.input = c.get<int>("arch.input");
    a.branch_channels = c.get<int>("arch.branch_channels");
    a.branch_grid = c.get<int>("arch.branch_grid");
    a.validate();
    druid::TrainConfig t;
    t.adam.lr = c.get<double>("train.lr");
    t.epochs = c.get<int>("train.epochs");
    t.batch_size = c.get<int>("train.batch");
    t.seed = c.get<std::uint64_t>("seed");
    t.validate();
    return std::pair{a, t};
  });
  const auto corpus = read_corpus(c.path("corpus"));
  std::vector<druid::DruidSample> samples;
  samples.reserve(corpus.size());
  for (const auto& ai : corpus) samples.push_back(druid::make_sample(ai.image, ai.gt, arch.input));
  std::vector<std::pair<int, double>> rows;
  const auto r = druid::train(samples, arch, cfg, {}, [&](int e, double l) {
    rows.emplace_back(e, l);
    c.log << "epoch " << e << " loss " << fmt(l) << "\n";
  });
  const fs::path w = weights_out(c, "druid.bin");
  druid::save_params(w, r.net);
  write_text(c.out / "train_log.csv", loss_log_csv(rows, "loss"));
  return {artifact_name(c, w), "train_log.csv"};
}

Artifacts eval_cmd(const Context& c) {
  const auto detector = c.get<std::string>("detector");
  const double theta = c.get<double>("theta");
  if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("theta must lie in (0, 1]");
  std::vector<ImageOutcome> outcomes;
  std::optional<double> coverage;
  std::string lines;

  auto record = [&](const std::string& id, const std::optional<BBox>& gt, const std::optional<BBox>& box,
                    std::optional<double> score) {
    outcomes.push_back(make_outcome(id, gt, box, score));
    json j;
    j["image_id"] = id;
    j["score"] = score ? json(*score) : json(nullptr);
    j["box"] = box ? box_json(*box) : json(nullptr);
    lines += j.dump() + "\n";
  };

  if (detector == "detections") {
    std::ifstream f(c.path("detections"));
    if (!f) throw std::runtime_error("cannot read " + c.path("detections"));
    std::string line;
    for (std::size_t n = 1; std::getline(f, line); ++n) {
      if (line.empty()) continue;
      try {
        const auto j = json::parse(line);
        const auto score = j.at("score");
        record(j.at("image_id").get<std::string>(), optional_box(j.at("gt_face")), optional_box(j.at("box")),
               score.is_null() ? std::nullopt : std::optional<double>(score.get<double>()));
      } catch (const std::exception& e) {
        throw std::runtime_error(c.path("detections") + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  } else if (detector == "druid") {
    const auto net = druid::load_params(c.path("weights-in"));
    for (const auto& ai : read_corpus(c.path("corpus"))) {
      const auto r = druid::infer(ai.image, net);
      record(ai.image_id, ai.visible_face(), r.face, r.confidence);
    }
  } else if (detector == "fsfd" || detector == "segface" || detector == "dsf") {
    const json model = read_json(c.path("weights-in"));
    ProposalScorer scorer;
    if (detector == "fsfd") {
      scorer = fsfd_scorer(fsfd_from_json(model));
    } else if (detector == "segface") {
      scorer = segface_scorer(segface_from_json(model));
    } else {
      auto m = deepsegface_from_json(model);
      m.rerank = c.get<bool>("rerank");
      scorer = deepsegface_scorer(m);
    }
    const auto d = load_proposals(c);
    const auto dets = run_detector(d.images, scorer);
    for (std::size_t i = 0; i < dets.size(); ++i) {
      const auto& r = dets[i];
      record(r.image_id, d.images[i].gt_face, r.detected() ? std::optional<BBox>(r.box) : std::nullopt,
             r.detected() ? std::optional<double>(r.score) : std::nullopt);
    }
    coverage = proposal_coverage(d.images, theta);
  } else {
    throw ConfigError("detector must be one of fsfd, segface, dsf, druid, detections");
  }

  const RocResult roc = roc_curve(outcomes, theta);
  const PrResult pr = pr_curve(outcomes, theta);
  EvalSummary s;
  s.tar_at_1pct_far = roc.tar_at_far(0.01);
  s.recall_at_99pct_precision = pr.recall_at_precision(0.99);
  s.coverage_at_50pct = coverage;
  json summary = to_json(s);
  summary["detector"] = detector;
  summary["images"] = outcomes.size();
  summary["roc_auc"] = roc.auc();
  summary["theta"] = theta;
  write_text(c.out / "detections.jsonl", lines);
  write_text(c.out / "roc.csv", curve_csv(roc.curve));
  write_text(c.out / "pr.csv", curve_csv(pr.curve));
  write_text(c.out / "summary.json", summary.dump(2) + "\n");
  c.log << "tar_at_1pct_far " << fmt(s.tar_at_1pct_far) << "\n";
  return {"detections.jsonl", "pr.csv", "roc.csv", "summary.json"};
}

Artifacts loss_check_cmd(const Context& c) {
  using namespace druid;
  const long samples = c.get<long>("samples");
  const double h = c.get<double>("fd_step");
  const double tol = c.get<double>("tolerance");
  if (samples < 1) throw ConfigError("samples must be positive");
  if (!(h > 0.0)) throw ConfigError("fd_step must be positive");
  Rng rng(c.get<std::uint64_t>("seed"));
  const LossWeights w;
  std::string csv = "sample,rel_error,max_abs_error,kink_distance\n";
  double worst = 0.0;
  for (long s = 0; s < samples;) {
    const double x1 = rng.uniform(0.0, 0.4), y1 = rng.uniform(0.0, 0.4);
    GroundTruth gt = make_ground_truth({x1, y1, x1 + rng.uniform(0.3, 0.6), y1 + rng.uniform(0.3, 0.6)}, {1, 1});
    for (auto& v : gt.visible) v = rng.bernoulli(0.6) ? 1 : 0;
    std::array<double, kNumOutputs> x{};
    for (std::size_t i = 0; i < kNumSegments; ++i) {
      const auto b = gt.segments[i].as_array();
      const auto f = gt.face.as_array();
      for (int k = 0; k < 4; ++k) {
        x[i * kBranchOutputs + k] = b[k];
        x[i * kBranchOutputs + 5 + k] = f[k];
      }
      x[i * kBranchOutputs + 4] = gt.visible[i];
      x[i * kBranchOutputs + 9] = gt.face_visibility();
    }
    for (int k = 0; k < 4; ++k) x[kNumSegments * kBranchOutputs + k] = gt.face.as_array()[k];
    x[kNumOutputs - 1] = gt.face_visibility();
    for (double& v : x) v += rng.normal(0.0, 0.1);
    const Prediction p = Prediction::unflatten(x);
    const double kink = distance_to_kink(p, gt);
    if (kink < 2 * h) continue;
    const auto g = loss_grad(p, gt, w);
    double num = 0, den_a = 0, den_n = 0, max_abs = 0;
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
      max_abs = std::max(max_abs, std::abs(fd - g[k]));
    }
    const double rel = std::sqrt(num) / std::max({std::sqrt(den_a), std::sqrt(den_n), 1e-12});
    worst = std::max(worst, rel);
    csv += std::to_string(s) + "," + fmt(rel) + "," + fmt(max_abs) + "," + fmt(kink) + "\n";
    ++s;
  }
  json summary;
  summary["samples"] = samples;
  summary["fd_step"] = h;
  summary["max_rel_error"] = worst;
  summary["tolerance"] = tol;
  summary["pass"] = worst < tol;
  write_text(c.out / "loss_check.csv", csv);
  write_text(c.out / "summary.json", summary.dump(2) + "\n");
  c.log << "max relative gradient error " << fmt(worst) << "\n";
  return {"loss_check.csv", "summary.json"};
}

Artifacts coverage_cmd(const Context& c) {
  const double step = c.get<double>("theta_step");
  if (!(step > 0.0 && step <= 1.0)) throw ConfigError("theta_step must lie in (0, 1]");
  const auto d = load_proposals(c);
  std::vector<std::vector<BBox>> boxes;
  std::vector<std::optional<BBox>> faces;
  for (const auto& pi : d.images) {
    std::vector<BBox> b;
    for (const auto& p : pi.proposals) b.push_back(p.bbox);
    boxes.push_back(std::move(b));
    faces.push_back(pi.gt_face);
  }
  std::vector<double> thetas;
  for (int i = 1; i * step <= 1.0 + 1e-12; ++i) thetas.push_back(std::min(1.0, i * step));
  const Curve cov = coverage_upper_bound(boxes, faces, thetas);
  std::string csv = "theta,coverage\n";
  for (const auto& p : cov.points) csv += fmt(p.x) + "," + fmt(p.y) + "\n";
  json summary;
  summary["coverage_at_50pct"] = coverage_at(boxes, faces, 0.5);
  summary["images"] = d.images.size();
  write_text(c.out / "coverage.csv", csv);
  write_text(c.out / "summary.json", summary.dump(2) + "\n");
  return {"coverage.csv", "summary.json"};
}

// ---- command table --------------------------------------------------------------------

std::vector<Key> proposal_input_keys() {
  return {{"proposals", "", "directory written by propose", ""},
          {"corpus", "", "corpus directory (default: the one recorded by propose)", ""},
          {"priors", "", "priors.json (default: fit on the proposals)", ""}};
}

std::vector<Key> svm_keys() {
  return {{"svm.epochs", 30, "SGD epochs", ""}, {"svm.step", 0.05, "initial step size", ""},
          {"svm.lambda", 1e-4, "L2 penalty", ""}};
}

template <typename... Lists>
std::vector<Key> join(Lists... lists) {
  std::vector<Key> out;
  (out.insert(out.end(), lists.begin(), lists.end()), ...);
  return out;
}

std::vector<Command> commands() {
  const std::vector<Key> seed0{{"seed", 0, "random seed", ""}};
  const std::vector<Key> wout{{"weights-out", "", "model output path (default: inside --out)", ""}};
  return {
      {"gen-data", "render a synthetic corpus",
       {{"seed", 1, "random seed", ""},
        {"data.n", 2000, "number of images", "n"},
        {"scene.width", 128, "image width", ""},
        {"scene.height", 128, "image height", ""},
        {"scene.face_min", 48.0, "smallest face width", ""},
        {"scene.face_max", 96.0, "largest face width", ""},
        {"scene.no_face_fraction", 0.2, "fraction of images without a face", ""},
        {"scene.occlusion_probability", 0.3, "chance of a partial-visibility crop", ""},
        {"scene.flip_probability", 0.5, "chance of a horizontal flip", ""},
        {"scene.photometric", true, "apply blur and gamma jitter", ""}},
       gen_data},
      {"propose", "simulate segment detections and enumerate proposals",
       join(seed0, std::vector<Key>{{"corpus", "", "corpus directory", ""},
                                    {"noise.miss", 0.3, "per-segment miss probability", "miss"},
                                    {"noise.jitter", 2.0, "center jitter stdev in pixels", "jitter"},
                                    {"noise.scale_jitter", 0.0, "relative size jitter stdev", ""},
                                    {"noise.false_positives", 2.0, "mean false detections per image", ""},
                                    {"proposal.c", 2, "minimum segments per proposal", "c"},
                                    {"proposal.zeta", 10, "maximum proposals per cluster", "zeta"},
                                    {"label_iou", 0.5, "IOU for a proposal to count as a face", ""}}),
       propose},
      {"fit-priors", "fit prior statistics on labeled proposals",
       std::vector<Key>{{"proposals", "", "directory written by propose", ""},
                        {"corpus", "", "corpus directory (default: the one recorded by propose)", ""}},
       fit_priors_cmd},
      {"train-fsfd", "train the priors-only linear detector", join(seed0, proposal_input_keys(), svm_keys(), wout),
       train_fsfd_cmd},
      {"train-segface", "train HOG segment scorers and the fused linear detector",
       join(seed0, proposal_input_keys(), svm_keys(), wout), train_segface_cmd},
      {"train-dsf", "train the multi-column proposal classifier",
       join(seed0, proposal_input_keys(), wout,
            std::vector<Key>{{"train.epochs", 6, "epochs", "epochs"},
                             {"train.lr", 1e-3, "Adam step size", ""},
                             {"train.images_per_batch", 8, "images per minibatch", ""},
                             {"train.proposals_per_image", 16, "proposals sampled per image and epoch", ""},
                             {"arch.patch", 32, "segment patch side", ""},
                             {"arch.hidden", 64, "hidden units of the head", ""}}),
       train_dsf_cmd},
      {"train-druid", "train the proposal-free regression network",
       join(seed0, wout,
            std::vector<Key>{{"corpus", "", "corpus directory", ""},
                             {"train.epochs", 25, "epochs", "epochs"},
                             {"train.lr", 1e-4, "Adam step size", ""},
                             {"train.batch", 32, "minibatch size", ""},
                             {"arch.input", 64, "network input side", ""},
                             {"arch.branch_channels", 8, "channels per branch", ""},
                             {"arch.branch_grid", 4, "pooled grid side per branch", ""}}),
       train_druid_cmd},
      {"eval", "evaluate a detector under the single-face protocol",
       join(std::vector<Key>{{"proposals", "", "directory written by propose", ""},
                             {"corpus", "", "corpus directory", ""}},
            std::vector<Key>{{"detector", "dsf", "fsfd, segface, dsf, druid or detections", ""},
                             {"weights-in", "", "trained model", ""},
                             {"detections", "", "JSONL of image_id, gt_face, box, score", ""},
                             {"rerank", true, "apply prior re-ranking to dsf scores", ""},
                             {"theta", 0.5, "IOU needed for a true accept", ""}}),
       eval_cmd},
      {"loss-check", "compare analytic loss gradients with central differences",
       join(seed0, std::vector<Key>{{"samples", 100, "number of random prediction/target pairs", ""},
                                    {"fd_step", 1e-5, "finite-difference step", ""},
                                    {"tolerance", 1e-4, "pass threshold on the relative error", ""}}),
       loss_check_cmd},
      {"coverage", "proposal coverage upper bound over IOU thresholds",
       std::vector<Key>{{"proposals", "", "directory written by propose", ""},
                        {"corpus", "", "corpus directory (default: the one recorded by propose)", ""},
                        {"theta_step", 0.05, "threshold spacing", ""}},
       coverage_cmd},
  };
}

int execute(const Command& cmd, const std::string& config_path, const std::map<std::string, std::string>& flags,
            std::ostream& out) {
  json cfg = resolve_config(cmd, config_path, flags);
  const auto out_dir = cfg.at("out").get<std::string>();
  if (out_dir.empty()) throw ConfigError("--out is required");
  fs::create_directories(out_dir);
  const Context ctx{cfg, fs::path(out_dir), out};
  Artifacts artifacts = cmd.exec(ctx);
  if (cmd.name == "propose") {
    // downstream commands find the corpus through the echoed config
    cfg["corpus"] = fs::absolute(cfg.at("corpus").get<std::string>()).lexically_normal().generic_string();
  }
  cfg.erase("out");
  const std::string cfg_text = cfg.dump(2) + "\n";
  write_text(ctx.out / "config.json", cfg_text);
  artifacts.push_back("config.json");
  std::sort(artifacts.begin(), artifacts.end());
  json manifest;
  manifest["cmd"] = cmd.name;
  manifest["version"] = kVersion;
  manifest["seed"] = cfg.contains("seed") ? cfg.at("seed") : json(nullptr);
  manifest["config_hash"] = hex64(hash_string(cfg.dump()));
  manifest["config"] = cfg;
  manifest["artifacts"] = artifacts;
  write_text(ctx.out / "manifest.json", manifest.dump(2) + "\n");
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto table = commands();
  CLI::App app{"Partial face detection experiments on synthetic data", "segdet"};
  app.require_subcommand(1);
  struct Bound {
    CLI::App* sub;
    std::string config;
    std::map<std::string, std::string> values;
  };
  std::vector<Bound> bound(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    Command& cmd = table[i];
    cmd.keys.push_back({"out", "", "output directory", ""});
    Bound& b = bound[i];
    b.sub = app.add_subcommand(cmd.name, cmd.help);
    b.sub->add_option("--config", b.config, "JSON file of dotted settings");
    for (const Key& k : cmd.keys) {
      std::string names = "--" + k.name;
      if (!k.alias.empty()) names += ",--" + k.alias;
      std::string def = k.def.is_string() ? k.def.get<std::string>() : k.def.dump();
      b.sub->add_option_function<std::string>(
               names, [&b, name = k.name](const std::string& v) { b.values[name] = v; }, k.help)
          ->default_str(def);
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
    err << (sub ? sub->help() : app.help());
    return 2;
  }

  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!bound[i].sub->parsed()) continue;
    try {
      return execute(table[i], bound[i].config, bound[i].values, out);
    } catch (const ConfigError& e) {
      err << "config error: " << e.what() << "\n" << bound[i].sub->help();
      return 2;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << "\n";
      return 1;
    }
  }
  err << app.help();
  return 2;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace segdet::cli
