#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "segdet/augment.hpp"
#include "segdet/corpus.hpp"
#include "segdet/druid_model.hpp"

using namespace segdet;
using namespace segdet::druid;

namespace {

ModelConfig small_arch() {
  ModelConfig c;
  c.input = 16;
  c.trunk = {2, 3, 4};
  c.branch_channels = 2;
  c.branch_grid = 1;
  return c;
}

DruidSample face_sample(int input = 16, std::uint64_t seed = 3) {
  SceneSpec spec;
  spec.seed = seed;
  spec.no_face_fraction = 0.0;
  spec.occlusion_probability = 0.0;
  const AnnotatedImage ai = render_one(spec, 0);
  return make_sample(ai.image, ai.gt, input);
}

void zero_params(DruidNet& net) {
  for (auto* p : net.params()) std::fill(p->value.begin(), p->value.end(), 0.0);
}

bool same_bits(const DruidNet& a, const DruidNet& b) {
  const auto pa = a.params();
  const auto pb = b.params();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->value.size() != pb[i]->value.size()) return false;
    if (std::memcmp(pa[i]->value.data(), pb[i]->value.data(), pa[i]->value.size() * sizeof(double))) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("forward: arity, zeros, purity, shape check") {
  DruidNet net(ModelConfig{}, 1);
  const nn::Tensor zero(1, 64, 64);
  DruidNet blank = net;
  zero_params(blank);
  const auto out = blank.forward(zero).flatten();
  CHECK(out.size() == 145);
  for (double v : out) CHECK(v == 0.0);

  const DruidSample s = face_sample(64);
  const auto a = net.forward(s.input).flatten();
  const auto b = net.forward(s.input).flatten();
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
  CHECK_THROWS_AS(net.forward(nn::Tensor(1, 32, 32)), InvalidArgument);
  CHECK_THROWS_AS(net.forward(nn::Tensor(2, 64, 64)), InvalidArgument);
}

TEST_CASE("architecture validation") {
  ModelConfig c;
  c.branch_grid = 3;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.input = 60;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = {};
  c.branch_grid = 4;
  CHECK_NOTHROW(c.validate());
  CHECK(c.pooled_dim() == 8 * 16);
}

TEST_CASE("samples are normalized to the input square") {
  Image img(200, 100, 0.5f);
  const GroundTruth gt = make_ground_truth({-20, 10, 80, 90}, {200, 100});
  const DruidSample s = make_sample(img, gt, 16);
  CHECK(s.input.h == 16);
  CHECK(s.target.has_face);
  CHECK(s.target.face.x1 == 0.0);
  CHECK(s.target.face.x2 == doctest::Approx(0.4));
  CHECK(s.target.face.y1 == doctest::Approx(0.1));
  CHECK(s.target.face.y2 == doctest::Approx(0.9));
  const auto seg = gt.segments[index_of(SegmentId::NS)];
  CHECK(s.target.segments[index_of(SegmentId::NS)].x1 == doctest::Approx(seg.x1 / 200));
  CHECK(s.target.visible == gt.visible);
  CHECK_FALSE(make_sample(img, std::nullopt, 16).target.has_face);
}

TEST_CASE("end-to-end gradient matches finite differences") {
  DruidNet net(small_arch(), 5);
  const DruidSample s = face_sample();
  const LossWeights w;
  net.init_output_bias({s});
  for (auto* p : net.params()) {
    // move biases off zero so ReLUs are not at their kinks
    Rng rng(hash_string(p->name));
    if (p->name.ends_with(".b")) for (double& v : p->value) v += rng.uniform(-0.05, 0.05);
    p->zero_grad();
  }
  net.loss(s, w, true);

  // probes in the trunk, a branch and the face head
  struct Probe {
    nn::Param* p;
    std::size_t i;
  };
  std::vector<Probe> probes{{&net.trunk[0].conv.weight, 4}, {&net.trunk[1].skip.weight, 1},
                            {&net.trunk[2].conv.bias, 0},   {&net.branch_conv[3].weight, 7},
                            {&net.branch_conv[14].weight, 2}, {&net.branch_out[5].weight, 3},
                            {&net.face_out.weight, 11},     {&net.face_out.bias, 4}};
  const double h = 1e-6;
  for (const auto& pr : probes) {
    const double keep = pr.p->value[pr.i];
    pr.p->value[pr.i] = keep + h;
    const double up = net.loss(s, w, false);
    pr.p->value[pr.i] = keep - h;
    const double down = net.loss(s, w, false);
    pr.p->value[pr.i] = keep;
    const double fd = (up - down) / (2 * h);
    INFO(pr.p->name, "[", pr.i, "] fd ", fd, " analytic ", pr.p->grad[pr.i]);
    CHECK(std::abs(fd - pr.p->grad[pr.i]) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("training memorizes one sample with nearly monotone epoch means") {
  const DruidSample s = face_sample();
  TrainConfig cfg;
  cfg.adam.lr = 5e-4;
  cfg.epochs = 600;
  cfg.batch_size = 1;
  const auto r = train({s}, small_arch(), cfg);
  REQUIRE(r.epoch_loss.size() == 600);
  CHECK(r.epoch_loss.back() < 1e-3);
  for (std::size_t e = 2; e < r.epoch_loss.size(); ++e) CHECK(r.epoch_loss[e] <= 1.05 * r.epoch_loss[e - 1]);
}

TEST_CASE("training is seeded and a zero step size changes nothing") {
  std::vector<DruidSample> data{face_sample(16, 1), face_sample(16, 2), make_sample(Image(40, 40, 0.3f), std::nullopt, 16)};
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.seed = 9;
  std::vector<double> logged;
  const auto a = train(data, small_arch(), cfg, {}, [&](int, double l) { logged.push_back(l); });
  const auto b = train(data, small_arch(), cfg);
  CHECK(same_bits(a.net, b.net));
  CHECK(logged == a.epoch_loss);

  cfg.adam.lr = 0.0;
  const auto frozen = train(data, small_arch(), cfg);
  DruidNet init(small_arch(), cfg.seed);
  init.init_output_bias(data);
  CHECK(same_bits(frozen.net, init));
  CHECK(frozen.epoch_loss.front() == frozen.epoch_loss.back());

  CHECK_THROWS_AS(train({}, small_arch(), cfg), InvalidArgument);
  cfg.epochs = 0;
  CHECK_THROWS_AS(train(data, small_arch(), cfg), InvalidArgument);
}

TEST_CASE("divergence aborts with a diagnostic") {
  TrainConfig cfg;
  cfg.adam.lr = 1e200;
  cfg.epochs = 3;
  cfg.batch_size = 1;
  try {
    train({face_sample(), face_sample(16, 4)}, small_arch(), cfg);
    FAIL("expected divergence");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }
}

TEST_CASE("inference reads the face head and maps boxes back") {
  DruidNet net(small_arch(), 2);
  zero_params(net);
  net.face_out.bias.value = {0.1, 0.2, 0.5, 0.6, 1.7};
  net.branch_out[index_of(SegmentId::NS)].bias.value = {0.3, 0.4, 0.5, 0.8, -0.2, 0, 0, 0, 0, 0};
  const Inference r = infer(Image(200, 100, 0.5f), net);
  CHECK(r.face.x1 == doctest::Approx(20));
  CHECK(r.face.y1 == doctest::Approx(20));
  CHECK(r.face.x2 == doctest::Approx(100));
  CHECK(r.face.y2 == doctest::Approx(60));
  CHECK(r.confidence == 1.0);
  const auto& ns = r.segments[index_of(SegmentId::NS)];
  CHECK(ns.box.x1 == doctest::Approx(60));
  CHECK(ns.box.y2 == doctest::Approx(80));
  CHECK(ns.visibility == 0.0);
  net.face_out.bias.value[4] = 0.35;
  CHECK(infer(Image(16, 16), net).confidence == 0.35);
}

TEST_CASE("parameter file round-trips bitwise") {
  ModelConfig arch = small_arch();
  arch.branch_grid = 2;
  DruidNet net(arch, 11);
  const std::string bytes = serialize_params(net);
  CHECK(bytes.substr(0, 8) == "DRUIDTOY");
  CHECK(bytes[8] == 1);
  const DruidNet back = deserialize_params(bytes);
  CHECK(back.config().branch_grid == 2);
  CHECK(same_bits(net, back));
  CHECK(serialize_params(back) == bytes);

  const auto path = std::filesystem::temp_directory_path() / "segdet_params_test.bin";
  save_params(path, net);
  CHECK(same_bits(load_params(path), net));
  std::filesystem::remove(path);

  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(deserialize_params(bad), InvalidArgument);
  CHECK_THROWS_AS(deserialize_params(bytes.substr(0, bytes.size() - 3)), InvalidArgument);
  CHECK_THROWS_AS(deserialize_params(bytes + "x"), InvalidArgument);
  bad = bytes;
  bad[8] = 2;
  CHECK_THROWS_AS(deserialize_params(bad), InvalidArgument);
}
