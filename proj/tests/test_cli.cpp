#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("segdet_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

int run(std::vector<std::string> args, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int rc = segdet::cli::run(args, out, err);
  if (err_text) *err_text = err.str();
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

}  // namespace

TEST_CASE("usage errors exit with 2") {
  TempDir t;
  CHECK(run({}) == 2);
  CHECK(run({"no-such-command"}) == 2);
  CHECK(run({"loss-check", "--out", t / "a", "--bogus", "1"}) == 2);
  CHECK(run({"loss-check", "--out", t / "a", "--samples", "many"}) == 2);
  CHECK(run({"loss-check", "--samples", "3"}) == 2);  // no --out
  CHECK(run({"gen-data", "--out", t / "g", "--n", "5", "--scene.no_face_fraction", "1.5"}) == 2);
  CHECK(run({"loss-check", "--help"}) == 0);
}

TEST_CASE("config files are validated") {
  TempDir t;
  {
    std::ofstream(t / "bad.json") << R"({"samples": 3, "unknown.key": 1})";
    std::ofstream(t / "typed.json") << R"({"samples": "three"})";
    std::ofstream(t / "ok.json") << R"({"samples": 3, "seed": 9})";
  }
  CHECK(run({"loss-check", "--config", t / "bad.json", "--out", t / "o"}) == 2);
  CHECK(run({"loss-check", "--config", t / "typed.json", "--out", t / "o"}) == 2);
  CHECK(run({"loss-check", "--config", t / "missing.json", "--out", t / "o"}) == 2);
  REQUIRE(run({"loss-check", "--config", t / "ok.json", "--samples", "4", "--out", t / "o"}) == 0);
  const json cfg = read_json(t / "o/config.json");
  CHECK(cfg["samples"] == 4);  // flag beats file
  CHECK(cfg["seed"] == 9);
  CHECK(read_json(t / "o/summary.json")["samples"] == 4);
}

TEST_CASE("runtime failures exit with 1") {
  TempDir t;
  CHECK(run({"propose", "--corpus", t / "nowhere", "--out", t / "p"}) == 1);
  {
    std::ofstream f(t / "dets.jsonl");
    f << R"({"image_id":"a","gt_face":null,"box":null,"score":null})" << "\n";
    f << "{not json\n";
  }
  std::string err;
  CHECK(run({"eval", "--detector", "detections", "--detections", t / "dets.jsonl", "--out", t / "e"}, &err) == 1);
  CHECK(err.find("dets.jsonl:2") != std::string::npos);
}

TEST_CASE("loss-check reports agreement of the analytic gradient") {
  TempDir t;
  REQUIRE(run({"loss-check", "--samples", "100", "--out", t / "lc"}) == 0);
  const json s = read_json(t / "lc/summary.json");
  CHECK(s["max_rel_error"].get<double>() < 1e-4);
  CHECK(s["pass"] == true);
  std::istringstream csv(slurp(t / "lc/loss_check.csv"));
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 100);
}

TEST_CASE("eval of a perfect detector") {
  TempDir t;
  {
    std::ofstream f(t / "dets.jsonl");
    for (int i = 0; i < 30; ++i)
      f << json{{"image_id", "f" + std::to_string(i)},
                {"gt_face", {10, 10, 50, 60}},
                {"box", {10, 10, 50, 60}},
                {"score", 0.9 + i * 1e-3}}
               .dump()
        << "\n";
    for (int i = 0; i < 30; ++i)
      f << json{{"image_id", "n" + std::to_string(i)}, {"gt_face", nullptr}, {"box", {0, 0, 5, 5}}, {"score", 0.1}}
               .dump()
        << "\n";
  }
  REQUIRE(run({"eval", "--detector", "detections", "--detections", t / "dets.jsonl", "--out", t / "e"}) == 0);
  const json s = read_json(t / "e/summary.json");
  CHECK(s["tar_at_1pct_far"] == 1.0);
  CHECK(s["recall_at_99pct_precision"] == 1.0);
  CHECK(s["images"] == 60);
  CHECK(fs::exists(t / "e/roc.csv"));
  CHECK(fs::exists(t / "e/pr.csv"));
  const json m = read_json(t / "e/manifest.json");
  CHECK(m["cmd"] == "eval");
  CHECK(m["artifacts"].size() == 5);
}

TEST_CASE("pipeline reruns are byte-identical") {
  TempDir t;
  REQUIRE(run({"gen-data", "--n", "24", "--seed", "3", "--out", t / "data"}) == 0);
  for (const char* dir : {"p1", "p2"})
    REQUIRE(run({"propose", "--corpus", t / "data", "--c", "2", "--zeta", "10", "--out", t / dir}) == 0);
  const json cfg = read_json(t / "p1/config.json");
  CHECK(cfg["proposal.c"] == 2);
  CHECK(cfg["proposal.zeta"] == 10);
  CHECK(read_json(t / "p1/manifest.json")["config"]["proposal.zeta"] == 10);

  for (const char* dir : {"f1", "f2"})
    REQUIRE(run({"train-fsfd", "--proposals", t / "p1", "--svm.epochs", "3", "--out", t / dir}) == 0);
  for (const char* dir : {"e1", "e2"})
    REQUIRE(run({"eval", "--detector", "fsfd", "--weights-in", t / "f1/fsfd.json", "--proposals", t / "p1",
                 "--out", t / dir}) == 0);
  for (const char* dir : {"c1", "c2"}) REQUIRE(run({"coverage", "--proposals", t / "p1", "--out", t / dir}) == 0);

  for (const auto& [a, b] : std::vector<std::pair<std::string, std::string>>{
           {"p1", "p2"}, {"f1", "f2"}, {"e1", "e2"}, {"c1", "c2"}}) {
    for (const auto& entry : fs::directory_iterator(t.path / a)) {
      const auto name = entry.path().filename();
      CAPTURE(a);
      CAPTURE(name.string());
      CHECK(slurp(entry.path()) == slurp(t.path / b / name));
    }
  }
}
