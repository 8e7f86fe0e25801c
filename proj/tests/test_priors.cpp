#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "segdet/priors.hpp"
#include "segdet/rng.hpp"

using namespace segdet;

namespace {

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

std::vector<LabeledProposal> random_labeled(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledProposal> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<SegmentId> segs;
    for (SegmentId s : kProposalSegments) {
      if (rng.bernoulli(0.4)) segs.push_back(s);
    }
    if (segs.empty()) segs.push_back(kProposalSegments[rng.below(9)]);
    rng.shuffle(segs.begin(), segs.end());
    out.push_back({with_segments(segs), rng.bernoulli(0.3)});
  }
  return out;
}

}  // namespace

TEST_CASE("identity ignores order") {
  const auto a = with_segments({SegmentId::NS, SegmentId::L12, SegmentId::EP});
  const auto b = with_segments({SegmentId::L12, SegmentId::EP, SegmentId::NS});
  CHECK(proposal_identity(a) == proposal_identity(b));
  CHECK(proposal_identity(with_segments({SegmentId::NS})) == "NS");
}

TEST_CASE("prior features agree with direct counting") {
  const auto train = random_labeled(10000, 17);
  const PriorTable table = fit_priors(train);
  const auto probe = random_labeled(10000, 18);

  for (std::size_t i = 0; i < probe.size(); ++i) {
    const Proposal& p = probe[i].proposal;
    std::vector<bool> present(9, false);
    for (const auto& d : p.segments) {
      for (std::size_t k = 0; k < 9; ++k) present[k] = present[k] || kProposalSegments[k] == d.seg;
    }
    std::set<SegmentId> mine;
    for (const auto& d : p.segments) mine.insert(d.seg);

    const auto f = prior_features(p, table);
    REQUIRE(f.size() == 20);
    if (i < 200) {  // the counting oracle is quadratic; spot-check a prefix
      for (std::size_t k = 0; k < 9; ++k) {
        double nf = 0, nn = 0, cf = 0, cn = 0;
        for (const auto& lp : train) {
          bool has = false;
          for (const auto& d : lp.proposal.segments) has = has || d.seg == kProposalSegments[k];
          (lp.is_face ? nf : nn) += 1;
          if (has) (lp.is_face ? cf : cn) += 1;
        }
        CHECK(f[2 * k] == (present[k] ? cf / nf : 0.0));
        CHECK(f[2 * k + 1] == (present[k] ? cn / nn : 0.0));
      }
      double nf = 0, nn = 0, cf = 0, cn = 0;
      for (const auto& lp : train) {
        std::set<SegmentId> theirs;
        for (const auto& d : lp.proposal.segments) theirs.insert(d.seg);
        (lp.is_face ? nf : nn) += 1;
        if (theirs == mine) (lp.is_face ? cf : cn) += 1;
      }
      CHECK(f[18] == cf / nf);
      CHECK(f[19] == cn / nn);
    }
    for (std::size_t k = 0; k < 9; ++k) {
      if (!present[k]) {
        CHECK(f[2 * k] == 0.0);
        CHECK(f[2 * k + 1] == 0.0);
      }
    }
    for (double v : f) CHECK((v >= 0.0 && v <= 1.0));
  }
}

TEST_CASE("hand-computed table") {
  std::vector<LabeledProposal> train{
      {with_segments({SegmentId::NS, SegmentId::EP}), true},
      {with_segments({SegmentId::NS}), true},
      {with_segments({SegmentId::EP, SegmentId::NS}), true},
      {with_segments({SegmentId::L12}), true},
      {with_segments({SegmentId::NS}), false},
      {with_segments({SegmentId::R12, SegmentId::L12}), false},
  };
  const PriorTable t = fit_priors(train);
  const auto f = prior_features(with_segments({SegmentId::EP, SegmentId::NS}), t);
  const std::size_t ns = *proposal_index(SegmentId::NS);
  const std::size_t ep = *proposal_index(SegmentId::EP);
  CHECK(f[2 * ns] == 0.75);
  CHECK(f[2 * ns + 1] == 0.5);
  CHECK(f[2 * ep] == 0.5);
  CHECK(f[2 * ep + 1] == 0.0);
  CHECK(f[18] == 0.5);
  CHECK(f[19] == 0.0);
  const double mean = std::accumulate(f.begin(), f.end(), 0.0) / 20.0;
  CHECK(rerank(0.8, with_segments({SegmentId::EP, SegmentId::NS}), t) == doctest::Approx(0.8 * mean));

  // never-seen identity
  const auto g = prior_features(with_segments({SegmentId::UL12, SegmentId::NS}), t);
  CHECK(g[18] == 0.0);
  CHECK(g[19] == 0.0);
  CHECK(g[2 * ns] == 0.75);
}

TEST_CASE("single-segment proposal has one nonzero pair") {
  const PriorTable t = fit_priors(random_labeled(500, 3));
  const auto f = prior_features(with_segments({SegmentId::NS}), t);
  const std::size_t ns = *proposal_index(SegmentId::NS);
  for (std::size_t k = 0; k < 9; ++k) {
    if (k == ns) continue;
    CHECK(f[2 * k] == 0.0);
    CHECK(f[2 * k + 1] == 0.0);
  }
  CHECK(f[2 * ns] > 0.0);
}

TEST_CASE("errors") {
  CHECK_THROWS_AS(fit_priors({{with_segments({SegmentId::NS}), true}}), InvalidArgument);
  CHECK_THROWS_AS(fit_priors({{with_segments({SegmentId::NS}), false}}), InvalidArgument);
  CHECK_THROWS_AS(prior_features(with_segments({SegmentId::NS}), PriorTable{}), InvalidArgument);
  const PriorTable t = fit_priors(random_labeled(100, 4));
  CHECK_THROWS_AS(prior_features(with_segments({SegmentId::NS}), t, 5), InvalidArgument);
}

TEST_CASE("json round trip") {
  const PriorTable t = fit_priors(random_labeled(300, 9));
  const PriorTable u = prior_table_from_json(nlohmann::json::parse(to_json(t).dump()));
  CHECK(u.per_segment_face == t.per_segment_face);
  CHECK(u.identity_nonface == t.identity_nonface);
}
