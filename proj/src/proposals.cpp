#include "segdet/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "segdet/rng.hpp"

namespace segdet {

namespace {

constexpr std::uint64_t kExhaustiveLimit = 512;

bool same_detection(const SegmentDetection& a, const SegmentDetection& b) {
  return a.seg == b.seg && a.box == b.box;
}

double distance(const Point& a, const Point& b) { return std::hypot(a.x - b.x, a.y - b.y); }

// Saturating binomial coefficient.
std::uint64_t choose(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  long double r = 1.0L;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<long double>(n - k + i) / i;
  if (r > 1.8e19L) return UINT64_MAX;
  return static_cast<std::uint64_t>(std::llround(r));
}

// Calls fn(subset) for every k-subset of {0..n-1} in lexicographic order.
template <typename Fn>
void for_each_combination(std::size_t n, std::size_t k, Fn&& fn) {
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    fn(idx);
    if (k == 0) return;
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) return;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

Proposal build_proposal(const Cluster& cluster, const std::vector<std::size_t>& others_chosen,
                        const std::vector<std::size_t>& others) {
  // members kept in cluster order so that equal subsets serialize identically
  std::vector<std::size_t> positions{cluster.anchor};
  for (std::size_t o : others_chosen) positions.push_back(others[o]);
  std::sort(positions.begin(), positions.end());
  Proposal p;
  for (std::size_t pos : positions) p.segments.push_back(cluster.members[pos]);
  p.bbox = proposal_bbox(p.segments);
  return p;
}

}  // namespace

SegmentDetection make_detection(SegmentId seg, const BBox& box, const ImageMeta& img,
                                const SegmentCatalog& catalog) {
  const FaceEstimate est = face_from_segment(seg, box, img, catalog);
  return {seg, box, est.face, est.center};
}

ProposalConfig ProposalConfig::for_image(const ImageMeta& img) {
  ProposalConfig cfg;
  cfg.radius = 0.2 * std::min(img.width, img.height);
  return cfg;
}

void ProposalConfig::validate() const {
  if (!(radius > 0.0)) throw InvalidArgument("cluster radius must be positive");
  if (min_segments < 1) throw InvalidArgument("minimum segment count must be at least 1");
  if (max_per_cluster < 1) throw InvalidArgument("proposals per cluster must be at least 1");
}

std::vector<SegmentDetection> deduplicate(const std::vector<SegmentDetection>& dets) {
  std::vector<SegmentDetection> out;
  for (const auto& d : dets) {
    const bool seen = std::any_of(out.begin(), out.end(),
                                  [&](const SegmentDetection& o) { return same_detection(o, d); });
    if (!seen) out.push_back(d);
  }
  return out;
}

std::vector<Cluster> cluster_detections(const std::vector<SegmentDetection>& dets,
                                        const ProposalConfig& cfg) {
  cfg.validate();
  std::vector<Cluster> clusters;
  std::set<std::vector<std::size_t>> seen;
  for (std::size_t seed = 0; seed < dets.size(); ++seed) {
    Cluster c;
    for (std::size_t j = 0; j < dets.size(); ++j) {
      if (distance(dets[j].est_center, dets[seed].est_center) <= cfg.radius) {
        if (j == seed) c.anchor = c.members.size();
        c.members.push_back(dets[j]);
        c.source_index.push_back(j);
      }
    }
    if (seen.insert(c.source_index).second) clusters.push_back(std::move(c));
  }
  return clusters;
}

std::uint64_t subset_family_size(std::size_t n, std::size_t c) {
  if (n == 0 || n < c) return 0;
  const std::size_t m = n - 1;
  const std::size_t min_others = c == 0 ? 0 : c - 1;
  std::uint64_t total = 0;
  for (std::size_t j = min_others; j <= m; ++j) {
    const std::uint64_t term = choose(m, j);
    if (term == UINT64_MAX || total > UINT64_MAX - term) return UINT64_MAX;
    total += term;
  }
  return total;
}

std::vector<Proposal> enumerate_subsets(const Cluster& cluster, const ProposalConfig& cfg) {
  cfg.validate();
  const std::size_t n = cluster.members.size();
  if (n < cfg.min_segments || n == 0) return {};
  std::vector<std::size_t> others;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != cluster.anchor) others.push_back(i);
  }
  const std::size_t m = others.size();
  const std::size_t min_others = cfg.min_segments - 1;
  const std::uint64_t family = subset_family_size(n, cfg.min_segments);
  Rng rng(cfg.seed);

  std::vector<std::vector<std::size_t>> chosen;
  if (family <= kExhaustiveLimit || cfg.max_per_cluster >= family) {
    if (family > (1ULL << 20)) {
      throw InvalidArgument("subset family too large to enumerate; bound max_per_cluster");
    }
    std::vector<std::vector<std::size_t>> all;
    for (std::size_t j = min_others; j <= m; ++j) {
      for_each_combination(m, j, [&](const std::vector<std::size_t>& s) { all.push_back(s); });
    }
    if (cfg.max_per_cluster < all.size()) {
      // partial Fisher-Yates: uniform sample without replacement
      for (std::size_t i = 0; i < cfg.max_per_cluster; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(all.size() - i));
        std::swap(all[i], all[j]);
      }
      all.resize(cfg.max_per_cluster);
    }
    chosen = std::move(all);
  } else {
    std::set<std::vector<std::size_t>> seen;
    while (chosen.size() < cfg.max_per_cluster) {
      std::vector<std::size_t> s;
      for (std::size_t i = 0; i < m; ++i) {
        if (rng.next() >> 63) s.push_back(i);
      }
      if (s.size() < min_others) continue;
      if (seen.insert(s).second) chosen.push_back(std::move(s));
    }
  }

  std::vector<Proposal> out;
  out.reserve(chosen.size());
  for (const auto& s : chosen) out.push_back(build_proposal(cluster, s, others));
  return out;
}

BBox proposal_bbox(const std::vector<SegmentDetection>& members) {
  if (members.empty()) throw InvalidArgument("proposal_bbox needs at least one member");
  BBox b = members.front().est_face;
  for (const auto& m : members) {
    b.x1 = std::min(b.x1, m.est_face.x1);
    b.y1 = std::min(b.y1, m.est_face.y1);
    b.x2 = std::max(b.x2, m.est_face.x2);
    b.y2 = std::max(b.y2, m.est_face.y2);
  }
  return b;
}

std::vector<Proposal> generate_proposals(const std::vector<SegmentDetection>& dets,
                                         const ProposalConfig& cfg) {
  const std::vector<SegmentDetection> unique = deduplicate(dets);
  const std::vector<Cluster> clusters = cluster_detections(unique, cfg);
  std::vector<Proposal> out;
  std::set<std::vector<std::size_t>> seen;
  for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
    ProposalConfig local = cfg;
    local.seed = mix_seed(cfg.seed, ci);
    for (Proposal& p : enumerate_subsets(clusters[ci], local)) {
      // identify the member set by source detection indices
      std::vector<std::size_t> key;
      for (const auto& s : p.segments) {
        for (std::size_t k = 0; k < unique.size(); ++k) {
          if (same_detection(unique[k], s)) {
            key.push_back(k);
            break;
          }
        }
      }
      std::sort(key.begin(), key.end());
      if (!seen.insert(key).second) continue;
      p.cluster_id = ci;
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace segdet
