#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "segdet/geometry.hpp"

namespace segdet {

/// A detected facial segment with the full face it implies.
struct SegmentDetection {
  SegmentId seg = SegmentId::NS;
  BBox box;
  BBox est_face;    ///< clipped to the image
  Point est_center; ///< from the unclipped estimate

  bool operator==(const SegmentDetection&) const = default;
};

/// Builds a detection by running face_from_segment on `box`.
SegmentDetection make_detection(SegmentId seg, const BBox& box, const ImageMeta& img,
                                const SegmentCatalog& catalog = default_catalog());

struct Cluster {
  std::size_t anchor = 0;                // position of the seed within `members`
  std::vector<SegmentDetection> members;
  std::vector<std::size_t> source_index;  // members[i] is dets[source_index[i]]
};

struct Proposal {
  std::vector<SegmentDetection> segments;
  BBox bbox;
  std::size_t cluster_id = 0;
};

struct ProposalConfig {
  double radius = 25.6;  ///< cluster radius in pixels
  std::size_t min_segments = 2;  ///< c
  std::size_t max_per_cluster = 10;  ///< zeta; kUnlimited disables the cap
  std::uint64_t seed = 0;

  static constexpr std::size_t kUnlimited = std::numeric_limits<std::size_t>::max();

  /// radius = 0.2 * min(width, height), other fields at their defaults.
  static ProposalConfig for_image(const ImageMeta& img);

  void validate() const;
};

/// Removes exact (seg, box) duplicates, keeping the first occurrence.
std::vector<SegmentDetection> deduplicate(const std::vector<SegmentDetection>& dets);

/// One cluster per seed detection; identical member sets are merged.
std::vector<Cluster> cluster_detections(const std::vector<SegmentDetection>& dets,
                                        const ProposalConfig& cfg);

/// Anchor-fixed subsets of size >= c, at most zeta of them, deterministic in cfg.seed.
std::vector<Proposal> enumerate_subsets(const Cluster& cluster, const ProposalConfig& cfg);

/// Number of anchor-fixed subsets with at least c members for a cluster of n members.
std::uint64_t subset_family_size(std::size_t n, std::size_t c);

/// Smallest box containing every member's estimated face. Throws on an empty list.
BBox proposal_bbox(const std::vector<SegmentDetection>& members);

/// Full per-image pipeline: dedupe, cluster, enumerate (cluster seeds derived from cfg.seed),
/// and drop proposals that repeat an earlier (segment set, box) pair.
std::vector<Proposal> generate_proposals(const std::vector<SegmentDetection>& dets,
                                         const ProposalConfig& cfg);

}  // namespace segdet
