#include "segdet/priors.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace segdet {

namespace {

std::vector<bool> presence(const Proposal& p, std::size_t num_segments) {
  std::vector<bool> present(num_segments, false);
  for (const auto& s : p.segments) {
    const auto k = proposal_index(s.seg);
    if (k && *k < num_segments) present[*k] = true;
  }
  return present;
}

}  // namespace

std::string proposal_identity(const Proposal& p) {
  std::set<std::size_t> tags;
  for (const auto& s : p.segments) tags.insert(index_of(s.seg));
  std::string id;
  for (std::size_t t : tags) {
    if (!id.empty()) id += '+';
    id += segment_name(kAllSegments[t]);
  }
  return id;
}

PriorTable fit_priors(const std::vector<LabeledProposal>& labeled, std::size_t num_segments) {
  if (num_segments == 0 || num_segments > kProposalSegments.size()) {
    throw InvalidArgument("prior table segment count out of range");
  }
  std::vector<double> face_seg(num_segments, 0.0), nonface_seg(num_segments, 0.0);
  std::map<std::string, double> face_id, nonface_id;
  double n_face = 0.0, n_nonface = 0.0;
  for (const auto& lp : labeled) {
    const auto present = presence(lp.proposal, num_segments);
    auto& seg_counts = lp.is_face ? face_seg : nonface_seg;
    auto& id_counts = lp.is_face ? face_id : nonface_id;
    (lp.is_face ? n_face : n_nonface) += 1.0;
    for (std::size_t k = 0; k < num_segments; ++k) {
      if (present[k]) seg_counts[k] += 1.0;
    }
    id_counts[proposal_identity(lp.proposal)] += 1.0;
  }
  if (n_face == 0.0) throw InvalidArgument("fit_priors: no face proposals");
  if (n_nonface == 0.0) throw InvalidArgument("fit_priors: no non-face proposals");

  PriorTable t;
  t.per_segment_face.resize(num_segments);
  t.per_segment_nonface.resize(num_segments);
  for (std::size_t k = 0; k < num_segments; ++k) {
    t.per_segment_face[k] = face_seg[k] / n_face;
    t.per_segment_nonface[k] = nonface_seg[k] / n_nonface;
  }
  for (const auto& [id, c] : face_id) t.identity_face[id] = c / n_face;
  for (const auto& [id, c] : nonface_id) t.identity_nonface[id] = c / n_nonface;
  return t;
}

std::vector<double> prior_features(const Proposal& p, const PriorTable& table,
                                   std::size_t num_segments) {
  if (table.empty()) throw InvalidArgument("prior table has not been fitted");
  if (table.num_segments() != num_segments) {
    throw InvalidArgument("prior table fitted for a different segment count");
  }
  std::vector<double> f(2 * num_segments + 2, 0.0);
  const auto present = presence(p, num_segments);
  for (std::size_t k = 0; k < num_segments; ++k) {
    if (!present[k]) continue;
    f[2 * k] = table.per_segment_face[k];
    f[2 * k + 1] = table.per_segment_nonface[k];
  }
  const std::string id = proposal_identity(p);
  if (auto it = table.identity_face.find(id); it != table.identity_face.end()) {
    f[2 * num_segments] = it->second;
  }
  if (auto it = table.identity_nonface.find(id); it != table.identity_nonface.end()) {
    f[2 * num_segments + 1] = it->second;
  }
  return f;
}

double rerank(double prob, const Proposal& p, const PriorTable& table) {
  const auto f = prior_features(p, table, table.num_segments());
  const double mean = std::accumulate(f.begin(), f.end(), 0.0) / static_cast<double>(f.size());
  return prob * mean;
}

nlohmann::json to_json(const PriorTable& t) {
  nlohmann::json j;
  j["per_segment_face"] = t.per_segment_face;
  j["per_segment_nonface"] = t.per_segment_nonface;
  j["identity_face"] = t.identity_face;
  j["identity_nonface"] = t.identity_nonface;
  return j;
}

PriorTable prior_table_from_json(const nlohmann::json& j) {
  PriorTable t;
  t.per_segment_face = j.at("per_segment_face").get<std::vector<double>>();
  t.per_segment_nonface = j.at("per_segment_nonface").get<std::vector<double>>();
  t.identity_face = j.at("identity_face").get<std::map<std::string, double>>();
  t.identity_nonface = j.at("identity_nonface").get<std::map<std::string, double>>();
  if (t.per_segment_face.size() != t.per_segment_nonface.size()) {
    throw InvalidArgument("prior table per-segment arrays differ in length");
  }
  return t;
}

}  // namespace segdet
