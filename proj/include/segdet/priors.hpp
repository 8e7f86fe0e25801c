#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "segdet/proposals.hpp"

namespace segdet {

/// Identity of a proposal for prior statistics: its segment tags in canonical order,
/// joined by '+'. Geometry is ignored.
std::string proposal_identity(const Proposal& p);

/// Occurrence statistics over labeled training proposals.
struct PriorTable {
  std::vector<double> per_segment_face;     ///< length M, fraction of face proposals containing s_k
  std::vector<double> per_segment_nonface;  ///< length M
  std::map<std::string, double> identity_face;     ///< fraction of face proposals with this identity
  std::map<std::string, double> identity_nonface;

  std::size_t num_segments() const { return per_segment_face.size(); }
  bool empty() const { return per_segment_face.empty(); }
};

struct LabeledProposal {
  Proposal proposal;
  bool is_face = false;
};

/// Fits the table over the first M entries of kProposalSegments. Throws InvalidArgument
/// if either class is empty.
PriorTable fit_priors(const std::vector<LabeledProposal>& labeled,
                      std::size_t num_segments = kProposalSegments.size());

/// Length 2M+2: [p_F[k], p_N[k]] per present segment k (zero when absent), then the two
/// identity-level fractions (zero for identities never seen in training).
std::vector<double> prior_features(const Proposal& p, const PriorTable& table,
                                   std::size_t num_segments = kProposalSegments.size());

/// prob times the arithmetic mean of the prior features.
double rerank(double prob, const Proposal& p, const PriorTable& table);

nlohmann::json to_json(const PriorTable& t);
PriorTable prior_table_from_json(const nlohmann::json& j);

}  // namespace segdet
