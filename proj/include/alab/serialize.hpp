#pragma once

#include "alab/consensus.hpp"
#include "alab/iteration.hpp"
#include "alab/store.hpp"

#include <json.hpp>

namespace alab {

nlohmann::json to_json(const IterationRecord& record, bool with_proposals = true);
nlohmann::json to_json(const ConsensusOutcome& outcome);
nlohmann::json to_json(const std::vector<TagCount>& histogram);
nlohmann::json to_json(const ProposalRow& row);
nlohmann::json to_json(const OntologyClass& cls);

}  // namespace alab
