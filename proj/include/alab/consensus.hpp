#pragma once

#include "alab/domain.hpp"

#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace alab {

class Store;

enum class DecidedBy { unique_qualifier, longest_duration, none };

std::string_view to_string(DecidedBy d);

struct ConsensusOutcome {
    AudioId audio_id;
    std::optional<ClassId> medoid_class;
    double agreement = 0;
    std::vector<ClassId> qualifying_classes;  // ascending
    DecidedBy decided_by = DecidedBy::none;
};

// Distinct members needed for a class to qualify: ceil(2g/3).
constexpr std::size_t qualification_threshold(std::size_t group_size) noexcept { return (2 * group_size + 2) / 3; }

// Throws ForeignLabeler when an annotation's author is outside the group.
ConsensusOutcome compute_consensus(const AudioId& audio, std::span<const ChunkAnnotation> annotations,
                                   const LabelerGroup& group);

// 1-based labeling-iteration counter; every tenth one is a doubt round.
bool is_doubt_iteration(std::size_t iteration_index);

struct DoubtItem {
    AudioId audio_id;
    ChunkId chunk_id = 0;

    friend bool operator==(const DoubtItem&, const DoubtItem&) = default;
};

struct DoubtHistoryEntry {
    ChunkAnnotation annotation;
    bool resolved = false;
};

// Unresolved Doubt chunks authored by `labeler`, oldest first.
std::vector<DoubtItem> build_doubt_worklist(const LabelerId& labeler, std::span<const DoubtHistoryEntry> history);

// -- workflows over the store

// Consensus for every proposal of an iteration, each judged by its assigned group.
std::vector<ConsensusOutcome> iteration_consensus(const Store& store, IterationId iteration);

// Outcomes with a class become medoids; the rest stay unlabeled. All or nothing.
std::size_t promote_medoids(Store& store, std::span<const ConsensusOutcome> outcomes, IterationId iteration);

// Recomputes consensus for a proposal's audio from its group's live annotations.
ConsensusOutcome audio_consensus(const Store& store, const AudioId& audio);

struct SuggestionResult {
    std::int64_t suggestion_id = 0;
    bool approved = false;
    std::optional<ClassId> class_id;
    std::vector<LabelerId> credited;
};

// Records a class suggestion; with `auto_approve` the class is created and becomes
// usable from the next iteration created.
SuggestionResult suggest_ontology_class(Store& store, const LabelerId& labeler, const std::string& name,
                                        bool auto_approve);
SuggestionResult approve_ontology_suggestion(Store& store, std::int64_t suggestion_id);

// Replaces a Doubt chunk with the labeler's new annotations, then re-runs consensus
// for that audio; a now-qualifying label is promoted at once.
ConsensusOutcome resolve_doubt(Store& store, ChunkId doubt_chunk, std::span<const ChunkAnnotation> replacements);

}  // namespace alab
