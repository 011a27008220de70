#pragma once

#include "alab/committee.hpp"
#include "alab/domain.hpp"

#include <array>
#include <optional>
#include <string_view>
#include <vector>

namespace alab {

enum class IterationPath {
    mal,               // no medoids: k-medoids bootstrap
    committee,         // propagation vs. logistic regression
    propagation_only,  // fewer than two labeled classes, classifier skipped
    random,            // uniform baseline
};

std::string_view to_string(IterationPath path);
IterationPath iteration_path_from_string(std::string_view text);

struct MedoidUse {
    AudioId audio_id;
    ClassId class_id = 0;

    friend bool operator==(const MedoidUse&, const MedoidUse&) = default;
};

// Bookkeeping for one AL iteration; everything persisted and replayed verbatim.
struct IterationRecord {
    IterationId iteration_id = 0;
    NodeId node_id;
    Timestamp window_start{};
    Timestamp window_end{};
    Timestamp created_at{};

    std::size_t window_count = 0;     // |S_w|
    std::size_t labeled_count = 0;    // |S_wm|
    std::size_t unlabeled_count = 0;  // |S_wnh|
    std::size_t n_ds = 0;
    std::size_t processed_set = 0;    // 0-based priority index of the set worked on
    std::int64_t plan_id = 0;
    std::size_t fold_count = 0;       // labeler groups
    double labeled_pct = 0;           // |S_wm| / |S_w|

    IterationPath path = IterationPath::mal;
    std::vector<AudioId> processed;   // members of the processed set still eligible
    std::vector<MedoidUse> medoids;   // pool used by the committee
    std::array<std::size_t, 3> medoid_tiers{0, 0, 0};
    ProposalBatch batch;
    std::vector<GroupId> assigned_group;  // parallel to batch.proposals

    std::size_t mismatch_count = 0;
    double classifier_train_accuracy = 0;
    int classifier_iterations = 0;

    // Set when this iteration created a fresh partition of the window.
    std::optional<std::vector<std::vector<AudioId>>> new_plan_sets;
};

// Multi-line human-readable summary.
std::string format_iteration_summary(const IterationRecord& record);

}  // namespace alab
