#pragma once

#include "alab/domain.hpp"

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace alab {

inline constexpr std::size_t kDefaultMaxSamplesPerRun = 15000;

struct PartitionConfig {
    std::size_t n_smax = kDefaultMaxSamplesPerRun;
};

// Audio catalog restricted to what window selection needs.
struct Catalog {
    std::set<NodeId> nodes;
    std::vector<AudioRecord> audios;

    void add(AudioRecord audio);
};

// Audios of `node` recorded in [start, end).
AudioSet select_window(const Catalog& catalog, const NodeId& node, Timestamp start, Timestamp end);

struct LabeledSplit {
    AudioSet s_wm;   // labeled: medoid candidates
    AudioSet s_wnh;  // unlabeled
};

LabeledSplit split_labeled(const AudioSet& s_w, const AudioSet& labeled_ids);

WindowSelection make_window_selection(const NodeId& node, Timestamp start, Timestamp end, const AudioSet& s_w,
                                      const AudioSet& labeled_ids);

// ceil(pool_size / n_smax), or 0 for an empty pool.
std::size_t num_disjoint_sets(std::size_t pool_size, const PartitionConfig& config);

enum class AssignmentRule {
    all_to_first,  // L_c < N_ds
    one_per_set,   // L_c == N_ds
    dealt,         // L_c > N_ds
};

std::string_view to_string(AssignmentRule rule);

struct SpillRecord {
    AudioId audio_id;
    ClassId top1_class = 0;
    std::size_t from_set = 0;  // 0-based
    std::size_t to_set = 0;
};

struct PartitionPlan {
    std::size_t n_ds = 0;
    // Priority order: sets[0] is the most uncertain and diverse. Members sorted by id.
    std::vector<std::vector<AudioId>> sets;
    std::map<ClassId, std::size_t> class_buckets;  // L_c
    std::map<ClassId, AssignmentRule> rules;
    std::map<ClassId, std::vector<std::size_t>> allocation;  // per-set counts after spills
    std::vector<SpillRecord> spills;
    // Set 1 could not be brought under the size cap by spilling.
    bool overflow = false;

    std::size_t total_size() const;
};

// Splits the unlabeled pool into `n_ds` disjoint sets by decreasing uncertainty
// and diversity of the upstream top-1 prediction. With `n_smax` given, rule-(i)
// samples that crowd a set past the cap spill to the next set, least uncertain first.
PartitionPlan assign_disjoint_sets(std::span<const EmbeddingRecord> records, std::size_t n_ds,
                                   std::optional<std::size_t> n_smax = std::nullopt);

// Per-set sizes and per-class allocation as plain text.
std::string format_plan_report(const PartitionPlan& plan);

}  // namespace alab
