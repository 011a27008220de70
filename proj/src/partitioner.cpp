#include "alab/partitioner.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>
#include <tuple>

namespace alab {

void Catalog::add(AudioRecord audio) {
    nodes.insert(audio.node_id);
    audios.push_back(std::move(audio));
}

AudioSet select_window(const Catalog& catalog, const NodeId& node, Timestamp start, Timestamp end) {
    if (!(start < end)) throw Error(ErrorKind::InvalidWindow, "window start must precede window end");
    if (!catalog.nodes.count(node)) throw Error(ErrorKind::UnknownNode, "unknown node " + node.str());
    AudioSet s_w;
    for (const auto& a : catalog.audios)
        if (a.node_id == node && a.recorded_at >= start && a.recorded_at < end) s_w.insert(a.audio_id);
    return s_w;
}

LabeledSplit split_labeled(const AudioSet& s_w, const AudioSet& labeled_ids) {
    LabeledSplit split;
    for (const auto& id : s_w) {
        if (labeled_ids.count(id))
            split.s_wm.insert(split.s_wm.end(), id);
        else
            split.s_wnh.insert(split.s_wnh.end(), id);
    }
    return split;
}

WindowSelection make_window_selection(const NodeId& node, Timestamp start, Timestamp end, const AudioSet& s_w,
                                      const AudioSet& labeled_ids) {
    auto split = split_labeled(s_w, labeled_ids);
    WindowSelection sel{node, start, end, s_w, std::move(split.s_wm), std::move(split.s_wnh)};
    return sel;
}

std::size_t num_disjoint_sets(std::size_t pool_size, const PartitionConfig& config) {
    if (config.n_smax == 0) throw Error(ErrorKind::InvalidArgument, "n_smax must be at least 1");
    if (pool_size == 0) return 0;
    return std::max<std::size_t>(1, (pool_size + config.n_smax - 1) / config.n_smax);
}

std::string_view to_string(AssignmentRule rule) {
    switch (rule) {
        case AssignmentRule::all_to_first: return "all_to_first";
        case AssignmentRule::one_per_set: return "one_per_set";
        case AssignmentRule::dealt: return "dealt";
    }
    return "?";
}

std::size_t PartitionPlan::total_size() const {
    return std::accumulate(sets.begin(), sets.end(), std::size_t{0},
                           [](std::size_t acc, const auto& s) { return acc + s.size(); });
}

namespace {

struct Member {
    const EmbeddingRecord* record;

    float prob() const { return record->top1_prob; }
    const AudioId& id() const { return record->audio_id; }
};

// Ascending probability, id as the tie-break.
bool more_uncertain(const Member& a, const Member& b) {
    return std::tie(a.record->top1_prob, a.record->audio_id) < std::tie(b.record->top1_prob, b.record->audio_id);
}

// 0-based set for the rank-th most uncertain of `count` samples dealt into `n_ds`
// sets, the first count % n_ds sets holding one extra.
std::size_t dealt_set(std::size_t rank, std::size_t count, std::size_t n_ds) {
    const std::size_t q = count / n_ds;
    const std::size_t rem = count % n_ds;
    const std::size_t big = rem * (q + 1);
    return rank < big ? rank / (q + 1) : rem + (rank - big) / q;
}

}  // namespace

PartitionPlan assign_disjoint_sets(std::span<const EmbeddingRecord> records, std::size_t n_ds,
                                   std::optional<std::size_t> n_smax) {
    if (n_ds == 0) throw Error(ErrorKind::InvalidArgument, "n_ds must be at least 1");
    PartitionPlan plan;
    plan.n_ds = n_ds;

    std::map<ClassId, std::vector<Member>> by_class;
    for (const auto& r : records) by_class[r.top1_class].push_back(Member{&r});

    std::vector<std::vector<Member>> sets(n_ds);
    // rule-(i) samples per set; the only ones eligible for spilling
    std::vector<std::vector<Member>> spillable(n_ds);

    for (auto& [cls, members] : by_class) {
        std::sort(members.begin(), members.end(), more_uncertain);
        const std::size_t count = members.size();
        plan.class_buckets[cls] = count;
        if (count < n_ds) {
            plan.rules[cls] = AssignmentRule::all_to_first;
            sets[0].insert(sets[0].end(), members.begin(), members.end());
            // the most uncertain member keeps the class represented in set 1
            spillable[0].insert(spillable[0].end(), members.begin() + 1, members.end());
        } else {
            plan.rules[cls] = count == n_ds ? AssignmentRule::one_per_set : AssignmentRule::dealt;
            for (std::size_t rank = 0; rank < count; ++rank) sets[dealt_set(rank, count, n_ds)].push_back(members[rank]);
        }
    }

    if (n_smax) {
        for (std::size_t j = 0; j + 1 < n_ds; ++j) {
            if (sets[j].size() <= *n_smax || spillable[j].empty()) continue;
            auto& cand = spillable[j];
            std::sort(cand.begin(), cand.end(), [](const Member& a, const Member& b) { return more_uncertain(b, a); });
            const std::size_t excess = std::min(sets[j].size() - *n_smax, cand.size());
            std::set<const EmbeddingRecord*> moving;
            for (std::size_t k = 0; k < excess; ++k) {
                moving.insert(cand[k].record);
                plan.spills.push_back(SpillRecord{cand[k].id(), cand[k].record->top1_class, j, j + 1});
                sets[j + 1].push_back(cand[k]);
                spillable[j + 1].push_back(cand[k]);
            }
            std::erase_if(sets[j], [&](const Member& m) { return moving.count(m.record) != 0; });
        }
        plan.overflow = std::any_of(sets.begin(), sets.end(), [&](const auto& s) { return s.size() > *n_smax; });
    }

    plan.sets.resize(n_ds);
    for (std::size_t j = 0; j < n_ds; ++j) {
        auto& out = plan.sets[j];
        out.reserve(sets[j].size());
        for (const auto& m : sets[j]) {
            out.push_back(m.id());
            auto& alloc = plan.allocation[m.record->top1_class];
            if (alloc.empty()) alloc.assign(n_ds, 0);
            ++alloc[j];
        }
        std::sort(out.begin(), out.end());
    }
    return plan;
}

std::string format_plan_report(const PartitionPlan& plan) {
    std::ostringstream out;
    out << "disjoint sets: " << plan.n_ds << "  samples: " << plan.total_size() << "  classes: "
        << plan.class_buckets.size() << "  spills: " << plan.spills.size()
        << (plan.overflow ? "  OVERFLOW" : "") << '\n';
    for (std::size_t j = 0; j < plan.sets.size(); ++j) out << "set " << (j + 1) << ": " << plan.sets[j].size() << '\n';
    out << "class  L_c  rule          per-set\n";
    for (const auto& [cls, count] : plan.class_buckets) {
        out << cls << "  " << count << "  " << to_string(plan.rules.at(cls)) << "  ";
        const auto& alloc = plan.allocation.at(cls);
        for (std::size_t j = 0; j < alloc.size(); ++j) out << (j ? "," : "") << alloc[j];
        out << '\n';
    }
    return out.str();
}

}  // namespace alab
