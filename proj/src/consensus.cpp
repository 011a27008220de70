#include "alab/consensus.hpp"

#include "alab/store.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace alab {

std::string_view to_string(DecidedBy d) {
    switch (d) {
        case DecidedBy::unique_qualifier: return "unique_qualifier";
        case DecidedBy::longest_duration: return "longest_duration";
        case DecidedBy::none: return "none";
    }
    return "?";
}

ConsensusOutcome compute_consensus(const AudioId& audio, std::span<const ChunkAnnotation> annotations,
                                   const LabelerGroup& group) {
    if (group.size() == 0) throw Error(ErrorKind::InvalidArgument, "labeler group is empty");
    std::map<ClassId, std::set<LabelerId>> who;
    std::map<ClassId, double> duration;
    for (const auto& a : annotations) {
        if (!group.contains(a.labeler_id))
            throw Error(ErrorKind::ForeignLabeler, "labeler " + a.labeler_id.str() + " is not in group " +
                                                       std::to_string(group.group_id));
        who[a.class_id].insert(a.labeler_id);
        duration[a.class_id] += a.length();
    }

    ConsensusOutcome out;
    out.audio_id = audio;
    const auto g = group.size();
    const auto need = qualification_threshold(g);
    for (const auto& [cls, members] : who) {
        out.agreement = std::max(out.agreement, double(members.size()) / double(g));
        if (!is_doubt(cls) && members.size() >= need) out.qualifying_classes.push_back(cls);
    }
    if (out.qualifying_classes.empty()) return out;
    if (out.qualifying_classes.size() == 1) {
        out.medoid_class = out.qualifying_classes.front();
        out.decided_by = DecidedBy::unique_qualifier;
        return out;
    }
    // ascending ids, so strict > keeps the lowest id on exact ties
    ClassId best = out.qualifying_classes.front();
    for (auto cls : out.qualifying_classes)
        if (duration[cls] > duration[best]) best = cls;
    out.medoid_class = best;
    out.decided_by = DecidedBy::longest_duration;
    return out;
}

bool is_doubt_iteration(std::size_t iteration_index) {
    if (iteration_index == 0) throw Error(ErrorKind::InvalidArgument, "iteration index is 1-based");
    return iteration_index % 10 == 0;
}

std::vector<DoubtItem> build_doubt_worklist(const LabelerId& labeler, std::span<const DoubtHistoryEntry> history) {
    std::vector<const ChunkAnnotation*> open;
    for (const auto& h : history)
        if (!h.resolved && is_doubt(h.annotation.class_id) && h.annotation.labeler_id == labeler)
            open.push_back(&h.annotation);
    std::sort(open.begin(), open.end(), [](auto* a, auto* b) { return a->chunk_id < b->chunk_id; });
    std::vector<DoubtItem> out;
    for (auto* a : open) out.push_back(DoubtItem{a->audio_id, a->chunk_id});
    return out;
}

namespace {

LabelerGroup group_by_id(const Store& store, GroupId id) {
    for (auto& g : store.groups())
        if (g.group_id == id) return g;
    throw Error(ErrorKind::UnknownLabeler, "no labelers in group " + std::to_string(id));
}

ConsensusOutcome consensus_for(const Store& store, const AudioId& audio, const LabelerGroup& group) {
    std::vector<ChunkAnnotation> live;
    for (const auto& c : store.chunks_for_audio(audio))
        if (!c.resolved && group.contains(c.annotation.labeler_id)) live.push_back(c.annotation);
    return compute_consensus(audio, live, group);
}

}  // namespace

ConsensusOutcome audio_consensus(const Store& store, const AudioId& audio) {
    const auto proposal = store.proposal_for(audio);
    if (!proposal) throw Error(ErrorKind::UnknownAudio, "audio was never proposed: " + audio.str());
    return consensus_for(store, audio, group_by_id(store, proposal->group_id));
}

std::vector<ConsensusOutcome> iteration_consensus(const Store& store, IterationId iteration) {
    std::map<GroupId, LabelerGroup> groups;
    for (auto& g : store.groups()) groups.emplace(g.group_id, g);
    std::vector<ConsensusOutcome> out;
    for (const auto& p : store.proposals(iteration)) {
        auto it = groups.find(p.group_id);
        if (it == groups.end()) throw Error(ErrorKind::UnknownLabeler, "no labelers in group " + std::to_string(p.group_id));
        out.push_back(consensus_for(store, p.audio_id, it->second));
    }
    return out;
}

std::size_t promote_medoids(Store& store, std::span<const ConsensusOutcome> outcomes, IterationId iteration) {
    std::vector<std::pair<AudioId, ClassId>> promotions;
    for (const auto& o : outcomes) {
        const auto p = store.proposal_for(o.audio_id);
        if (!p || p->iteration_id != iteration)
            throw Error(ErrorKind::InvalidArgument, o.audio_id.str() + " is not a proposal of iteration " +
                                                        std::to_string(iteration));
        if (o.medoid_class) promotions.emplace_back(o.audio_id, *o.medoid_class);
    }
    store.promote(promotions, iteration);
    return promotions.size();
}

namespace {

SuggestionResult as_result(const Suggestion& s) {
    return SuggestionResult{s.id, s.approved, s.class_id, s.credited};
}

}  // namespace

SuggestionResult suggest_ontology_class(Store& store, const LabelerId& labeler, const std::string& name,
                                        bool auto_approve) {
    auto s = store.add_suggestion(labeler, name);
    if (auto_approve && !s.approved) s = store.approve_suggestion(s.id, store.latest_iteration_id() + 1);
    return as_result(s);
}

SuggestionResult approve_ontology_suggestion(Store& store, std::int64_t suggestion_id) {
    return as_result(store.approve_suggestion(suggestion_id, store.latest_iteration_id() + 1));
}

ConsensusOutcome resolve_doubt(Store& store, ChunkId doubt_chunk, std::span<const ChunkAnnotation> replacements) {
    const auto original = store.chunk(doubt_chunk);
    if (!original) throw Error(ErrorKind::InvalidArgument, "unknown chunk " + std::to_string(doubt_chunk));
    store.resolve_doubt(doubt_chunk, replacements, original->iteration_id);
    const auto& audio = original->annotation.audio_id;
    auto outcome = audio_consensus(store, audio);
    if (outcome.medoid_class) {
        const std::pair<AudioId, ClassId> one{audio, *outcome.medoid_class};
        store.promote(std::span(&one, 1), store.proposal_for(audio)->iteration_id);
    }
    return outcome;
}

}  // namespace alab
