#include "alab/serialize.hpp"

namespace alab {

using nlohmann::json;

json to_json(const IterationRecord& r, bool with_proposals) {
    json provenance = json::object();
    for (auto p : {Provenance::mal_medoid, Provenance::mismatch, Provenance::uncertainty_fill, Provenance::random_baseline})
        if (auto n = r.batch.count(p)) provenance[std::string(to_string(p))] = n;
    json j{
        {"iteration_id", r.iteration_id},
        {"node_id", r.node_id.str()},
        {"window_start", format_iso8601(r.window_start)},
        {"window_end", format_iso8601(r.window_end)},
        {"created_at", format_iso8601(r.created_at)},
        {"window_count", r.window_count},
        {"labeled_count", r.labeled_count},
        {"unlabeled_count", r.unlabeled_count},
        {"labeled_pct", r.labeled_pct},
        {"n_ds", r.n_ds},
        {"processed_set", r.processed_set},
        {"processed_count", r.processed.size()},
        {"plan_id", r.plan_id},
        {"fold_count", r.fold_count},
        {"path", to_string(r.path)},
        {"budget", r.batch.budget},
        {"proposal_count", r.batch.proposals.size()},
        {"provenance", provenance},
        {"medoid_count", r.medoids.size()},
        {"medoid_tiers", r.medoid_tiers},
        {"mismatch_count", r.mismatch_count},
        {"classifier_train_accuracy", r.classifier_train_accuracy},
        {"classifier_iterations", r.classifier_iterations},
    };
    if (with_proposals) {
        json list = json::array();
        for (std::size_t i = 0; i < r.batch.proposals.size(); ++i)
            list.push_back({{"rank", i},
                            {"audio_id", r.batch.proposals[i].audio_id.str()},
                            {"provenance", to_string(r.batch.proposals[i].provenance)},
                            {"group_id", i < r.assigned_group.size() ? r.assigned_group[i] : 0}});
        j["proposals"] = std::move(list);
    }
    return j;
}

json to_json(const ConsensusOutcome& o) {
    json j{{"audio_id", o.audio_id.str()},
           {"agreement", o.agreement},
           {"qualifying_classes", o.qualifying_classes},
           {"decided_by", to_string(o.decided_by)}};
    j["medoid_class"] = o.medoid_class ? json(*o.medoid_class) : json(nullptr);
    return j;
}

json to_json(const std::vector<TagCount>& histogram) {
    json list = json::array();
    for (const auto& t : histogram) list.push_back({{"class_id", t.class_id}, {"name", t.name}, {"count", t.count}});
    return list;
}

json to_json(const ProposalRow& p) {
    json j{{"audio_id", p.audio_id.str()},
           {"iteration_id", p.iteration_id},
           {"rank", p.rank},
           {"provenance", to_string(p.provenance)},
           {"group_id", p.group_id},
           {"labeler_count", p.labeler_count},
           {"agreement", p.agreement_pct / 100.0},
           {"filename", p.filename},
           {"node_id", p.node_id.str()}};
    j["label"] = p.label ? json(*p.label) : json(nullptr);
    return j;
}

json to_json(const OntologyClass& c) {
    return json{{"class_id", c.class_id},
                {"name", c.name},
                {"origin", c.origin == ClassOrigin::seed ? "seed" : "suggested"},
                {"active", c.active},
                {"available_from", c.available_from}};
}

}  // namespace alab
