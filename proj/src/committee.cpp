#include "alab/committee.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <tuple>

namespace alab {

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::mal_medoid: return "mal_medoid";
        case Provenance::mismatch: return "mismatch";
        case Provenance::uncertainty_fill: return "uncertainty_fill";
        case Provenance::random_baseline: return "random_baseline";
    }
    return "?";
}

Provenance provenance_from_string(std::string_view text) {
    for (auto p : {Provenance::mal_medoid, Provenance::mismatch, Provenance::uncertainty_fill,
                   Provenance::random_baseline})
        if (to_string(p) == text) return p;
    throw Error(ErrorKind::InvalidArgument, "unknown provenance " + std::string(text));
}

std::vector<AudioId> ProposalBatch::ids() const {
    std::vector<AudioId> out;
    out.reserve(proposals.size());
    for (const auto& p : proposals) out.push_back(p.audio_id);
    return out;
}

std::size_t ProposalBatch::count(Provenance p) const {
    return std::size_t(std::count_if(proposals.begin(), proposals.end(),
                                     [&](const Proposal& x) { return x.provenance == p; }));
}

EmbeddingMatrix stack_embeddings(std::span<const EmbeddingRecord> records) {
    const Eigen::Index d = records.empty() ? 0 : records.front().vector.size();
    EmbeddingMatrix m(Eigen::Index(records.size()), d);
    for (std::size_t i = 0; i < records.size(); ++i) m.row(Eigen::Index(i)) = records[i].vector.transpose();
    return m;
}

EmbeddingMatrix stack_embeddings(std::span<const LabeledEmbedding> records) {
    const Eigen::Index d = records.empty() ? 0 : records.front().vector.size();
    EmbeddingMatrix m(Eigen::Index(records.size()), d);
    for (std::size_t i = 0; i < records.size(); ++i) m.row(Eigen::Index(i)) = records[i].vector.transpose();
    return m;
}

ProposalBatch mal_bootstrap(std::span<const EmbeddingRecord> records, std::size_t k, const KMedoidsOptions& options) {
    if (k == 0) throw Error(ErrorKind::InvalidArgument, "budget must be at least 1");
    if (k > records.size())
        throw Error(ErrorKind::BudgetExceedsPool, "budget " + std::to_string(k) + " exceeds pool of " +
                                                      std::to_string(records.size()));
    // canonical order so the clustering does not depend on input order
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return records[a].audio_id < records[b].audio_id; });
    const Eigen::Index d = records.front().vector.size();
    RowMatrix<double> points(Eigen::Index(records.size()), d);
    for (std::size_t i = 0; i < order.size(); ++i)
        points.row(Eigen::Index(i)) = records[order[i]].vector.cast<double>().transpose();

    const auto result = k_medoids(points, Eigen::Index(k), options);
    ProposalBatch batch;
    batch.budget = k;
    for (auto m : result.medoids)
        batch.proposals.push_back(Proposal{records[order[std::size_t(m)]].audio_id, Provenance::mal_medoid});
    return batch;
}

Propagation propagate_labels(const MedoidPool& medoids, std::span<const EmbeddingRecord> records) {
    if (medoids.empty()) throw Error(ErrorKind::EmptyMedoidPool, "label propagation needs at least one medoid");
    std::vector<const LabeledEmbedding*> sorted;
    for (const auto& m : medoids.entries) sorted.push_back(&m);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->audio_id < b->audio_id; });
    EmbeddingMatrix refs(Eigen::Index(sorted.size()), sorted.front()->vector.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) refs.row(Eigen::Index(i)) = sorted[i]->vector.transpose();

    const auto near = nearest_rows(stack_embeddings(records), refs);
    Propagation out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        out.labels.emplace(records[i].audio_id, sorted[std::size_t(near.index[i])]->class_id);
        out.distance.emplace(records[i].audio_id, near.distance[i]);
    }
    return out;
}

std::vector<CommitteeClassifier::Prediction> CommitteeClassifier::predict(const EmbeddingMatrix& x) const {
    const auto proba = model_.predict_proba(x);
    std::vector<Prediction> out(std::size_t(proba.rows()));
    for (Eigen::Index i = 0; i < proba.rows(); ++i) {
        Eigen::Index arg = 0;
        const double p = proba.row(i).maxCoeff(&arg);
        out[std::size_t(i)] = Prediction{ClassId(model_.classes()[std::size_t(arg)]), p};
    }
    return out;
}

std::vector<ClassId> CommitteeClassifier::classes() const {
    std::vector<ClassId> out;
    for (auto c : model_.classes()) out.push_back(ClassId(c));
    return out;
}

CommitteeClassifier train_committee_classifier(std::span<const LabeledEmbedding> labeled,
                                               const LogisticOptions& options) {
    std::set<ClassId> distinct;
    for (const auto& l : labeled) distinct.insert(l.class_id);
    if (distinct.size() < 2)
        throw Error(ErrorKind::SingleClassDegenerate, "classifier needs at least two labeled classes, have " +
                                                          std::to_string(distinct.size()));
    std::vector<ClassId> y;
    y.reserve(labeled.size());
    for (const auto& l : labeled) y.push_back(l.class_id);
    return CommitteeClassifier(MultinomialLogistic<double>::fit(stack_embeddings(labeled), y, options));
}

ProposalBatch mismatch_first_select(std::span<const CommitteePrediction> predictions,
                                    const EmbeddingMatrix& embeddings, const EmbeddingMatrix& anchors,
                                    const AudioSet& already_selected, std::size_t budget) {
    if (budget == 0) throw Error(ErrorKind::InvalidArgument, "budget must be at least 1");
    if (embeddings.rows() != Eigen::Index(predictions.size()))
        throw Error(ErrorKind::DimensionMismatch, "embedding rows must match predictions");

    ProposalBatch batch;
    batch.budget = budget;
    std::vector<std::size_t> mismatches;
    std::vector<std::size_t> agreeing;
    std::set<AudioId> seen;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        const auto& p = predictions[i];
        if (already_selected.count(p.audio_id) || !seen.insert(p.audio_id).second) continue;
        (p.mismatch() ? mismatches : agreeing).push_back(i);
    }

    // farthest-point-first over the mismatches
    std::vector<double> reach(mismatches.size(), std::numeric_limits<double>::infinity());
    if (anchors.rows() > 0 && !mismatches.empty()) {
        EmbeddingMatrix cand(Eigen::Index(mismatches.size()), embeddings.cols());
        for (std::size_t i = 0; i < mismatches.size(); ++i) cand.row(Eigen::Index(i)) = embeddings.row(Eigen::Index(mismatches[i]));
        const auto near = nearest_rows(cand, anchors);
        reach = near.distance;
    }
    std::vector<bool> taken(mismatches.size(), false);
    while (batch.proposals.size() < budget) {
        std::size_t best = mismatches.size();
        for (std::size_t i = 0; i < mismatches.size(); ++i) {
            if (taken[i]) continue;
            if (best == mismatches.size() || reach[i] > reach[best] ||
                (reach[i] == reach[best] &&
                 predictions[mismatches[i]].audio_id < predictions[mismatches[best]].audio_id))
                best = i;
        }
        if (best == mismatches.size()) break;
        taken[best] = true;
        const auto row = embeddings.row(Eigen::Index(mismatches[best])).cast<double>().eval();
        batch.proposals.push_back(Proposal{predictions[mismatches[best]].audio_id, Provenance::mismatch});
        for (std::size_t i = 0; i < mismatches.size(); ++i) {
            if (taken[i]) continue;
            const double dist = (embeddings.row(Eigen::Index(mismatches[i])).cast<double>() - row).norm();
            reach[i] = std::min(reach[i], dist);
        }
    }

    if (batch.proposals.size() < budget) {
        std::sort(agreeing.begin(), agreeing.end(), [&](std::size_t a, std::size_t b) {
            return std::tie(predictions[a].classifier_confidence, predictions[a].audio_id) <
                   std::tie(predictions[b].classifier_confidence, predictions[b].audio_id);
        });
        for (std::size_t i = 0; i < agreeing.size() && batch.proposals.size() < budget; ++i)
            batch.proposals.push_back(Proposal{predictions[agreeing[i]].audio_id, Provenance::uncertainty_fill});
    }
    return batch;
}

MedoidPool select_medoids(std::span<const LabeledEmbedding> window_labeled,
                          std::span<const LabeledEmbedding> same_node_other_windows,
                          std::span<const LabeledEmbedding> other_nodes, std::size_t n_mmax) {
    if (n_mmax == 0) throw Error(ErrorKind::InvalidArgument, "medoid capacity must be at least 1");
    MedoidPool pool;
    pool.capacity = n_mmax;
    std::set<AudioId> seen;
    const std::array<std::span<const LabeledEmbedding>, 3> tiers{window_labeled, same_node_other_windows, other_nodes};
    for (std::size_t t = 0; t < tiers.size(); ++t) {
        std::vector<const LabeledEmbedding*> tier;
        for (const auto& e : tiers[t]) {
            if (!seen.insert(e.audio_id).second)
                throw Error(ErrorKind::InvalidArgument, "medoid tiers overlap at " + e.audio_id.str());
            if (!is_doubt(e.class_id)) tier.push_back(&e);
        }
        std::sort(tier.begin(), tier.end(), [](auto* a, auto* b) {
            if (a->consensus_seq != b->consensus_seq) return a->consensus_seq > b->consensus_seq;
            return a->audio_id < b->audio_id;
        });
        for (auto* e : tier) {
            if (pool.entries.size() >= n_mmax) break;
            pool.entries.push_back(*e);
            ++pool.tier_counts[t];
        }
    }
    return pool;
}

}  // namespace alab
