#include "alab/engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <unordered_map>

namespace alab {

std::string_view to_string(Strategy s) { return s == Strategy::random ? "random" : "mal_mf"; }

Strategy strategy_from_string(std::string_view text) {
    if (text == "mal_mf") return Strategy::mal_mf;
    if (text == "random") return Strategy::random;
    throw Error(ErrorKind::InvalidArgument, "unknown strategy " + std::string(text));
}

Engine::Engine(Store& store, EngineConfig config, Clock clock)
    : store_(store), config_(std::move(config)), clock_(std::move(clock)) {
    if (config_.partition.n_smax == 0) throw Error(ErrorKind::ConfigInvalid, "n_smax must be at least 1");
    if (config_.n_mmax == 0) throw Error(ErrorKind::ConfigInvalid, "n_mmax must be at least 1");
    if (config_.budget == 0) throw Error(ErrorKind::ConfigInvalid, "budget must be at least 1");
    if (!clock_) clock_ = [] { return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now()); };
}

namespace {

using EmbeddingIndex = std::unordered_map<AudioId, const EmbeddingRecord*>;

std::vector<EmbeddingRecord> gather(const EmbeddingIndex& index, const std::vector<AudioId>& ids) {
    std::vector<EmbeddingRecord> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(*index.at(id));
    return out;
}

// Confidence for the propagation-only fallback: decays with distance to the
// nearest medoid, scaled by the median distance of the pool.
double distance_confidence(double d, double median) {
    if (median <= 0) return d <= 0 ? 1.0 : 0.0;
    return std::exp(-d / median);
}

}  // namespace

IterationRecord Engine::run_iteration(const IterationRequest& request) {
    if (request.iteration_id) {
        if (*request.iteration_id <= 0) throw Error(ErrorKind::InvalidArgument, "iteration id must be positive");
        if (auto stored = store_.load_iteration(*request.iteration_id)) return *stored;
    }
    const std::size_t budget = request.budget.value_or(config_.budget);
    if (budget == 0) throw Error(ErrorKind::InvalidArgument, "budget must be at least 1");
    if (!(request.window_start < request.window_end))
        throw Error(ErrorKind::InvalidWindow, "window start must precede window end");

    const auto lease = store_.try_acquire_window(request.node_id, request.window_start, request.window_end);
    if (!lease.held()) throw Error(ErrorKind::Conflict, "an iteration is already running on this window");
    if (locked_hook_) locked_hook_();

    // steps 1-2: window and labeled split
    const Catalog catalog = store_.load_catalog();
    const AudioSet s_w = select_window(catalog, request.node_id, request.window_start, request.window_end);
    if (s_w.empty()) throw Error(ErrorKind::EmptyWindow, "no audio in the selected window");
    const AudioSet labeled = store_.labeled_ids();
    const LabeledSplit split = split_labeled(s_w, labeled);

    const std::vector<AudioId> window_ids(s_w.begin(), s_w.end());
    const auto window_embeddings = store_.embeddings(window_ids);
    EmbeddingIndex index;
    for (const auto& r : window_embeddings) index.emplace(r.audio_id, &r);

    const AudioSet proposed = store_.proposed_audios();
    AudioSet eligible;
    for (const auto& id : split.s_wnh)
        if (!proposed.count(id)) eligible.insert(id);

    IterationRecord rec;
    rec.node_id = request.node_id;
    rec.window_start = request.window_start;
    rec.window_end = request.window_end;
    rec.window_count = s_w.size();
    rec.labeled_count = split.s_wm.size();
    rec.unlabeled_count = split.s_wnh.size();
    rec.labeled_pct = double(split.s_wm.size()) / double(s_w.size());

    // step 3: highest-priority set with eligible members, repartitioning when exhausted
    bool have_set = false;
    if (auto plan = store_.latest_plan(request.node_id, request.window_start, request.window_end)) {
        for (std::size_t j = 0; j < plan->sets.size() && !have_set; ++j) {
            for (const auto& id : plan->sets[j])
                if (eligible.count(id)) rec.processed.push_back(id);
            if (!rec.processed.empty()) {
                have_set = true;
                rec.n_ds = plan->sets.size();
                rec.processed_set = j;
                rec.plan_id = plan->plan_id;
            }
        }
    }
    if (!have_set) {
        const std::size_t n_ds = num_disjoint_sets(eligible.size(), config_.partition);
        if (n_ds == 0) throw Error(ErrorKind::EmptyWindow, "every unlabeled audio in the window was already proposed");
        const auto pool = gather(index, std::vector<AudioId>(eligible.begin(), eligible.end()));
        auto plan = assign_disjoint_sets(pool, n_ds, config_.partition.n_smax);
        rec.n_ds = plan.n_ds;
        rec.processed_set = 0;
        rec.processed = plan.sets.front();
        rec.new_plan_sets = std::move(plan.sets);
    }
    const auto processed = gather(index, rec.processed);
    const std::size_t k = std::min(budget, processed.size());

    // step 4: medoid pool from the registry, tiered
    const auto ontology = store_.load_ontology();
    const auto registry = store_.medoids();
    std::unordered_map<AudioId, const AudioRecord*> audio_of;
    for (const auto& a : catalog.audios) audio_of.emplace(a.audio_id, &a);
    std::vector<AudioId> registry_ids;
    for (const auto& m : registry) registry_ids.push_back(m.audio_id);
    const auto registry_embeddings = store_.embeddings(registry_ids);
    std::vector<LabeledEmbedding> tiers[3];
    std::vector<LabeledEmbedding> all_labeled;
    for (std::size_t i = 0; i < registry.size(); ++i) {
        const auto& m = registry[i];
        const auto* cls = ontology.find(m.class_id);
        if (is_doubt(m.class_id) || !cls || !cls->active) continue;
        LabeledEmbedding e{m.audio_id, m.class_id, registry_embeddings[i].vector, m.seq};
        all_labeled.push_back(e);
        const auto* a = audio_of.at(m.audio_id);
        std::size_t tier = 2;
        if (a->node_id == request.node_id) tier = split.s_wm.count(m.audio_id) ? 0 : 1;
        tiers[tier].push_back(std::move(e));
    }
    const MedoidPool pool = select_medoids(tiers[0], tiers[1], tiers[2], config_.n_mmax);
    rec.medoid_tiers = pool.tier_counts;
    for (const auto& e : pool.entries) rec.medoids.push_back(MedoidUse{e.audio_id, e.class_id});

    // step 5: proposal
    if (request.strategy == Strategy::random) {
        rec.path = IterationPath::random;
        std::vector<AudioId> ids = rec.processed;
        std::mt19937_64 rng(config_.seed * 0x9e3779b97f4a7c15ULL + std::uint64_t(store_.next_iteration_id()));
        std::shuffle(ids.begin(), ids.end(), rng);
        rec.batch.budget = budget;
        for (std::size_t i = 0; i < k; ++i) rec.batch.proposals.push_back(Proposal{ids[i], Provenance::random_baseline});
    } else if (pool.empty()) {
        rec.path = IterationPath::mal;
        KMedoidsOptions opts = config_.kmedoids;
        opts.seed = config_.seed;
        rec.batch = mal_bootstrap(processed, k, opts);
        rec.batch.budget = budget;
    } else {
        const auto propagation = propagate_labels(pool, processed);
        const EmbeddingMatrix x = stack_embeddings(processed);
        std::vector<CommitteePrediction> predictions(processed.size());
        for (std::size_t i = 0; i < processed.size(); ++i) {
            predictions[i].audio_id = processed[i].audio_id;
            predictions[i].propagated_class = propagation.labels.at(processed[i].audio_id);
        }
        try {
            const auto classifier = train_committee_classifier(all_labeled, config_.logistic);
            const auto scored = classifier.predict(x);
            for (std::size_t i = 0; i < scored.size(); ++i) {
                predictions[i].classifier_class = scored[i].class_id;
                predictions[i].classifier_confidence = scored[i].confidence;
            }
            const auto train = classifier.predict(stack_embeddings(all_labeled));
            std::size_t hits = 0;
            for (std::size_t i = 0; i < train.size(); ++i) hits += train[i].class_id == all_labeled[i].class_id;
            rec.classifier_train_accuracy = double(hits) / double(train.size());
            rec.classifier_iterations = classifier.diagnostics().iterations;
            rec.path = IterationPath::committee;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::SingleClassDegenerate) throw;
            rec.path = IterationPath::propagation_only;
            std::vector<double> d;
            for (const auto& [_, v] : propagation.distance) d.push_back(v);
            std::nth_element(d.begin(), d.begin() + std::ptrdiff_t(d.size() / 2), d.end());
            const double median = d[d.size() / 2];
            for (auto& p : predictions) {
                p.classifier_class = p.propagated_class;
                p.classifier_confidence = distance_confidence(propagation.distance.at(p.audio_id), median);
            }
        }
        for (const auto& p : predictions) rec.mismatch_count += p.mismatch();

        // anchors: the pool plus everything already proposed from this window
        std::vector<Eigen::VectorXf> anchor_rows;
        for (const auto& e : pool.entries) anchor_rows.push_back(e.vector);
        for (const auto& id : s_w)
            if (proposed.count(id)) anchor_rows.push_back(index.at(id)->vector);
        EmbeddingMatrix anchors(Eigen::Index(anchor_rows.size()), x.cols());
        for (std::size_t i = 0; i < anchor_rows.size(); ++i) anchors.row(Eigen::Index(i)) = anchor_rows[i].transpose();
        rec.batch = mismatch_first_select(predictions, x, anchors, proposed, k);
        rec.batch.budget = budget;
    }

    // step 6: alternate proposals between the labeler groups
    auto groups = store_.groups();
    rec.fold_count = groups.size();
    for (std::size_t i = 0; i < rec.batch.proposals.size(); ++i)
        rec.assigned_group.push_back(groups.empty() ? 0 : groups[i % groups.size()].group_id);

    std::lock_guard commit(commit_mutex_);
    rec.iteration_id = request.iteration_id.value_or(store_.next_iteration_id());
    rec.batch.iteration_id = rec.iteration_id;
    rec.created_at = clock_();
    if (store_.has_iteration(rec.iteration_id)) return *store_.load_iteration(rec.iteration_id);
    store_.commit_iteration(rec);
    return *store_.load_iteration(rec.iteration_id);
}

}  // namespace alab
