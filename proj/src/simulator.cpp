#include "alab/simulator.hpp"

#include "alab/consensus.hpp"
#include "alab/ingestion.hpp"
#include "alab/store.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace alab {

void check_sim_config(const SimConfig& c) {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::ConfigInvalid, what); };
    if (c.classes < 1) bad("classes must be at least 1");
    if (c.per_class < 1) bad("per_class must be at least 1");
    if (c.dim < 1) bad("dim must be at least 1");
    if (!(c.spread >= 0) || !std::isfinite(c.spread)) bad("spread must be finite and non-negative");
    if (!(c.labeler_noise >= 0 && c.labeler_noise < 1)) bad("labeler_noise must lie in [0, 1)");
    if (c.group_sizes.empty()) bad("at least one labeler group is required");
    for (auto g : c.group_sizes)
        if (g == 0) bad("labeler groups must be non-empty");
    if (c.budget == 0) bad("budget must be at least 1");
    if (c.n_smax == 0 || c.n_mmax == 0) bad("n_smax and n_mmax must be at least 1");
}

ChunkAnnotation simulate_labeler(const AudioId& audio, const LabelerId& labeler, ClassId true_class,
                                 const std::vector<ClassId>& class_ids, double noise, double duration,
                                 std::mt19937_64& rng) {
    ClassId chosen = true_class;
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (class_ids.size() > 1 && coin(rng) < noise) {
        std::vector<ClassId> wrong;
        for (auto c : class_ids)
            if (c != true_class) wrong.push_back(c);
        std::uniform_int_distribution<std::size_t> pick(0, wrong.size() - 1);
        chosen = wrong[pick(rng)];
    }
    return full_span_annotation(audio, labeler, chosen, duration);
}

SimReport run_simulation(const SimConfig& config) {
    check_sim_config(config);
    const NodeId node{"syn00"};
    const auto pool = generate_synthetic_pool(config.classes, config.per_class, config.dim, config.spread, config.seed, node);

    Store store(config.storage);
    store.migrate();
    std::vector<AudioRecord> audios;
    std::map<AudioId, ClassId> truth;
    for (std::size_t i = 0; i < pool.records.size(); ++i) {
        audios.push_back(audio_from_filename(filename_from_audio_id(pool.records[i].audio_id), store.ensure_path("/synthetic")));
        truth[pool.records[i].audio_id] = pool.true_labels[i] + 1;
    }
    store.add_audios(audios);
    store.put_embeddings(pool.records);
    std::vector<ClassId> class_ids;
    for (int c = 0; c < config.classes; ++c) class_ids.push_back(store.add_class("class_" + std::to_string(c)));
    std::map<GroupId, std::vector<LabelerId>> members;
    for (std::size_t g = 0; g < config.group_sizes.size(); ++g)
        for (std::size_t l = 0; l < config.group_sizes[g]; ++l) {
            LabelerId id{"g" + std::to_string(g + 1) + "l" + std::to_string(l + 1)};
            store.add_labeler(id, GroupId(g + 1));
            members[GroupId(g + 1)].push_back(id);
        }

    EngineConfig ec;
    ec.budget = config.budget;
    ec.seed = config.seed;
    ec.partition.n_smax = config.n_smax;
    ec.n_mmax = config.n_mmax;
    const Timestamp start = audios.front().recorded_at;
    Timestamp end = start;
    for (const auto& a : audios) end = std::max(end, a.recorded_at);
    end += std::chrono::seconds{1};
    Engine engine(store, ec, [start] { return start; });
    std::mt19937_64 labeler_rng(config.seed ^ 0x5bd1e995ULL);

    SimReport report;
    report.seed = config.seed;
    report.strategy = config.strategy;
    AudioSet distinct;
    for (std::size_t it = 0; it < config.iterations; ++it) {
        IterationRequest req{node, start, end, std::nullopt, std::nullopt, config.strategy};
        IterationRecord rec;
        try {
            rec = engine.run_iteration(req);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::EmptyWindow) break;  // pool exhausted
            throw;
        }
        std::vector<ChunkAnnotation> batch;
        for (std::size_t i = 0; i < rec.batch.proposals.size(); ++i) {
            const auto& audio = rec.batch.proposals[i].audio_id;
            for (const auto& l : members.at(rec.assigned_group[i]))
                batch.push_back(simulate_labeler(audio, l, truth.at(audio), class_ids, config.labeler_noise,
                                                 kDefaultChunkSeconds, labeler_rng));
        }
        store.record_annotations(batch, rec.iteration_id);
        const auto outcomes = iteration_consensus(store, rec.iteration_id);
        const auto promoted = promote_medoids(store, outcomes, rec.iteration_id);

        SimIteration row;
        row.iteration_id = rec.iteration_id;
        row.path = std::string(to_string(rec.path));
        row.proposals = rec.batch.proposals.size();
        row.consensus_yield = row.proposals ? double(promoted) / double(row.proposals) : 0.0;
        for (const auto& p : rec.batch.proposals) distinct.insert(p.audio_id);
        report.total_proposals += row.proposals;

        const auto registry = store.medoids();
        row.labeled = registry.size();
        std::vector<EmbeddingRecord> unlabeled;
        AudioSet labeled;
        for (const auto& m : registry) labeled.insert(m.audio_id);
        for (const auto& r : pool.records)
            if (!labeled.count(r.audio_id)) unlabeled.push_back(r);
        if (unlabeled.empty()) {
            row.accuracy = 1.0;
        } else if (!registry.empty()) {
            MedoidPool mp;
            std::vector<AudioId> ids;
            for (const auto& m : registry) ids.push_back(m.audio_id);
            const auto emb = store.embeddings(ids);
            for (std::size_t i = 0; i < registry.size(); ++i)
                mp.entries.push_back(LabeledEmbedding{registry[i].audio_id, registry[i].class_id, emb[i].vector, registry[i].seq});
            const auto prop = propagate_labels(mp, unlabeled);
            std::size_t hits = 0;
            for (const auto& r : unlabeled) hits += prop.labels.at(r.audio_id) == truth.at(r.audio_id);
            row.accuracy = double(hits) / double(unlabeled.size());
        }
        report.iterations.push_back(row);
    }
    report.distinct_proposals = distinct.size();
    return report;
}

namespace {

StrategySeries summarize(Strategy s, std::vector<std::vector<double>> per_seed) {
    StrategySeries out;
    out.strategy = s;
    std::size_t len = 0;
    for (const auto& v : per_seed) len = std::max(len, v.size());
    for (std::size_t i = 0; i < len; ++i) {
        double sum = 0, sq = 0;
        std::size_t n = 0;
        for (const auto& v : per_seed)
            if (i < v.size()) {
                sum += v[i];
                sq += v[i] * v[i];
                ++n;
            }
        const double mean = sum / double(n);
        out.mean.push_back(mean);
        out.stddev.push_back(n > 1 ? std::sqrt(std::max(0.0, (sq - double(n) * mean * mean) / double(n - 1))) : 0.0);
    }
    out.per_seed = std::move(per_seed);
    return out;
}

}  // namespace

StrategyComparison compare_strategies(const SimConfig& config, const std::vector<std::uint64_t>& seeds, Strategy first,
                                      Strategy second) {
    if (seeds.size() < 2) throw Error(ErrorKind::ConfigInvalid, "strategy comparison needs at least two seeds");
    std::vector<std::vector<double>> a, b;
    for (auto seed : seeds) {
        SimConfig c = config;
        c.seed = seed;
        c.storage = ":memory:";
        for (auto [strategy, out] : {std::pair{first, &a}, std::pair{second, &b}}) {
            c.strategy = strategy;
            std::vector<double> series;
            for (const auto& row : run_simulation(c).iterations) series.push_back(row.accuracy);
            out->push_back(std::move(series));
        }
    }
    return StrategyComparison{seeds, summarize(first, std::move(a)), summarize(second, std::move(b))};
}

std::string format_sim_report(const SimReport& r) {
    std::ostringstream out;
    out << "simulation seed " << r.seed << " strategy " << to_string(r.strategy) << "\n";
    out << std::setw(5) << "iter" << std::setw(18) << "path" << std::setw(10) << "proposed" << std::setw(9) << "labeled"
        << std::setw(10) << "accuracy" << std::setw(8) << "yield" << "\n";
    out << std::fixed;
    for (const auto& i : r.iterations)
        out << std::setw(5) << i.iteration_id << std::setw(18) << i.path << std::setw(10) << i.proposals << std::setw(9)
            << i.labeled << std::setw(10) << std::setprecision(4) << i.accuracy << std::setw(8) << std::setprecision(3)
            << i.consensus_yield << "\n";
    out << "proposals " << r.total_proposals << " distinct " << r.distinct_proposals << "\n";
    return out.str();
}

nlohmann::json to_json(const SimReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& i : r.iterations)
        rows.push_back({{"iteration_id", i.iteration_id},
                        {"path", i.path},
                        {"proposals", i.proposals},
                        {"labeled", i.labeled},
                        {"accuracy", i.accuracy},
                        {"consensus_yield", i.consensus_yield}});
    return {{"seed", r.seed},
            {"strategy", to_string(r.strategy)},
            {"total_proposals", r.total_proposals},
            {"distinct_proposals", r.distinct_proposals},
            {"iterations", rows}};
}

std::string format_comparison(const StrategyComparison& c) {
    std::ostringstream out;
    out << "paired comparison over " << c.seeds.size() << " seeds\n";
    out << std::setw(5) << "iter" << std::setw(14) << to_string(c.first.strategy) << std::setw(10) << "sd"
        << std::setw(14) << to_string(c.second.strategy) << std::setw(10) << "sd" << std::setw(10) << "diff" << "\n";
    out << std::fixed << std::setprecision(4);
    const auto n = std::min(c.first.mean.size(), c.second.mean.size());
    for (std::size_t i = 0; i < n; ++i)
        out << std::setw(5) << i + 1 << std::setw(14) << c.first.mean[i] << std::setw(10) << c.first.stddev[i]
            << std::setw(14) << c.second.mean[i] << std::setw(10) << c.second.stddev[i] << std::setw(10)
            << c.first.mean[i] - c.second.mean[i] << "\n";
    return out.str();
}

nlohmann::json to_json(const StrategyComparison& c) {
    auto series = [](const StrategySeries& s) {
        return nlohmann::json{{"strategy", to_string(s.strategy)}, {"mean", s.mean}, {"stddev", s.stddev}, {"per_seed", s.per_seed}};
    };
    return {{"seeds", c.seeds}, {"series", {series(c.first), series(c.second)}}};
}

}  // namespace alab
