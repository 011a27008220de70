#include "alab/consensus.hpp"
#include "alab/engine.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <thread>

using namespace alab;

namespace {

Engine::Clock fixed_clock() {
    return [] { return fixture::kStart + std::chrono::hours{24}; };
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::InvalidArgument;
}

// Promotes every proposal of the iteration to `cls`, or to its true class.
void label_all(fixture::World& w, const IterationRecord& it, std::optional<ClassId> cls = std::nullopt) {
    std::vector<std::pair<AudioId, ClassId>> p;
    for (const auto& id : it.batch.ids()) p.emplace_back(id, cls.value_or(w.truth.at(id)));
    w.store->promote(p, it.iteration_id);
}

}  // namespace

TEST_SUITE("engine") {
    TEST_CASE("first iteration bootstraps, later ones use the committee") {
        fixture::World w;
        Engine engine(*w.store, {}, fixed_clock());
        const auto first = engine.run_iteration(w.request(8));
        CHECK(first.iteration_id == 1);
        CHECK(first.path == IterationPath::mal);
        CHECK(first.batch.proposals.size() == 8);
        CHECK(first.batch.count(Provenance::mal_medoid) == 8);
        CHECK(first.window_count == 120);
        CHECK(first.labeled_count == 0);
        CHECK(first.n_ds == 1);
        CHECK(first.fold_count == 2);
        CHECK(first.new_plan_sets == std::nullopt);  // reloaded from the store
        CHECK(first.created_at == fixture::kStart + std::chrono::hours{24});
        for (std::size_t i = 0; i < first.assigned_group.size(); ++i) CHECK(first.assigned_group[i] == GroupId(1 + i % 2));

        label_all(w, first);
        const auto second = engine.run_iteration(w.request(10));
        CHECK(second.iteration_id == 2);
        CHECK(second.path == IterationPath::committee);
        CHECK(second.labeled_count == 8);
        CHECK(second.labeled_pct == doctest::Approx(8.0 / 120.0));
        CHECK(second.medoids.size() == 8);
        CHECK(second.medoid_tiers == std::array<std::size_t, 3>{8, 0, 0});
        CHECK(second.classifier_train_accuracy > 0.5);
        CHECK(second.batch.proposals.size() == 10);
        CHECK(second.batch.count(Provenance::mismatch) == std::min<std::size_t>(second.mismatch_count, 10));

        const AudioSet processed(second.processed.begin(), second.processed.end());
        const auto labeled = w.store->labeled_ids();
        for (const auto& id : second.batch.ids()) {
            CHECK(processed.count(id) == 1);
            CHECK(labeled.count(id) == 0);
        }
    }

    TEST_CASE("no audio is proposed twice until the window runs dry") {
        fixture::World w(3, 10);
        Engine engine(*w.store, {}, fixed_clock());
        AudioSet seen;
        std::size_t total = 0;
        for (int i = 0; i < 10; ++i) {
            try {
                const auto it = engine.run_iteration(w.request(4));
                for (const auto& id : it.batch.ids()) seen.insert(id);
                total += it.batch.proposals.size();
                if (i % 2 == 0) label_all(w, it);
            } catch (const Error& e) {
                CHECK(e.kind() == ErrorKind::EmptyWindow);
                break;
            }
        }
        CHECK(seen.size() == total);
        CHECK(total == 30);
        CHECK(kind_of([&] { engine.run_iteration(w.request(4)); }) == ErrorKind::EmptyWindow);
    }

    TEST_CASE("repartitions once the stored sets are used up") {
        fixture::World w(2, 30);
        EngineConfig cfg;
        cfg.partition.n_smax = 25;
        Engine engine(*w.store, cfg, fixed_clock());
        const auto a = engine.run_iteration(w.request(5));
        CHECK(a.n_ds == 3);
        CHECK(a.processed_set == 0);
        const auto plan = w.store->latest_plan(w.node, fixture::kStart, w.end);
        REQUIRE(plan);
        CHECK(plan->sets.size() == 3);
        CHECK(a.processed == plan->sets.front());
        const auto b = engine.run_iteration(w.request(100));  // drains what is left of set 0
        CHECK(b.plan_id == a.plan_id);
        CHECK(b.processed_set == 0);
        const auto c = engine.run_iteration(w.request(5));
        CHECK(c.plan_id == a.plan_id);
        CHECK(c.processed_set == 1);
    }

    TEST_CASE("replay and determinism") {
        fixture::World w;
        Engine engine(*w.store, {}, fixed_clock());
        auto req = w.request(6);
        req.iteration_id = 1;
        const auto a = engine.run_iteration(req);
        const auto rows = w.store->row_count("WavsProposed");
        const auto b = engine.run_iteration(req);
        CHECK(b.batch.ids() == a.batch.ids());
        CHECK(w.store->row_count("WavsProposed") == rows);

        fixture::World other;
        Engine engine2(*other.store, {}, fixed_clock());
        CHECK(engine2.run_iteration(other.request(6)).batch.ids() == a.batch.ids());

        req.iteration_id = 7;
        CHECK(engine.run_iteration(req).iteration_id == 7);
        CHECK(w.store->next_iteration_id() == 8);
    }

    TEST_CASE("a single labeled class falls back to propagation") {
        fixture::World w;
        Engine engine(*w.store, {}, fixed_clock());
        const auto first = engine.run_iteration(w.request(4));
        label_all(w, first, ClassId{2});
        const auto second = engine.run_iteration(w.request(5));
        CHECK(second.path == IterationPath::propagation_only);
        CHECK(second.mismatch_count == 0);
        CHECK(second.batch.count(Provenance::uncertainty_fill) == 5);
    }

    TEST_CASE("random strategy") {
        fixture::World w;
        Engine engine(*w.store, {}, fixed_clock());
        auto req = w.request(7);
        req.strategy = Strategy::random;
        const auto it = engine.run_iteration(req);
        CHECK(it.path == IterationPath::random);
        CHECK(it.batch.count(Provenance::random_baseline) == 7);
        CHECK(strategy_from_string("random") == Strategy::random);
        CHECK(strategy_from_string(to_string(Strategy::mal_mf)) == Strategy::mal_mf);
        CHECK_THROWS_AS(strategy_from_string("greedy"), Error);
    }

    TEST_CASE("window errors") {
        fixture::World w;
        Engine engine(*w.store, {}, fixed_clock());
        auto req = w.request(4);
        std::swap(req.window_start, req.window_end);
        CHECK(kind_of([&] { engine.run_iteration(req); }) == ErrorKind::InvalidWindow);
        req.window_end = req.window_start;
        CHECK(kind_of([&] { engine.run_iteration(req); }) == ErrorKind::InvalidWindow);

        auto before = w.request(4);
        before.window_start = fixture::kStart - std::chrono::hours{5};
        before.window_end = fixture::kStart - std::chrono::hours{4};
        CHECK(kind_of([&] { engine.run_iteration(before); }) == ErrorKind::EmptyWindow);

        auto extra = audio_from_filename(format_chunk_filename(w.node, w.end), w.audios[0].path_id);
        w.store->add_audios(std::vector{extra});
        auto wider = w.request(4);
        wider.window_end = w.end + std::chrono::seconds{10};
        CHECK(kind_of([&] { engine.run_iteration(wider); }) == ErrorKind::MissingSidecar);
        CHECK(w.store->iteration_ids().empty());
        EngineConfig no_budget;
        no_budget.budget = 0;
        CHECK(kind_of([&] { Engine(*w.store, no_budget); }) == ErrorKind::ConfigInvalid);
    }

    TEST_CASE("concurrent iterations on one window conflict") {
        fixture::World w;
        Engine engine(*w.store, {}, fixed_clock());
        std::optional<ErrorKind> inner;
        bool other_window_ok = false;
        bool entered = false;
        engine.set_locked_hook([&] {
            if (std::exchange(entered, true)) return;
            std::thread t([&] {
                try {
                    engine.run_iteration(w.request(3));
                } catch (const Error& e) {
                    inner = e.kind();
                }
                auto half = w.request(3);
                half.window_end = fixture::kStart + std::chrono::seconds{300};
                other_window_ok = engine.run_iteration(half).batch.proposals.size() == 3;
            });
            t.join();
        });
        const auto outer = engine.run_iteration(w.request(3));
        CHECK(inner == ErrorKind::Conflict);
        CHECK(other_window_ok);
        CHECK(w.store->iteration_ids().size() == 2);
        CHECK(outer.batch.proposals.size() == 3);
    }
}
