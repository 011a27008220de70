#include "alab/consensus.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace alab;

namespace {

LabelerGroup group_of(std::initializer_list<const char*> ids, GroupId id = 1) {
    LabelerGroup g{id, {}};
    for (auto l : ids) g.labeler_ids.insert(LabelerId{l});
    return g;
}

ChunkAnnotation ann(const char* labeler, ClassId cls, double onset, double offset, const char* audio = "x") {
    return ChunkAnnotation{0, AudioId{audio}, LabelerId{labeler}, cls, onset, offset};
}

}  // namespace

TEST_SUITE("consensus") {
    TEST_CASE("two of three members qualify a class") {
        const auto g = group_of({"a", "b", "c"});
        std::vector<ChunkAnnotation> a{ann("a", 4, 0, 2), ann("b", 4, 1, 3), ann("c", 5, 0, 10)};
        const auto out = compute_consensus(AudioId{"x"}, a, g);
        CHECK(out.medoid_class == std::optional<ClassId>{4});
        CHECK(out.decided_by == DecidedBy::unique_qualifier);
        CHECK(out.agreement == doctest::Approx(2.0 / 3.0));
    }

    TEST_CASE("longest summed duration wins between qualifiers") {
        const auto g = group_of({"a", "b", "c"});
        std::vector<ChunkAnnotation> a{ann("a", 7, 0, 3), ann("b", 7, 0, 3), ann("a", 2, 0, 2), ann("c", 2, 0, 2)};
        const auto out = compute_consensus(AudioId{"x"}, a, g);
        CHECK(out.medoid_class == std::optional<ClassId>{7});
        CHECK(out.qualifying_classes == std::vector<ClassId>{2, 7});
        CHECK(out.decided_by == DecidedBy::longest_duration);

        std::vector<ChunkAnnotation> tie{ann("a", 7, 0, 2), ann("b", 7, 0, 2), ann("a", 2, 0, 2), ann("c", 2, 0, 2)};
        CHECK(compute_consensus(AudioId{"x"}, tie, g).medoid_class == std::optional<ClassId>{2});
    }

    TEST_CASE("group of two needs both members") {
        const auto g = group_of({"a", "b"});
        std::vector<ChunkAnnotation> a{ann("a", 1, 0, 1), ann("b", 2, 0, 1)};
        const auto out = compute_consensus(AudioId{"x"}, a, g);
        CHECK_FALSE(out.medoid_class);
        CHECK(out.decided_by == DecidedBy::none);
        CHECK(out.agreement == doctest::Approx(0.5));
    }

    TEST_CASE("same labeler twice counts once") {
        const auto g = group_of({"a", "b", "c"});
        std::vector<ChunkAnnotation> a{ann("a", 3, 0, 1), ann("a", 3, 2, 4), ann("a", 3, 5, 6)};
        CHECK_FALSE(compute_consensus(AudioId{"x"}, a, g).medoid_class);
    }

    TEST_CASE("doubt never qualifies but counts toward agreement") {
        const auto g = group_of({"a", "b", "c"});
        std::vector<ChunkAnnotation> a{ann("a", kDoubtClassId, 0, 10), ann("b", kDoubtClassId, 0, 10),
                                       ann("c", kDoubtClassId, 0, 10)};
        const auto out = compute_consensus(AudioId{"x"}, a, g);
        CHECK_FALSE(out.medoid_class);
        CHECK(out.qualifying_classes.empty());
        CHECK(out.agreement == 1.0);
    }

    TEST_CASE("foreign labeler and empty input") {
        const auto g = group_of({"a", "b"});
        std::vector<ChunkAnnotation> a{ann("z", 1, 0, 1)};
        try {
            compute_consensus(AudioId{"x"}, a, g);
            FAIL("expected ForeignLabeler");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::ForeignLabeler);
        }
        const auto none = compute_consensus(AudioId{"x"}, {}, g);
        CHECK_FALSE(none.medoid_class);
        CHECK(none.agreement == 0.0);
    }

    TEST_CASE("threshold matches counting oracle") {
        for (std::size_t g = 1; g <= 30; ++g) CHECK(qualification_threshold(g) == oracle::two_thirds(g));
        CHECK(qualification_threshold(3) == 2);
        CHECK(qualification_threshold(2) == 2);
        CHECK(qualification_threshold(6) == 4);
    }

    TEST_CASE("order and labeler renaming do not matter") {
        std::mt19937_64 rng(3);
        const auto g = group_of({"a", "b", "c", "d"});
        const auto renamed = group_of({"p", "q", "r", "s"});
        const std::map<std::string, std::string> rename{{"a", "r"}, {"b", "p"}, {"c", "s"}, {"d", "q"}};
        std::uniform_int_distribution<int> cls(0, 3), who(0, 3), len(1, 5);
        const char* names[] = {"a", "b", "c", "d"};
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<ChunkAnnotation> a;
            const int n = 1 + trial % 9;
            for (int i = 0; i < n; ++i) a.push_back(ann(names[who(rng)], ClassId(cls(rng)), 0, len(rng)));
            const auto base = compute_consensus(AudioId{"x"}, a, g);
            std::shuffle(a.begin(), a.end(), rng);
            const auto shuffled = compute_consensus(AudioId{"x"}, a, g);
            for (auto& x : a) x.labeler_id = LabelerId{rename.at(x.labeler_id.str())};
            const auto moved = compute_consensus(AudioId{"x"}, a, renamed);
            for (const auto* o : {&shuffled, &moved}) {
                CHECK(o->medoid_class == base.medoid_class);
                CHECK(o->agreement == base.agreement);
                CHECK(o->qualifying_classes == base.qualifying_classes);
            }
            const auto v = oracle::consensus(a, 4);
            CHECK(v.label == base.medoid_class);
        }
    }

    TEST_CASE("doubt iterations") {
        CHECK(is_doubt_iteration(10));
        CHECK_FALSE(is_doubt_iteration(1));
        CHECK(is_doubt_iteration(20));
        CHECK_FALSE(is_doubt_iteration(11));
        CHECK_THROWS_AS(is_doubt_iteration(0), Error);
    }

    TEST_CASE("doubt worklist") {
        CHECK(build_doubt_worklist(LabelerId{"a"}, {}).empty());
        std::vector<DoubtHistoryEntry> h;
        auto d = [](ChunkId id, const char* who, ClassId c, const char* audio) {
            ChunkAnnotation a = ann(who, c, 0, 1, audio);
            a.chunk_id = id;
            return a;
        };
        h.push_back({d(9, "a", kDoubtClassId, "late"), false});
        h.push_back({d(2, "a", kDoubtClassId, "early"), false});
        h.push_back({d(4, "a", kDoubtClassId, "done"), true});
        h.push_back({d(5, "b", kDoubtClassId, "other"), false});
        h.push_back({d(6, "a", 3, "labeled"), false});
        const auto w = build_doubt_worklist(LabelerId{"a"}, h);
        REQUIRE(w.size() == 2);
        CHECK(w[0] == DoubtItem{AudioId{"early"}, 2});
        CHECK(w[1] == DoubtItem{AudioId{"late"}, 9});
    }

    TEST_CASE("workflows over a store") {
        fixture::World world;
        Engine engine(*world.store);
        const auto it = engine.run_iteration(world.request(6));
        REQUIRE(it.batch.proposals.size() == 6);
        auto& store = *world.store;

        // group 1 audios get 2 votes for the truth; group 2 audios split
        std::vector<AudioId> group1, group2;
        for (std::size_t i = 0; i < it.batch.proposals.size(); ++i)
            (it.assigned_group[i] == 1 ? group1 : group2).push_back(it.batch.proposals[i].audio_id);
        REQUIRE(group1.size() == 3);
        REQUIRE(group2.size() == 3);
        std::vector<ChunkAnnotation> batch;
        for (const auto& a : group1)
            for (auto l : {"a1", "a2"}) batch.push_back(full_span_annotation(a, LabelerId{l}, world.truth.at(a), 10));
        for (const auto& a : group2) {
            batch.push_back(full_span_annotation(a, LabelerId{"b1"}, 1, 10));
            batch.push_back(full_span_annotation(a, LabelerId{"b2"}, 2, 10));
        }
        store.record_annotations(batch);

        const auto outcomes = iteration_consensus(store, it.iteration_id);
        REQUIRE(outcomes.size() == 6);
        for (const auto& o : outcomes) {
            const bool first = std::find(group1.begin(), group1.end(), o.audio_id) != group1.end();
            CHECK(o.medoid_class.has_value() == first);
            if (first) CHECK(*o.medoid_class == world.truth.at(o.audio_id));
        }

        SUBCASE("promotion is all or nothing") {
            auto bad = outcomes;
            bad.push_back(ConsensusOutcome{AudioId{"not_a_proposal"}, 1, 1, {1}, DecidedBy::unique_qualifier});
            CHECK_THROWS_AS(promote_medoids(store, bad, it.iteration_id), Error);
            CHECK(store.medoids().empty());
            CHECK_THROWS_AS(promote_medoids(store, outcomes, it.iteration_id + 1), Error);

            store.set_write_hook([](std::size_t n) {
                if (n == 1) throw Error(ErrorKind::PersistenceFailure, "injected");
            });
            CHECK_THROWS_AS(promote_medoids(store, outcomes, it.iteration_id), Error);
            CHECK(store.medoids().empty());
            store.set_write_hook({});

            CHECK(promote_medoids(store, outcomes, it.iteration_id) == 3);
            const auto labeled = store.labeled_ids();
            CHECK(labeled == AudioSet(group1.begin(), group1.end()));
            for (const auto& p : store.proposals(it.iteration_id))
                CHECK(p.label.has_value() == (labeled.count(p.audio_id) > 0));
        }

        SUBCASE("resolving doubt flips the outcome") {
            // b1 adds a Doubt to an audio that has no consensus yet
            const auto other = group2.back();
            store.record_annotations(std::vector{full_span_annotation(other, LabelerId{"b1"}, kDoubtClassId, 10)});
            const auto before = audio_consensus(store, other);
            CHECK_FALSE(before.medoid_class);

            ChunkId doubt_id = 0;
            for (const auto& c : store.chunks_for_audio(other))
                if (c.annotation.class_id == kDoubtClassId) doubt_id = c.annotation.chunk_id;
            REQUIRE(doubt_id != 0);
            std::vector<StoredChunk> history_rows = store.chunks_by_labeler(LabelerId{"b1"});
            std::vector<DoubtHistoryEntry> history;
            for (const auto& r : history_rows) history.push_back({r.annotation, r.resolved});
            CHECK(build_doubt_worklist(LabelerId{"b1"}, history) == std::vector{DoubtItem{other, doubt_id}});

            // b1 relabels as class 2, matching b2 -> class 2 now qualifies
            const auto after = resolve_doubt(store, doubt_id, std::vector{full_span_annotation(other, LabelerId{"b1"}, 2, 10)});
            CHECK(after.medoid_class == std::optional<ClassId>{2});
            CHECK(store.chunk(doubt_id)->resolved);
            CHECK(store.labeled_ids().count(other) == 1);
            history.clear();
            for (const auto& r : store.chunks_by_labeler(LabelerId{"b1"})) history.push_back({r.annotation, r.resolved});
            CHECK(build_doubt_worklist(LabelerId{"b1"}, history).empty());
        }

        SUBCASE("suggestions become usable from the next iteration") {
            const auto s = suggest_ontology_class(store, LabelerId{"a1"}, "tram_bell", false);
            CHECK_FALSE(s.approved);
            const auto merged = suggest_ontology_class(store, LabelerId{"b1"}, "tram_bell", false);
            CHECK(merged.suggestion_id == s.suggestion_id);
            CHECK(merged.credited == std::vector{LabelerId{"a1"}, LabelerId{"b1"}});
            CHECK(store.suggestions().size() == 1);

            const auto approved = approve_ontology_suggestion(store, s.suggestion_id);
            REQUIRE(approved.class_id);
            const auto cls = *approved.class_id;
            const auto onto = store.load_ontology();
            CHECK(onto.visible_at(it.iteration_id).find(cls)->active == false);
            CHECK(onto.visible_at(it.iteration_id + 1).find(cls)->active);

            try {
                suggest_ontology_class(store, LabelerId{"a2"}, "tram_bell", true);
                FAIL("expected DuplicateName");
            } catch (const Error& e) {
                CHECK(e.kind() == ErrorKind::DuplicateName);
            }
            try {
                suggest_ontology_class(store, LabelerId{"a2"}, "class_0", true);
                FAIL("expected DuplicateName");
            } catch (const Error& e) {
                CHECK(e.kind() == ErrorKind::DuplicateName);
            }
            const auto auto_ok = suggest_ontology_class(store, LabelerId{"a2"}, "gull", true);
            CHECK(auto_ok.approved);
        }
    }
}
