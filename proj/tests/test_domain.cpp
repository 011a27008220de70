#include "alab/domain.hpp"

#include <doctest.h>

using namespace alab;

TEST_SUITE("domain") {
    TEST_CASE("iso8601 round trip") {
        const Timestamp t = std::chrono::sys_days{std::chrono::year{2024} / 1 / 8} + std::chrono::seconds{10};
        CHECK(format_iso8601(t) == "2024-01-08T00:00:10Z");
        CHECK(parse_iso8601("2024-01-08T00:00:10Z") == t);
        CHECK_THROWS_AS(parse_iso8601("2024-13-08T00:00:10Z"), Error);
        CHECK_THROWS_AS(parse_iso8601("yesterday"), Error);
    }

    TEST_CASE("ontology always holds an undeletable Doubt") {
        Ontology o;
        REQUIRE(o.find(kDoubtClassId));
        CHECK(o.find(kDoubtClassId)->name == kDoubtClassName);
        CHECK_THROWS_AS(o.deactivate(kDoubtClassId), Error);
        const auto& dog = o.add("dog");
        CHECK(dog.class_id == 1);
        CHECK_THROWS_AS(o.add("dog"), Error);
        o.deactivate(dog.class_id);
        CHECK(o.find_active("dog") == nullptr);
        CHECK(o.add("dog").class_id == 2);
    }

    TEST_CASE("classes become visible from their first iteration") {
        Ontology o;
        const auto id = o.add("rain", ClassOrigin::suggested, 5).class_id;
        CHECK_FALSE(o.visible_at(4).find(id)->active);
        CHECK(o.visible_at(5).find(id)->active);
    }

    TEST_CASE("annotation validation") {
        Ontology o;
        const auto dog = o.add("dog").class_id;
        AudioRecord audio;
        audio.audio_id = AudioId{"n_20240108T000000Z"};
        ChunkAnnotation a{0, audio.audio_id, LabelerId{"l"}, dog, 1.0, 4.0};
        CHECK_NOTHROW(validate_annotation(a, audio, o));
        auto bad = a;
        bad.onset = 5.0;
        try {
            validate_annotation(bad, audio, o);
            FAIL("expected OutOfRangeTimes");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::OutOfRangeTimes);
        }
        bad = a;
        bad.offset = 10.5;
        CHECK_THROWS_AS(validate_annotation(bad, audio, o), Error);
        bad = a;
        bad.class_id = 99;
        try {
            validate_annotation(bad, audio, o);
            FAIL("expected UnknownClass");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::UnknownClass);
        }
        o.deactivate(dog);
        try {
            validate_annotation(a, audio, o);
            FAIL("expected InactiveClass");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::InactiveClass);
        }
    }

    TEST_CASE("full span annotation covers the clip") {
        const auto a = full_span_annotation(AudioId{"x"}, LabelerId{"l"}, 3, 10.0);
        CHECK(a.onset == 0.0);
        CHECK(a.offset == 10.0);
        CHECK(a.length() == 10.0);
    }

    TEST_CASE("groups must be disjoint and non-empty") {
        std::vector<LabelerGroup> ok{{1, {LabelerId{"a"}, LabelerId{"b"}}}, {2, {LabelerId{"c"}}}};
        CHECK_NOTHROW(check_groups(ok));
        auto overlap = ok;
        overlap[1].labeler_ids.insert(LabelerId{"a"});
        CHECK_THROWS_AS(check_groups(overlap), Error);
        auto empty = ok;
        empty[1].labeler_ids.clear();
        CHECK_THROWS_AS(check_groups(empty), Error);
    }

    TEST_CASE("embedding checks") {
        EmbeddingRecord r{AudioId{"x"}, Eigen::VectorXf::Zero(4), 1, 0.5f};
        CHECK_NOTHROW(check_embedding(r, 4));
        CHECK_THROWS_AS(check_embedding(r, 3), Error);
        r.top1_prob = 1.5f;
        CHECK_THROWS_AS(check_embedding(r, 4), Error);
        r.top1_prob = 0.5f;
        r.vector[2] = std::numeric_limits<float>::quiet_NaN();
        CHECK_THROWS_AS(check_embedding(r, 4), Error);
    }

    TEST_CASE("window selection set identity") {
        WindowSelection w;
        w.s_w = {AudioId{"a"}, AudioId{"b"}};
        w.s_wm = {AudioId{"a"}};
        w.s_wnh = {AudioId{"b"}};
        CHECK(w.set_identity_holds());
        w.s_wnh.insert(AudioId{"a"});
        CHECK_FALSE(w.set_identity_holds());
    }
}
