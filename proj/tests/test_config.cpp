#include "alab/config.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <fstream>

using namespace alab;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::InvalidArgument;
}

}  // namespace

TEST_SUITE("config") {
    TEST_CASE("defaults") {
        const auto c = parse_config("{}");
        CHECK(c.host == "127.0.0.1");
        CHECK(c.port == 8080);
        CHECK(c.engine.budget == 400);
        CHECK(c.engine.partition.n_smax == 15000);
        CHECK(c.auto_approve_suggestions);
        CHECK(c.groups.empty());
    }

    TEST_CASE("full file") {
        const auto c = parse_config(R"({
            "port": 9000, "storage": "x.db", "budget": 40, "n_smax": 500, "n_mmax": 60, "seed": 3,
            "operator_secret": "s", "session_ttl_seconds": 60, "auto_approve_suggestions": false,
            "logistic": {"l2": 0.5, "max_iterations": 50},
            "groups": [{"id": 7, "labelers": ["a", {"id": "b", "secret": "pb"}]}, {"labelers": ["c"]}]
        })");
        CHECK(c.port == 9000);
        CHECK(c.storage == "x.db");
        CHECK(c.engine.budget == 40);
        CHECK(c.engine.partition.n_smax == 500);
        CHECK(c.engine.n_mmax == 60);
        CHECK(c.engine.seed == 3);
        CHECK(c.engine.logistic.l2 == 0.5);
        CHECK(c.engine.logistic.max_iterations == 50);
        CHECK_FALSE(c.auto_approve_suggestions);
        REQUIRE(c.groups.size() == 2);
        CHECK(c.groups[0].group_id == 7);
        CHECK(c.groups[1].group_id == 2);
        CHECK(c.labeler_secrets.at(LabelerId{"b"}) == "pb");
        CHECK(c.labeler_secrets.count(LabelerId{"a"}) == 0);

        Store s(":memory:");
        s.migrate();
        sync_labelers(s, c);
        CHECK(s.group_of(LabelerId{"b"}) == std::optional<GroupId>{7});
        CHECK(s.groups().size() == 2);
    }

    TEST_CASE("invalid files") {
        for (const char* text : {"not json", "[]", R"({"port": "x"})", R"({"port": 70000})", R"({"budget": 0})",
                                 R"({"groups": {}})", R"({"groups": [{"id": 1}]})", R"({"groups": [{"labelers": []}]})",
                                 R"({"groups": [{"labelers": ["a", "a"]}]})",
                                 R"({"groups": [{"labelers": ["a"]}, {"labelers": ["a"]}]})",
                                 R"({"groups": [{"id": 1, "labelers": ["a"]}, {"id": 1, "labelers": ["b"]}]})"}) {
            CAPTURE(text);
            const auto k = kind_of([&] { parse_config(text); });
            CHECK((k == ErrorKind::ConfigInvalid || k == ErrorKind::InvalidArgument));
        }
        CHECK(kind_of([] { load_config("/nonexistent/alab.json"); }) == ErrorKind::ConfigInvalid);
    }

    TEST_CASE("environment overrides") {
        ServiceConfig c;
        apply_env_overrides(c, [](const char* k) -> const char* {
            return std::string(k) == "ALAB_PORT" ? "1234" : std::string(k) == "ALAB_STORAGE" ? "/tmp/y.db" : nullptr;
        });
        CHECK(c.port == 1234);
        CHECK(c.storage == "/tmp/y.db");
        CHECK(kind_of([&] { apply_env_overrides(c, [](const char*) -> const char* { return "12ab"; }); }) ==
              ErrorKind::ConfigInvalid);

        fixture::TempFile f("cfg");
        std::ofstream(f.path()) << R"({"port": 0, "budget": 12})";
        const auto loaded = load_config(f.path());
        CHECK(loaded.port == 0);
        CHECK(loaded.engine.budget == 12);
    }
}
