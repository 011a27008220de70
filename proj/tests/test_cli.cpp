#include "alab/ingestion.hpp"

#include "fixtures.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <fstream>
#include <sstream>

using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run alab_cli(const std::string& args) {
    fixture::TempFile out("cli_out"), err("cli_err");
    const std::string cmd = std::string("NO_COLOR=1 ") + ALAB_CLI_PATH + " " + args + " >" + out.path() + " 2>" + err.path();
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    auto slurp = [](const std::string& p) {
        std::ifstream in(p);
        std::stringstream s;
        s << in.rdbuf();
        return s.str();
    };
    r.out = slurp(out.path());
    r.err = slurp(err.path());
    return r;
}

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("usage errors exit 2") {
        CHECK(alab_cli("").code == 2);
        CHECK(alab_cli("frobnicate").code == 2);
        CHECK(alab_cli("iterate --node x").code == 2);
        CHECK(alab_cli("iterate --node x --from a --to b --strategy greedy").code == 2);
        CHECK(alab_cli("--config /nonexistent.json migrate").code == 2);
        CHECK(alab_cli("--help").code == 0);
    }

    TEST_CASE("operator workflow") {
        fixture::TempFile db("cli_db"), manifest("cli_manifest"), classes("cli_classes"), config("cli_config");
        const auto pool = alab::generate_synthetic_pool(3, 20, 4, 0.5, 11);
        {
            std::ofstream m(manifest.path());
            alab::write_manifest(m, pool.records);
            std::ofstream c(classes.path());
            c << "# seed ontology\nbird\ncar\nrain\n";
            std::ofstream(config.path()) << R"({"groups": [{"labelers": ["a1", "a2", "a3"]}, {"labelers": ["b1", "b2"]}]})";
        }
        const std::string store = "--config " + config.path() + " --store " + db.path() + " ";

        auto r = alab_cli(store + "--json migrate");
        CHECK(r.code == 0);
        CHECK(json::parse(r.out).at("schema_version") == 1);

        r = alab_cli(store + "--json ingest --manifest " + manifest.path() + " --classes " + classes.path() + " --path /data");
        REQUIRE(r.code == 0);
        CHECK(json::parse(r.out) == json{{"audios", 60}, {"classes_added", 3}});
        r = alab_cli(store + "--json ingest --classes " + classes.path());
        CHECK(json::parse(r.out).at("classes_added") == 0);

        const std::string window = "--node syn00 --from 2024-01-08T00:00:00Z --to 2024-01-08T00:10:00Z ";
        r = alab_cli(store + "iterate " + window + "--budget 6");
        REQUIRE(r.code == 0);
        CHECK(r.out.find("iteration 1") != std::string::npos);
        r = alab_cli(store + "--json iterate " + window + "--budget 6");
        REQUIRE(r.code == 0);
        const auto second = json::parse(r.out);
        CHECK(second.at("iteration_id") == 2);
        CHECK(second.at("proposal_count") == 6);

        r = alab_cli(store + "consensus --iteration 1");
        CHECK(r.code == 0);
        CHECK(r.out.find("0 of 6") != std::string::npos);

        r = alab_cli(store + "--json report --iteration 1 --plan");
        REQUIRE(r.code == 0);
        CHECK(json::parse(r.out).at("n_ds") == 1);
        r = alab_cli(store + "--json report --histogram --top 50");
        REQUIRE(r.code == 0);
        CHECK(json::parse(r.out).empty());
        r = alab_cli(store + "report --export WavsProposed");
        CHECK(r.code == 0);
        CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1 + 12);
        CHECK(alab_cli(store + "report").code == 2);

        r = alab_cli(store + "iterate --node syn00 --from 2024-01-08T00:10:00Z --to 2024-01-08T00:00:00Z");
        CHECK(r.code == 1);
        CHECK(r.err.rfind("error kind=InvalidWindow msg=\"", 0) == 0);
        CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
        r = alab_cli(store + "report --iteration 99");
        CHECK(r.code == 1);
        CHECK(r.err.find("kind=UnknownIteration") != std::string::npos);
        r = alab_cli(store + "iterate --node syn00 --from yesterday --to 2024-01-08T00:00:00Z");
        CHECK(r.code == 1);
    }

    TEST_CASE("simulate") {
        auto r = alab_cli("--json simulate --classes 3 --per-class 20 --dim 4 --budget 4 --iterations 2 --seed 5");
        REQUIRE(r.code == 0);
        const auto runs = json::parse(r.out);
        REQUIRE(runs.size() == 1);
        CHECK(runs[0].at("iterations").size() == 2);

        r = alab_cli("--json simulate --classes 3 --per-class 20 --dim 4 --budget 4 --iterations 3 --seeds 2 --strategy-compare");
        REQUIRE(r.code == 0);
        const auto cmp = json::parse(r.out);
        CHECK(cmp.at("seeds") == json{1, 2});
        r = alab_cli("simulate --classes 3 --per-class 20 --dim 4 --budget 4 --iterations 3 --seeds 2 --strategy-compare");
        CHECK(r.code == 0);
        CHECK(r.out.find("mal_mf") != std::string::npos);

        r = alab_cli("simulate --noise 1.5");
        CHECK(r.code == 1);
        CHECK(r.err.find("kind=ConfigInvalid") != std::string::npos);
    }
}
