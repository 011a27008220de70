#include "alab/partitioner.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <random>

using namespace alab;

namespace {

const Timestamp t0 = std::chrono::sys_days{std::chrono::year{2024} / 1 / 8};

EmbeddingRecord rec(const std::string& id, ClassId cls, float prob) {
    return EmbeddingRecord{AudioId{id}, Eigen::VectorXf::Zero(2), cls, prob};
}

std::vector<float> probs_in(const PartitionPlan& plan, std::size_t set, const std::vector<EmbeddingRecord>& records) {
    std::vector<float> out;
    for (const auto& id : plan.sets[set])
        for (const auto& r : records)
            if (r.audio_id == id) out.push_back(r.top1_prob);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<EmbeddingRecord> random_pool(std::mt19937_64& rng, std::size_t n, ClassId classes) {
    std::uniform_int_distribution<ClassId> cls(0, classes - 1);
    std::uniform_int_distribution<int> prob(0, 20);  // coarse grid forces ties
    std::vector<EmbeddingRecord> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(rec("a" + std::to_string(i), cls(rng), float(prob(rng)) / 20.0f));
    return out;
}

}  // namespace

TEST_SUITE("partitioner") {
    TEST_CASE("select_window is half-open and per node") {
        Catalog c;
        CHECK_THROWS_AS(select_window(c, NodeId{"A"}, t0, t0 + std::chrono::hours{1}), Error);
        for (int i = 0; i < 4; ++i) {
            AudioRecord a;
            a.audio_id = AudioId{"A" + std::to_string(i)};
            a.node_id = NodeId{"A"};
            a.recorded_at = t0 + std::chrono::seconds{10 * i};
            c.add(a);
            a.audio_id = AudioId{"B" + std::to_string(i)};
            a.node_id = NodeId{"B"};
            c.add(a);
        }
        const auto all_a = select_window(c, NodeId{"A"}, t0, t0 + std::chrono::hours{1});
        CHECK(all_a.size() == 4);
        for (const auto& id : all_a) CHECK(id.str()[0] == 'A');
        const auto part = select_window(c, NodeId{"A"}, t0, t0 + std::chrono::seconds{30});
        CHECK(part.size() == 3);
        CHECK_FALSE(part.count(AudioId{"A3"}));

        try {
            select_window(c, NodeId{"A"}, t0, t0);
            FAIL("expected InvalidWindow");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::InvalidWindow);
        }
        try {
            select_window(c, NodeId{"Z"}, t0, t0 + std::chrono::hours{1});
            FAIL("expected UnknownNode");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::UnknownNode);
        }
        Catalog empty;
        empty.nodes.insert(NodeId{"A"});
        CHECK(select_window(empty, NodeId{"A"}, t0, t0 + std::chrono::hours{1}).empty());
    }

    TEST_CASE("split_labeled") {
        AudioSet s_w;
        for (int i = 0; i < 10; ++i) s_w.insert(AudioId{"x" + std::to_string(i)});
        auto none = split_labeled(s_w, {});
        CHECK(none.s_wm.empty());
        CHECK(none.s_wnh == s_w);
        auto all = split_labeled(s_w, s_w);
        CHECK(all.s_wnh.empty());
        AudioSet four{AudioId{"x1"}, AudioId{"x3"}, AudioId{"x5"}, AudioId{"x7"}, AudioId{"zz"}};
        const auto w = make_window_selection(NodeId{"n"}, t0, t0 + std::chrono::hours{1}, s_w, four);
        CHECK(w.s_wm.size() == 4);
        CHECK(w.s_wnh.size() == 6);
        CHECK(w.set_identity_holds());
    }

    TEST_CASE("num_disjoint_sets") {
        PartitionConfig c;
        CHECK(c.n_smax == 15000);
        CHECK(num_disjoint_sets(100000, c) == 7);
        CHECK(num_disjoint_sets(15000, c) == 1);
        CHECK(num_disjoint_sets(0, c) == 0);
        for (std::size_t n = 1; n < 100; ++n)
            CHECK(num_disjoint_sets(n, PartitionConfig{7}) == (n + 6) / 7);
    }

    TEST_CASE("rule (ii): one sample per set, most uncertain first") {
        std::vector<EmbeddingRecord> r{rec("c", 0, 0.9f), rec("a", 0, 0.2f), rec("b", 0, 0.5f)};
        const auto plan = assign_disjoint_sets(r, 3);
        CHECK(plan.rules.at(0) == AssignmentRule::one_per_set);
        CHECK(probs_in(plan, 0, r) == std::vector<float>{0.2f});
        CHECK(probs_in(plan, 1, r) == std::vector<float>{0.5f});
        CHECK(probs_in(plan, 2, r) == std::vector<float>{0.9f});
    }

    TEST_CASE("rule (i): all to the first set") {
        std::vector<EmbeddingRecord> r{rec("a", 4, 0.3f), rec("b", 4, 0.7f)};
        const auto plan = assign_disjoint_sets(r, 3);
        CHECK(plan.rules.at(4) == AssignmentRule::all_to_first);
        CHECK(plan.sets[0].size() == 2);
        CHECK(plan.sets[1].empty());
    }

    TEST_CASE("rule (iii): dealt with remainder up front") {
        std::vector<EmbeddingRecord> r;
        for (int i = 0; i < 5; ++i) r.push_back(rec("p" + std::to_string(i), 1, 0.1f * float(i + 1)));
        const auto plan = assign_disjoint_sets(r, 2);
        CHECK(plan.rules.at(1) == AssignmentRule::dealt);
        CHECK(probs_in(plan, 0, r) == std::vector<float>{0.1f, 0.2f, 0.3f});
        CHECK(probs_in(plan, 1, r) == std::vector<float>{0.4f, 0.5f});
        CHECK(plan.class_buckets.at(1) == 5);
    }

    TEST_CASE("matches the brute-force assigner and is order independent") {
        std::mt19937_64 rng(5);
        for (int trial = 0; trial < 40; ++trial) {
            auto pool = random_pool(rng, 50 + std::size_t(trial) * 13, ClassId(1 + trial % 9));
            const std::size_t n_ds = 1 + std::size_t(trial) % 6;
            const auto plan = assign_disjoint_sets(pool, n_ds);
            const auto expect = oracle::assign(pool, n_ds);
            REQUIRE(plan.sets.size() == n_ds);
            for (std::size_t j = 0; j < n_ds; ++j)
                CHECK(std::set<AudioId>(plan.sets[j].begin(), plan.sets[j].end()) == expect[j]);
            std::shuffle(pool.begin(), pool.end(), rng);
            CHECK(assign_disjoint_sets(pool, n_ds).sets == plan.sets);
        }
    }

    TEST_CASE("every class is represented in the first set") {
        std::mt19937_64 rng(9);
        auto pool = random_pool(rng, 400, 12);
        const auto plan = assign_disjoint_sets(pool, 5);
        std::set<ClassId> first;
        for (const auto& id : plan.sets[0])
            for (const auto& r : pool)
                if (r.audio_id == id) first.insert(r.top1_class);
        CHECK(first.size() == plan.class_buckets.size());
    }

    TEST_CASE("rule-(i) crowding spills least uncertain samples past the cap") {
        // 6 classes of 1 sample each and one class dealt over 2 sets; cap 4
        std::vector<EmbeddingRecord> r;
        for (ClassId c = 0; c < 6; ++c) r.push_back(rec("s" + std::to_string(c), c, 0.1f * float(c + 1)));
        for (int i = 0; i < 4; ++i) r.push_back(rec("d" + std::to_string(i), 9, 0.2f * float(i + 1)));
        const auto plain = assign_disjoint_sets(r, 2);
        CHECK(plain.sets[0].size() == 8);
        const auto plan = assign_disjoint_sets(r, 2, 4);
        // singletons are their class's only member and stay; overflow is flagged
        CHECK(plan.sets[0].size() == 8);
        CHECK(plan.overflow);
        CHECK(plan.total_size() == r.size());

        std::vector<EmbeddingRecord> crowd;
        for (ClassId c = 0; c < 3; ++c)
            for (int i = 0; i < 3; ++i)
                crowd.push_back(rec("c" + std::to_string(c) + "_" + std::to_string(i), c, 0.1f * float(i + 1) + 0.01f * float(c)));
        // n_ds = 4 > L_c = 3: every class is rule (i); 9 samples in set 1, cap 4
        const auto spilled = assign_disjoint_sets(crowd, 4, 4);
        CHECK(spilled.sets[0].size() == 4);
        CHECK(spilled.spills.size() >= 5);
        CHECK_FALSE(spilled.overflow);
        CHECK(spilled.total_size() == 9);
        const std::set<AudioId> first(spilled.sets[0].begin(), spilled.sets[0].end());
        for (ClassId c = 0; c < 3; ++c) CHECK(first.count(AudioId{"c" + std::to_string(c) + "_0"}));
        // the kept extra is the most uncertain of the spillable ones
        CHECK(first.count(AudioId{"c0_1"}));
        for (const auto& s : spilled.sets) CHECK(s.size() <= 4);
    }

    TEST_CASE("plan report lists every set") {
        std::vector<EmbeddingRecord> r{rec("a", 0, 0.1f), rec("b", 0, 0.2f), rec("c", 1, 0.3f)};
        const auto text = format_plan_report(assign_disjoint_sets(r, 2));
        CHECK(text.find("set 1") != std::string::npos);
        CHECK(text.find("set 2") != std::string::npos);
    }
}
