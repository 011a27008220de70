#pragma once

#include "alab/engine.hpp"

#include <json.hpp>

#include <random>
#include <string>
#include <vector>

namespace alab {

struct SimConfig {
    int classes = 8;
    int per_class = 250;
    int dim = 32;
    double spread = 1.78;
    double labeler_noise = 0.1;
    std::vector<std::size_t> group_sizes{3, 2};
    std::size_t budget = 40;
    std::size_t iterations = 15;
    std::uint64_t seed = 1;
    Strategy strategy = Strategy::mal_mf;
    std::size_t n_smax = kDefaultMaxSamplesPerRun;
    std::size_t n_mmax = kDefaultMedoidCapacity;
    // ":memory:" or a file path
    std::string storage = ":memory:";
};

// Throws ConfigInvalid.
void check_sim_config(const SimConfig& config);

struct SimIteration {
    IterationId iteration_id = 0;
    std::string path;
    std::size_t proposals = 0;
    std::size_t labeled = 0;         // audios with a consensus label after the iteration
    double accuracy = 0;             // propagation accuracy on the still unlabeled audios
    double consensus_yield = 0;      // proposals that gained a label
};

struct SimReport {
    std::uint64_t seed = 0;
    Strategy strategy = Strategy::mal_mf;
    std::vector<SimIteration> iterations;
    std::size_t distinct_proposals = 0;
    std::size_t total_proposals = 0;
};

// Full-span annotation with the true ontology class, or with probability `noise`
// a uniformly drawn wrong one among `class_ids`.
ChunkAnnotation simulate_labeler(const AudioId& audio, const LabelerId& labeler, ClassId true_class,
                                 const std::vector<ClassId>& class_ids, double noise, double duration,
                                 std::mt19937_64& rng);

SimReport run_simulation(const SimConfig& config);

struct StrategySeries {
    Strategy strategy = Strategy::mal_mf;
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<std::vector<double>> per_seed;  // [seed][iteration]
};

struct StrategyComparison {
    std::vector<std::uint64_t> seeds;
    StrategySeries first;
    StrategySeries second;
};

// Paired runs over identical pools, one per seed. Needs at least two seeds.
StrategyComparison compare_strategies(const SimConfig& config, const std::vector<std::uint64_t>& seeds,
                                      Strategy first = Strategy::mal_mf, Strategy second = Strategy::random);

std::string format_sim_report(const SimReport& report);
nlohmann::json to_json(const SimReport& report);
std::string format_comparison(const StrategyComparison& comparison);
nlohmann::json to_json(const StrategyComparison& comparison);

}  // namespace alab
