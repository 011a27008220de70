#pragma once

#include "alab/committee.hpp"
#include "alab/iteration.hpp"
#include "alab/partitioner.hpp"
#include "alab/store.hpp"

#include <functional>
#include <mutex>
#include <optional>

namespace alab {

struct EngineConfig {
    PartitionConfig partition;
    std::size_t n_mmax = kDefaultMedoidCapacity;
    std::size_t budget = kDefaultBudget;
    std::uint64_t seed = 1;
    KMedoidsOptions kmedoids;
    LogisticOptions logistic;
};

enum class Strategy { mal_mf, random };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view text);

struct IterationRequest {
    NodeId node_id;
    Timestamp window_start{};
    Timestamp window_end{};
    std::optional<std::size_t> budget;
    // Replaying a stored id returns the stored record untouched.
    std::optional<IterationId> iteration_id;
    Strategy strategy = Strategy::mal_mf;
};

// Runs AL iterations against a store: window selection, partitioning, proposal
// and an atomic commit.
class Engine {
public:
    using Clock = std::function<Timestamp()>;

    explicit Engine(Store& store, EngineConfig config = {}, Clock clock = {});

    // Throws InvalidWindow, UnknownNode, EmptyWindow, MissingSidecar, Conflict when
    // the window is busy, PersistenceFailure when the commit fails.
    IterationRecord run_iteration(const IterationRequest& request);

    // Runs while the window lease is held; tests use it to overlap requests.
    void set_locked_hook(std::function<void()> hook) { locked_hook_ = std::move(hook); }

    const EngineConfig& config() const noexcept { return config_; }

private:
    Store& store_;
    EngineConfig config_;
    Clock clock_;
    std::function<void()> locked_hook_;
    std::mutex commit_mutex_;
};

}  // namespace alab
