#pragma once

#include "alab/engine.hpp"
#include "alab/ingestion.hpp"
#include "alab/store.hpp"

#include <filesystem>
#include <memory>
#include <random>
#include <string>

namespace fixture {

inline const alab::Timestamp kStart = std::chrono::sys_days{std::chrono::year{2024} / 1 / 8};

// Fresh file under the system temp directory, removed with its WAL side files.
class TempFile {
public:
    explicit TempFile(const std::string& stem) {
        static std::mt19937_64 rng(std::random_device{}());
        path_ = (std::filesystem::temp_directory_path() / (stem + "_" + std::to_string(rng()) + ".db")).string();
    }
    ~TempFile() {
        for (const char* suffix : {"", "-wal", "-shm", "-journal"}) std::filesystem::remove(path_ + suffix);
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

// A migrated store holding a synthetic pool on one node, with `classes` ontology
// classes (ids 1..K, matching true label + 1) and labeler groups of 3 and 2.
struct World {
    std::unique_ptr<alab::Store> store;
    alab::SyntheticPool pool;
    std::vector<alab::AudioRecord> audios;
    std::map<alab::AudioId, alab::ClassId> truth;
    alab::NodeId node{"syn00"};
    alab::Timestamp end{};

    explicit World(int classes = 4, int per_class = 30, int dim = 8, double spread = 0.5, std::uint64_t seed = 7,
                   const std::string& path = ":memory:") {
        store = std::make_unique<alab::Store>(path);
        store->migrate();
        pool = alab::generate_synthetic_pool(classes, per_class, dim, spread, seed, node);
        const auto path_id = store->ensure_path("/data");
        for (std::size_t i = 0; i < pool.records.size(); ++i) {
            audios.push_back(alab::audio_from_filename(alab::filename_from_audio_id(pool.records[i].audio_id), path_id));
            truth[pool.records[i].audio_id] = pool.true_labels[i] + 1;
        }
        store->add_audios(audios);
        store->put_embeddings(pool.records);
        for (int c = 0; c < classes; ++c) store->add_class("class_" + std::to_string(c));
        for (auto l : {"a1", "a2", "a3"}) store->add_labeler(alab::LabelerId{l}, 1);
        for (auto l : {"b1", "b2"}) store->add_labeler(alab::LabelerId{l}, 2);
        end = kStart + std::chrono::seconds{10 * std::int64_t(pool.records.size())};
    }

    alab::IterationRequest request(std::size_t budget) const {
        alab::IterationRequest r;
        r.node_id = node;
        r.window_start = kStart;
        r.window_end = end;
        r.budget = budget;
        return r;
    }
};

}  // namespace fixture
