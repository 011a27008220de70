#pragma once

#include "alab/committee.hpp"
#include "alab/domain.hpp"
#include "alab/iteration.hpp"
#include "alab/partitioner.hpp"

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

struct sqlite3;

namespace alab {

inline constexpr int kSchemaVersion = 1;

// A Chunks row with its bookkeeping.
struct StoredChunk {
    ChunkAnnotation annotation;
    IterationId iteration_id = 0;
    bool resolved = false;
    std::optional<ChunkId> resolves;  // Doubt chunk this annotation replaced
};

// A WavsProposed row.
struct ProposalRow {
    std::int64_t id = 0;
    IterationId iteration_id = 0;
    AudioId audio_id;
    std::size_t rank = 0;
    Provenance provenance = Provenance::mal_medoid;
    GroupId group_id = 0;
    std::optional<ClassId> label;  // consensus (medoid) class
    std::size_t labeler_count = 0;
    double agreement_pct = 0;
    std::string filename;
    NodeId node_id;
};

struct MedoidRow {
    AudioId audio_id;
    ClassId class_id = 0;
    IterationId iteration_id = 0;
    std::int64_t seq = 0;
};

struct HistogramFilter {
    std::size_t top_k = 50;
    std::optional<NodeId> node;
    bool include_doubt = false;
};

struct TagCount {
    ClassId class_id = 0;
    std::string name;
    std::size_t count = 0;

    friend bool operator==(const TagCount&, const TagCount&) = default;
};

struct StoredPlan {
    std::int64_t plan_id = 0;
    std::vector<std::vector<AudioId>> sets;
};

struct Suggestion {
    std::int64_t id = 0;
    std::string name;
    bool approved = false;
    std::optional<ClassId> class_id;
    std::vector<LabelerId> credited;
};

// Held while an iteration runs on a window; released on destruction.
class WindowLease {
public:
    WindowLease() = default;
    explicit WindowLease(std::unique_lock<std::mutex> lock) : lock_(std::move(lock)) {}
    bool held() const noexcept { return lock_.owns_lock(); }

private:
    std::unique_lock<std::mutex> lock_;
};

// Relational store for the audio catalog, annotations and AL bookkeeping.
// One SQLite file; every public call is serialized on an internal mutex.
class Store {
public:
    explicit Store(const std::string& path);
    ~Store();
    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    int schema_version() const;
    // Creates or upgrades the schema; a no-op when already current.
    void migrate();

    // Called before every statement that writes during commit_iteration; tests
    // inject failures through it. The argument counts write boundaries from 0.
    void set_write_hook(std::function<void(std::size_t)> hook);

    // -- catalog
    void ensure_node(const NodeId& node);
    std::int64_t ensure_path(const std::string& path);
    void add_audios(std::span<const AudioRecord> audios);
    std::optional<AudioRecord> audio(const AudioId& id) const;
    Catalog load_catalog(const std::optional<NodeId>& node = std::nullopt) const;
    std::size_t audio_count() const;

    // Declares the catalog-wide embedding dimension on first use.
    void put_embeddings(std::span<const EmbeddingRecord> records);
    std::optional<std::size_t> embedding_dim() const;
    // Throws MissingSidecar for ids without stored embeddings.
    std::vector<EmbeddingRecord> embeddings(std::span<const AudioId> ids) const;

    // -- ontology and labelers
    Ontology load_ontology() const;
    ClassId add_class(const std::string& name, ClassOrigin origin = ClassOrigin::seed, IterationId available_from = 0);
    void add_labeler(const LabelerId& labeler, GroupId group);
    std::vector<LabelerGroup> groups() const;
    std::optional<GroupId> group_of(const LabelerId& labeler) const;

    Suggestion add_suggestion(const LabelerId& labeler, const std::string& name);
    Suggestion approve_suggestion(std::int64_t suggestion_id, IterationId available_from);
    std::vector<Suggestion> suggestions() const;

    // -- AL iterations
    IterationId next_iteration_id() const;
    IterationId latest_iteration_id() const;
    bool has_iteration(IterationId id) const;
    // One ALPreprocessing row plus one WavsProposed row per proposal, atomically.
    // Replaying an already stored id leaves the store untouched.
    IterationId commit_iteration(const IterationRecord& record);
    std::optional<IterationRecord> load_iteration(IterationId id) const;
    std::vector<IterationId> iteration_ids() const;
    std::vector<ProposalRow> proposals(IterationId iteration) const;
    std::optional<ProposalRow> proposal_for(const AudioId& audio) const;
    AudioSet proposed_audios() const;

    std::optional<StoredPlan> latest_plan(const NodeId& node, Timestamp start, Timestamp end) const;

    // -- annotations
    // All-or-nothing append; refreshes labeler_count and agreement_pct of the
    // affected proposals.
    std::size_t record_annotations(std::span<const ChunkAnnotation> batch, IterationId iteration = 0);
    std::vector<StoredChunk> chunks_for_audio(const AudioId& audio) const;
    std::vector<StoredChunk> chunks_by_labeler(const LabelerId& labeler) const;
    std::optional<StoredChunk> chunk(ChunkId id) const;
    // Marks a Doubt chunk resolved and appends its replacements in one transaction.
    std::size_t resolve_doubt(ChunkId doubt_chunk, std::span<const ChunkAnnotation> replacements, IterationId iteration);
    std::size_t chunk_count() const;

    // -- medoid registry
    // Applies all promotions atomically; entries without a class are skipped.
    void promote(std::span<const std::pair<AudioId, ClassId>> promotions, IterationId iteration);
    std::vector<MedoidRow> medoids() const;
    AudioSet labeled_ids() const;

    std::vector<TagCount> tag_frequency_histogram(const HistogramFilter& filter = {}) const;

    // Tab-separated dump of one table for audits.
    void export_table(const std::string& table, std::ostream& out) const;
    static const std::vector<std::string>& table_names();
    std::size_t row_count(const std::string& table) const;
    // Number of foreign-key violations across all tables.
    std::size_t foreign_key_violations() const;

    WindowLease try_acquire_window(const NodeId& node, Timestamp start, Timestamp end);

    const std::string& path() const noexcept { return path_; }

private:
    class Statement;
    void exec(const std::string& sql) const;
    void refresh_agreement(const AudioId& audio);
    template <typename F>
    auto in_transaction(F&& body);

    std::string path_;
    sqlite3* db_ = nullptr;
    mutable std::recursive_mutex mutex_;
    std::function<void(std::size_t)> write_hook_;
    int tx_depth_ = 0;
    std::mutex windows_mutex_;
    std::map<std::string, std::unique_ptr<std::mutex>> window_locks_;
};

}  // namespace alab
