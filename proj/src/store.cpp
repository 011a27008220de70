#include "alab/store.hpp"

#include "alab/consensus.hpp"
#include "alab/ingestion.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <ostream>
#include <set>

namespace alab {

namespace {

// Schema at version 1. Table and column names follow the two databases of the
// labeling framework: the audio database and the AL bookkeeping database.
constexpr const char* kSchemaV1 = R"sql(
CREATE TABLE Projects (
    id INTEGER PRIMARY KEY,
    name TEXT NOT NULL UNIQUE
);
CREATE TABLE Sources (
    id INTEGER PRIMARY KEY,
    project_id INTEGER NOT NULL REFERENCES Projects(id),
    name TEXT NOT NULL
);
CREATE TABLE NodeTypes (
    id INTEGER PRIMARY KEY,
    name TEXT NOT NULL UNIQUE
);
CREATE TABLE Nodes (
    id TEXT PRIMARY KEY,
    source_id INTEGER NOT NULL REFERENCES Sources(id),
    node_type_id INTEGER NOT NULL REFERENCES NodeTypes(id)
);
CREATE TABLE Paths (
    id INTEGER PRIMARY KEY,
    path TEXT NOT NULL UNIQUE
);
CREATE TABLE Ontology (
    id INTEGER PRIMARY KEY,
    name TEXT NOT NULL,
    origin TEXT NOT NULL CHECK (origin IN ('seed', 'suggested')),
    active INTEGER NOT NULL DEFAULT 1,
    available_from INTEGER NOT NULL DEFAULT 0
);
CREATE UNIQUE INDEX ontology_active_name ON Ontology(name) WHERE active = 1;
CREATE TABLE Labelers (
    id TEXT PRIMARY KEY,
    group_id INTEGER NOT NULL
);
CREATE TABLE Audios (
    id TEXT PRIMARY KEY,
    path_id INTEGER NOT NULL REFERENCES Paths(id),
    node_id TEXT NOT NULL REFERENCES Nodes(id),
    filename TEXT NOT NULL,
    recorded_at INTEGER NOT NULL,
    sampling_rate INTEGER NOT NULL,
    bits_per_sample INTEGER NOT NULL,
    duration REAL NOT NULL CHECK (duration > 0),
    channels INTEGER NOT NULL,
    UNIQUE (node_id, filename)
);
CREATE INDEX audios_node_time ON Audios(node_id, recorded_at);
CREATE TABLE Embeddings (
    audio_id TEXT PRIMARY KEY REFERENCES Audios(id),
    top1_class INTEGER NOT NULL,
    top1_prob REAL NOT NULL CHECK (top1_prob >= 0 AND top1_prob <= 1),
    vector BLOB NOT NULL
);
CREATE TABLE Meta (
    key TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE ALPreprocessing (
    id INTEGER PRIMARY KEY,
    node_id TEXT NOT NULL REFERENCES Nodes(id),
    window_start INTEGER NOT NULL,
    window_end INTEGER NOT NULL,
    audio_count INTEGER NOT NULL,
    fold_count INTEGER NOT NULL,
    created_at INTEGER NOT NULL,
    labeled_pct REAL NOT NULL,
    labeled_count INTEGER NOT NULL,
    unlabeled_count INTEGER NOT NULL,
    n_ds INTEGER NOT NULL,
    processed_set INTEGER NOT NULL,
    plan_id INTEGER REFERENCES DisjointPlans(id),
    path TEXT NOT NULL,
    budget INTEGER NOT NULL,
    tier_window INTEGER NOT NULL,
    tier_node INTEGER NOT NULL,
    tier_other INTEGER NOT NULL,
    mismatch_count INTEGER NOT NULL,
    classifier_accuracy REAL NOT NULL,
    classifier_iterations INTEGER NOT NULL
);
CREATE TABLE WavsProposed (
    id INTEGER PRIMARY KEY,
    iteration_id INTEGER NOT NULL REFERENCES ALPreprocessing(id),
    audio_id TEXT NOT NULL UNIQUE REFERENCES Audios(id),
    rank INTEGER NOT NULL,
    provenance TEXT NOT NULL,
    group_id INTEGER NOT NULL,
    label INTEGER REFERENCES Ontology(id),
    labeler_count INTEGER NOT NULL DEFAULT 0,
    agreement_pct REAL NOT NULL DEFAULT 0,
    filename TEXT NOT NULL,
    node_id TEXT NOT NULL REFERENCES Nodes(id),
    UNIQUE (iteration_id, rank)
);
CREATE TABLE IterationMembers (
    iteration_id INTEGER NOT NULL REFERENCES ALPreprocessing(id),
    audio_id TEXT NOT NULL REFERENCES Audios(id),
    PRIMARY KEY (iteration_id, audio_id)
);
CREATE TABLE IterationMedoids (
    iteration_id INTEGER NOT NULL REFERENCES ALPreprocessing(id),
    position INTEGER NOT NULL,
    audio_id TEXT NOT NULL REFERENCES Audios(id),
    class_id INTEGER NOT NULL REFERENCES Ontology(id),
    PRIMARY KEY (iteration_id, position)
);
CREATE TABLE DisjointPlans (
    id INTEGER PRIMARY KEY,
    node_id TEXT NOT NULL REFERENCES Nodes(id),
    window_start INTEGER NOT NULL,
    window_end INTEGER NOT NULL,
    n_ds INTEGER NOT NULL
);
CREATE TABLE DisjointSetMembers (
    plan_id INTEGER NOT NULL REFERENCES DisjointPlans(id),
    set_index INTEGER NOT NULL,
    audio_id TEXT NOT NULL REFERENCES Audios(id),
    PRIMARY KEY (plan_id, audio_id)
);
CREATE TABLE Chunks (
    id INTEGER PRIMARY KEY AUTOINCREMENT,
    audio_id TEXT NOT NULL REFERENCES Audios(id),
    class_id INTEGER NOT NULL REFERENCES Ontology(id),
    labeler_id TEXT NOT NULL REFERENCES Labelers(id),
    onset REAL NOT NULL,
    offset REAL NOT NULL,
    iteration_id INTEGER REFERENCES ALPreprocessing(id),
    resolved INTEGER NOT NULL DEFAULT 0,
    resolves_chunk_id INTEGER REFERENCES Chunks(id),
    CHECK (onset >= 0 AND onset < offset)
);
CREATE INDEX chunks_audio ON Chunks(audio_id);
CREATE INDEX chunks_labeler ON Chunks(labeler_id);
CREATE TABLE Medoids (
    audio_id TEXT PRIMARY KEY REFERENCES Audios(id),
    class_id INTEGER NOT NULL REFERENCES Ontology(id),
    iteration_id INTEGER NOT NULL REFERENCES ALPreprocessing(id),
    seq INTEGER NOT NULL
);
CREATE TABLE Suggestions (
    id INTEGER PRIMARY KEY,
    name TEXT NOT NULL UNIQUE,
    approved INTEGER NOT NULL DEFAULT 0,
    class_id INTEGER REFERENCES Ontology(id)
);
CREATE TABLE SuggestionCredits (
    suggestion_id INTEGER NOT NULL REFERENCES Suggestions(id),
    labeler_id TEXT NOT NULL REFERENCES Labelers(id),
    PRIMARY KEY (suggestion_id, labeler_id)
);
INSERT INTO Projects (id, name) VALUES (1, 'default');
INSERT INTO Sources (id, project_id, name) VALUES (1, 1, 'default');
INSERT INTO NodeTypes (id, name) VALUES (1, 'mains'), (2, 'solar');
INSERT INTO Ontology (id, name, origin, active, available_from) VALUES (0, 'Doubt', 'seed', 1, 0);
)sql";

[[noreturn]] void fail(sqlite3* db, const std::string& what) {
    throw Error(ErrorKind::PersistenceFailure, what + ": " + (db ? sqlite3_errmsg(db) : "no database"));
}

std::int64_t seconds_of(Timestamp t) { return t.time_since_epoch().count(); }
Timestamp timestamp_of(std::int64_t s) { return Timestamp{std::chrono::seconds{s}}; }

std::string pack_vector(const Eigen::VectorXf& v) {
    std::string blob(std::size_t(v.size()) * 4, '\0');
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(v[i]);
        for (int b = 0; b < 4; ++b) blob[std::size_t(i) * 4 + std::size_t(b)] = char((bits >> (8 * b)) & 0xff);
    }
    return blob;
}

Eigen::VectorXf unpack_vector(const void* data, int bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    Eigen::VectorXf v(bytes / 4);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= std::uint32_t(p[i * 4 + b]) << (8 * b);
        v[i] = std::bit_cast<float>(bits);
    }
    return v;
}

std::string window_key(const NodeId& node, Timestamp start, Timestamp end) {
    return node.str() + "|" + std::to_string(seconds_of(start)) + "|" + std::to_string(seconds_of(end));
}

}  // namespace

class Store::Statement {
public:
    Statement(sqlite3* db, const std::string& sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql.c_str(), int(sql.size()), &stmt_, nullptr) != SQLITE_OK)
            fail(db, "prepare failed for `" + sql + "`");
    }
    ~Statement() { sqlite3_finalize(stmt_); }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;

    Statement& bind(int i, std::int64_t v) { return check(sqlite3_bind_int64(stmt_, i, v)); }
    Statement& bind(int i, int v) { return bind(i, std::int64_t(v)); }
    Statement& bind(int i, std::size_t v) { return bind(i, std::int64_t(v)); }
    Statement& bind(int i, std::uint32_t v) { return bind(i, std::int64_t(v)); }
    Statement& bind(int i, double v) { return check(sqlite3_bind_double(stmt_, i, v)); }
    Statement& bind(int i, const std::string& v) {
        return check(sqlite3_bind_text(stmt_, i, v.data(), int(v.size()), SQLITE_TRANSIENT));
    }
    Statement& bind_blob(int i, const std::string& v) {
        return check(sqlite3_bind_blob(stmt_, i, v.data(), int(v.size()), SQLITE_TRANSIENT));
    }
    Statement& bind_null(int i) { return check(sqlite3_bind_null(stmt_, i)); }
    template <typename T>
    Statement& bind(int i, const std::optional<T>& v) {
        return v ? bind(i, *v) : bind_null(i);
    }

    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        const int ext = sqlite3_extended_errcode(db_);
        sqlite3_reset(stmt_);
        throw Error(ErrorKind::PersistenceFailure,
                    std::string("statement failed (") + std::to_string(ext) + "): " + sqlite3_errmsg(db_));
    }
    void run() {
        while (step()) {
        }
        reset();
    }
    void reset() {
        sqlite3_reset(stmt_);
        sqlite3_clear_bindings(stmt_);
    }

    std::int64_t int64(int c) const { return sqlite3_column_int64(stmt_, c); }
    double real(int c) const { return sqlite3_column_double(stmt_, c); }
    bool null(int c) const { return sqlite3_column_type(stmt_, c) == SQLITE_NULL; }
    std::string text(int c) const {
        const auto* p = sqlite3_column_text(stmt_, c);
        return p ? std::string(reinterpret_cast<const char*>(p), std::size_t(sqlite3_column_bytes(stmt_, c))) : "";
    }
    Eigen::VectorXf vector(int c) const { return unpack_vector(sqlite3_column_blob(stmt_, c), sqlite3_column_bytes(stmt_, c)); }
    int columns() const { return sqlite3_column_count(stmt_); }
    std::string column_name(int c) const { return sqlite3_column_name(stmt_, c); }
    int column_type(int c) const { return sqlite3_column_type(stmt_, c); }

private:
    Statement& check(int rc) {
        if (rc != SQLITE_OK) fail(db_, "bind failed");
        return *this;
    }
    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

Store::Store(const std::string& path) : path_(path) {
    if (sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                        nullptr) != SQLITE_OK) {
        std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        db_ = nullptr;
        throw Error(ErrorKind::PersistenceFailure, "cannot open store " + path + ": " + msg);
    }
    sqlite3_busy_timeout(db_, 5000);
    exec("PRAGMA foreign_keys = ON");
    if (path != ":memory:") exec("PRAGMA journal_mode = WAL");
}

Store::~Store() {
    if (db_) sqlite3_close_v2(db_);
}

void Store::exec(const std::string& sql) const {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown error";
        sqlite3_free(err);
        throw Error(ErrorKind::PersistenceFailure, msg);
    }
}

template <typename F>
auto Store::in_transaction(F&& body) {
    std::lock_guard lock(mutex_);
    if (tx_depth_ > 0) return body();
    exec("BEGIN IMMEDIATE");
    struct Depth {
        int& d;
        explicit Depth(int& x) : d(x) { ++d; }
        ~Depth() { --d; }
    } depth(tx_depth_);
    try {
        if constexpr (std::is_void_v<decltype(body())>) {
            body();
            exec("COMMIT");
        } else {
            auto result = body();
            exec("COMMIT");
            return result;
        }
    } catch (const Error&) {
        sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
        throw;
    } catch (const std::exception& e) {
        sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
        throw Error(ErrorKind::PersistenceFailure, std::string("transaction aborted: ") + e.what());
    }
}

int Store::schema_version() const {
    std::lock_guard lock(mutex_);
    Statement s(db_, "PRAGMA user_version");
    s.step();
    return int(s.int64(0));
}

void Store::migrate() {
    std::lock_guard lock(mutex_);
    const int version = schema_version();
    if (version > kSchemaVersion)
        throw Error(ErrorKind::IncompatibleVersion, "store schema version " + std::to_string(version) +
                                                        " is newer than supported version " +
                                                        std::to_string(kSchemaVersion));
    if (version == kSchemaVersion) return;
    in_transaction([&] {
        exec(kSchemaV1);
        exec("PRAGMA user_version = " + std::to_string(kSchemaVersion));
    });
}

void Store::set_write_hook(std::function<void(std::size_t)> hook) {
    std::lock_guard lock(mutex_);
    write_hook_ = std::move(hook);
}

void Store::ensure_node(const NodeId& node) {
    std::lock_guard lock(mutex_);
    Statement s(db_, "INSERT OR IGNORE INTO Nodes (id, source_id, node_type_id) VALUES (?, 1, 1)");
    s.bind(1, node.str()).run();
}

std::int64_t Store::ensure_path(const std::string& path) {
    std::lock_guard lock(mutex_);
    Statement ins(db_, "INSERT OR IGNORE INTO Paths (path) VALUES (?)");
    ins.bind(1, path).run();
    Statement sel(db_, "SELECT id FROM Paths WHERE path = ?");
    sel.bind(1, path);
    sel.step();
    return sel.int64(0);
}

void Store::add_audios(std::span<const AudioRecord> audios) {
    in_transaction([&] {
        std::set<NodeId> nodes;
        for (const auto& a : audios) nodes.insert(a.node_id);
        for (const auto& n : nodes) ensure_node(n);
        Statement s(db_,
                    "INSERT INTO Audios (id, path_id, node_id, filename, recorded_at, sampling_rate, "
                    "bits_per_sample, duration, channels) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?) "
                    "ON CONFLICT(id) DO NOTHING");
        for (const auto& a : audios) {
            if (!(a.duration > 0)) throw Error(ErrorKind::InvalidArgument, "audio duration must be positive");
            s.bind(1, a.audio_id.str())
                .bind(2, a.path_id)
                .bind(3, a.node_id.str())
                .bind(4, a.filename)
                .bind(5, seconds_of(a.recorded_at))
                .bind(6, a.sampling_rate)
                .bind(7, a.bits_per_sample)
                .bind(8, a.duration)
                .bind(9, a.channels)
                .run();
        }
    });
}

namespace {

AudioRecord read_audio_row(const auto& s) {
    AudioRecord a;
    a.audio_id = AudioId{s.text(0)};
    a.path_id = s.int64(1);
    a.node_id = NodeId{s.text(2)};
    a.filename = s.text(3);
    a.recorded_at = timestamp_of(s.int64(4));
    a.sampling_rate = std::uint32_t(s.int64(5));
    a.bits_per_sample = std::uint32_t(s.int64(6));
    a.duration = s.real(7);
    a.channels = std::uint32_t(s.int64(8));
    return a;
}

constexpr const char* kAudioColumns =
    "id, path_id, node_id, filename, recorded_at, sampling_rate, bits_per_sample, duration, channels";

}  // namespace

std::optional<AudioRecord> Store::audio(const AudioId& id) const {
    std::lock_guard lock(mutex_);
    Statement s(db_, std::string("SELECT ") + kAudioColumns + " FROM Audios WHERE id = ?");
    s.bind(1, id.str());
    if (!s.step()) return std::nullopt;
    return read_audio_row(s);
}

Catalog Store::load_catalog(const std::optional<NodeId>& node) const {
    std::lock_guard lock(mutex_);
    Catalog catalog;
    {
        Statement s(db_, "SELECT id FROM Nodes");
        while (s.step()) catalog.nodes.insert(NodeId{s.text(0)});
    }
    Statement s(db_, std::string("SELECT ") + kAudioColumns + " FROM Audios" +
                         (node ? " WHERE node_id = ? ORDER BY id" : " ORDER BY id"));
    if (node) s.bind(1, node->str());
    while (s.step()) catalog.audios.push_back(read_audio_row(s));
    return catalog;
}

std::size_t Store::audio_count() const { return row_count("Audios"); }

void Store::put_embeddings(std::span<const EmbeddingRecord> records) {
    if (records.empty()) return;
    in_transaction([&] {
        auto dim = embedding_dim();
        const auto d = std::size_t(records.front().vector.size());
        if (!dim) {
            Statement m(db_, "INSERT INTO Meta (key, value) VALUES ('embedding_dim', ?)");
            m.bind(1, std::to_string(d)).run();
            dim = d;
        }
        Statement s(db_,
                    "INSERT INTO Embeddings (audio_id, top1_class, top1_prob, vector) VALUES (?, ?, ?, ?) "
                    "ON CONFLICT(audio_id) DO UPDATE SET top1_class = excluded.top1_class, "
                    "top1_prob = excluded.top1_prob, vector = excluded.vector");
        for (const auto& r : records) {
            check_embedding(r, Eigen::Index(*dim));
            s.bind(1, r.audio_id.str()).bind(2, r.top1_class).bind(3, double(r.top1_prob)).bind_blob(4, pack_vector(r.vector));
            try {
                s.run();
            } catch (const Error&) {
                throw Error(ErrorKind::UnknownAudio, "embedding for uncataloged audio " + r.audio_id.str());
            }
        }
    });
}

std::optional<std::size_t> Store::embedding_dim() const {
    std::lock_guard lock(mutex_);
    Statement s(db_, "SELECT value FROM Meta WHERE key = 'embedding_dim'");
    if (!s.step()) return std::nullopt;
    return std::size_t(std::stoull(s.text(0)));
}

std::vector<EmbeddingRecord> Store::embeddings(std::span<const AudioId> ids) const {
    std::lock_guard lock(mutex_);
    std::vector<EmbeddingRecord> out;
    out.reserve(ids.size());
    Statement s(db_, "SELECT top1_class, top1_prob, vector FROM Embeddings WHERE audio_id = ?");
    for (const auto& id : ids) {
        s.bind(1, id.str());
        if (!s.step()) {
            s.reset();
            throw Error(ErrorKind::MissingSidecar, "no embedding stored for " + id.str());
        }
        EmbeddingRecord r;
        r.audio_id = id;
        r.top1_class = ClassId(s.int64(0));
        r.top1_prob = float(s.real(1));
        r.vector = s.vector(2);
        out.push_back(std::move(r));
        s.reset();
    }
    return out;
}

Ontology Store::load_ontology() const {
    std::lock_guard lock(mutex_);
    Ontology ontology;
    Statement s(db_, "SELECT id, name, origin, active, available_from FROM Ontology ORDER BY id");
    while (s.step()) {
        OntologyClass c;
        c.class_id = ClassId(s.int64(0));
        c.name = s.text(1);
        c.origin = s.text(2) == "suggested" ? ClassOrigin::suggested : ClassOrigin::seed;
        c.active = s.int64(3) != 0;
        c.available_from = s.int64(4);
        ontology.insert(std::move(c));
    }
    return ontology;
}

ClassId Store::add_class(const std::string& name, ClassOrigin origin, IterationId available_from) {
    return in_transaction([&] {
        if (name.empty()) throw Error(ErrorKind::InvalidArgument, "class name must be non-empty");
        Statement dup(db_, "SELECT id FROM Ontology WHERE name = ? AND active = 1");
        dup.bind(1, name);
        if (dup.step()) throw Error(ErrorKind::DuplicateName, "class already active: " + name);
        Statement s(db_, "INSERT INTO Ontology (id, name, origin, active, available_from) VALUES "
                         "((SELECT COALESCE(MAX(id), 0) + 1 FROM Ontology), ?, ?, 1, ?)");
        s.bind(1, name).bind(2, std::string(origin == ClassOrigin::seed ? "seed" : "suggested")).bind(3, available_from);
        s.run();
        return ClassId(sqlite3_last_insert_rowid(db_));
    });
}

void Store::add_labeler(const LabelerId& labeler, GroupId group) {
    std::lock_guard lock(mutex_);
    Statement s(db_, "INSERT INTO Labelers (id, group_id) VALUES (?, ?) "
                     "ON CONFLICT(id) DO UPDATE SET group_id = excluded.group_id");
    s.bind(1, labeler.str()).bind(2, group).run();
}

std::vector<LabelerGroup> Store::groups() const {
    std::lock_guard lock(mutex_);
    std::map<GroupId, LabelerGroup> by_id;
    Statement s(db_, "SELECT id, group_id FROM Labelers");
    while (s.step()) {
        auto& g = by_id[s.int64(1)];
        g.group_id = s.int64(1);
        g.labeler_ids.insert(LabelerId{s.text(0)});
    }
    std::vector<LabelerGroup> out;
    for (auto& [_, g] : by_id) out.push_back(std::move(g));
    return out;
}

std::optional<GroupId> Store::group_of(const LabelerId& labeler) const {
    std::lock_guard lock(mutex_);
    Statement s(db_, "SELECT group_id FROM Labelers WHERE id = ?");
    s.bind(1, labeler.str());
    if (!s.step()) return std::nullopt;
    return s.int64(0);
}

namespace {

Suggestion read_suggestion(sqlite3* db, std::int64_t id, auto make_statement) {
    Suggestion out;
    auto s = make_statement("SELECT id, name, approved, class_id FROM Suggestions WHERE id = ?");
    s->bind(1, id);
    if (!s->step()) throw Error(ErrorKind::InvalidArgument, "unknown suggestion " + std::to_string(id));
    out.id = s->int64(0);
    out.name = s->text(1);
    out.approved = s->int64(2) != 0;
    if (!s->null(3)) out.class_id = ClassId(s->int64(3));
    auto c = make_statement("SELECT labeler_id FROM SuggestionCredits WHERE suggestion_id = ? ORDER BY labeler_id");
    c->bind(1, id);
    while (c->step()) out.credited.push_back(LabelerId{c->text(0)});
    (void)db;
    return out;
}

}  // namespace

Suggestion Store::add_suggestion(const LabelerId& labeler, const std::string& name) {
    auto make = [&](const std::string& sql) { return std::make_unique<Statement>(db_, sql); };
    return in_transaction([&] {
        if (name.empty()) throw Error(ErrorKind::InvalidArgument, "suggested name must be non-empty");
        if (!group_of(labeler)) throw Error(ErrorKind::UnknownLabeler, "unknown labeler " + labeler.str());
        Statement active(db_, "SELECT id FROM Ontology WHERE name = ? AND active = 1");
        active.bind(1, name);
        if (active.step()) throw Error(ErrorKind::DuplicateName, "class already active: " + name);
        Statement ins(db_, "INSERT OR IGNORE INTO Suggestions (name) VALUES (?)");
        ins.bind(1, name).run();
        Statement sel(db_, "SELECT id FROM Suggestions WHERE name = ?");
        sel.bind(1, name);
        sel.step();
        const auto id = sel.int64(0);
        Statement credit(db_, "INSERT OR IGNORE INTO SuggestionCredits (suggestion_id, labeler_id) VALUES (?, ?)");
        credit.bind(1, id).bind(2, labeler.str()).run();
        return read_suggestion(db_, id, make);
    });
}

Suggestion Store::approve_suggestion(std::int64_t suggestion_id, IterationId available_from) {
    auto make = [&](const std::string& sql) { return std::make_unique<Statement>(db_, sql); };
    return in_transaction([&] {
        auto current = read_suggestion(db_, suggestion_id, make);
        if (current.approved) return current;
        const ClassId cls = add_class(current.name, ClassOrigin::suggested, available_from);
        Statement s(db_, "UPDATE Suggestions SET approved = 1, class_id = ? WHERE id = ?");
        s.bind(1, cls).bind(2, suggestion_id).run();
        return read_suggestion(db_, suggestion_id, make);
    });
}

std::vector<Suggestion> Store::suggestions() const {
    std::lock_guard lock(mutex_);
    auto make = [&](const std::string& sql) { return std::make_unique<Statement>(db_, sql); };
    std::vector<std::int64_t> ids;
    {
        Statement s(db_, "SELECT id FROM Suggestions ORDER BY id");
        while (s.step()) ids.push_back(s.int64(0));
    }
    std::vector<Suggestion> out;
    for (auto id : ids) out.push_back(read_suggestion(db_, id, make));
    return out;
}

IterationId Store::next_iteration_id() const { return latest_iteration_id() + 1; }

IterationId Store::latest_iteration_id() const {
    std::lock_guard lock(mutex_);
    Statement s(db_, "SELECT COALESCE(MAX(id), 0) FROM ALPreprocessing");
    s.step();
    return s.int64(0);
}

bool Store::has_iteration(IterationId id) const {
    std::lock_guard lock(mutex_);
    Statement s(db_, "SELECT 1 FROM ALPreprocessing WHERE id = ?");
    s.bind(1, id);
    return s.step();
}

std::vector<IterationId> Store::iteration_ids() const {
    std::lock_guard lock(mutex_);
    std::vector<IterationId> out;
    Statement s(db_, "SELECT id FROM ALPreprocessing ORDER BY id");
    while (s.step()) out.push_back(s.int64(0));
    return out;
}

IterationId Store::commit_iteration(const IterationRecord& r) {
    if (r.iteration_id <= 0) throw Error(ErrorKind::InvalidArgument, "iteration id must be positive");
    if (r.assigned_group.size() != r.batch.proposals.size())
        throw Error(ErrorKind::InvalidArgument, "group assignment must cover every proposal");
    std::lock_guard lock(mutex_);
    if (has_iteration(r.iteration_id)) return r.iteration_id;

    std::size_t boundary = 0;
    auto write = [&](Statement& s) {
        if (write_hook_) write_hook_(boundary);
        ++boundary;
        s.run();
    };
    in_transaction([&] {
        std::optional<std::int64_t> plan_id;
        if (r.plan_id > 0) plan_id = r.plan_id;
        if (r.new_plan_sets) {
            Statement p(db_, "INSERT INTO DisjointPlans (node_id, window_start, window_end, n_ds) VALUES (?, ?, ?, ?)");
            p.bind(1, r.node_id.str()).bind(2, seconds_of(r.window_start)).bind(3, seconds_of(r.window_end))
                .bind(4, r.new_plan_sets->size());
            write(p);
            plan_id = std::int64_t(sqlite3_last_insert_rowid(db_));
            Statement m(db_, "INSERT INTO DisjointSetMembers (plan_id, set_index, audio_id) VALUES (?, ?, ?)");
            for (std::size_t j = 0; j < r.new_plan_sets->size(); ++j)
                for (const auto& id : (*r.new_plan_sets)[j]) {
                    m.bind(1, *plan_id).bind(2, j).bind(3, id.str());
                    write(m);
                }
        }
        Statement a(db_,
                    "INSERT INTO ALPreprocessing (id, node_id, window_start, window_end, audio_count, fold_count, "
                    "created_at, labeled_pct, labeled_count, unlabeled_count, n_ds, processed_set, plan_id, path, "
                    "budget, tier_window, tier_node, tier_other, mismatch_count, classifier_accuracy, "
                    "classifier_iterations) VALUES (?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?, ?)");
        a.bind(1, r.iteration_id)
            .bind(2, r.node_id.str())
            .bind(3, seconds_of(r.window_start))
            .bind(4, seconds_of(r.window_end))
            .bind(5, r.window_count)
            .bind(6, r.fold_count)
            .bind(7, seconds_of(r.created_at))
            .bind(8, r.labeled_pct)
            .bind(9, r.labeled_count)
            .bind(10, r.unlabeled_count)
            .bind(11, r.n_ds)
            .bind(12, r.processed_set)
            .bind(13, plan_id)
            .bind(14, std::string(to_string(r.path)))
            .bind(15, r.batch.budget)
            .bind(16, r.medoid_tiers[0])
            .bind(17, r.medoid_tiers[1])
            .bind(18, r.medoid_tiers[2])
            .bind(19, r.mismatch_count)
            .bind(20, r.classifier_train_accuracy)
            .bind(21, r.classifier_iterations);
        write(a);

        Statement mem(db_, "INSERT INTO IterationMembers (iteration_id, audio_id) VALUES (?, ?)");
        for (const auto& id : r.processed) {
            mem.bind(1, r.iteration_id).bind(2, id.str());
            write(mem);
        }
        Statement med(db_, "INSERT INTO IterationMedoids (iteration_id, position, audio_id, class_id) VALUES (?, ?, ?, ?)");
        for (std::size_t i = 0; i < r.medoids.size(); ++i) {
            med.bind(1, r.iteration_id).bind(2, i).bind(3, r.medoids[i].audio_id.str()).bind(4, r.medoids[i].class_id);
            write(med);
        }
        Statement wp(db_,
                     "INSERT INTO WavsProposed (iteration_id, audio_id, rank, provenance, group_id, filename, node_id) "
                     "SELECT ?, id, ?, ?, ?, filename, node_id FROM Audios WHERE id = ?");
        for (std::size_t i = 0; i < r.batch.proposals.size(); ++i) {
            const auto& p = r.batch.proposals[i];
            wp.bind(1, r.iteration_id)
                .bind(2, i)
                .bind(3, std::string(to_string(p.provenance)))
                .bind(4, r.assigned_group[i])
                .bind(5, p.audio_id.str());
            write(wp);
            if (sqlite3_changes(db_) != 1)
                throw Error(ErrorKind::UnknownAudio, "proposed audio not in catalog: " + p.audio_id.str());
        }
    });
    return r.iteration_id;
}

std::optional<IterationRecord> Store::load_iteration(IterationId id) const {
    std::lock_guard lock(mutex_);
    Statement s(db_,
                "SELECT node_id, window_start, window_end, audio_count, fold_count, created_at, labeled_pct, "
                "labeled_count, unlabeled_count, n_ds, processed_set, COALESCE(plan_id, 0), path, budget, "
                "tier_window, tier_node, tier_other, mismatch_count, classifier_accuracy, classifier_iterations "
                "FROM ALPreprocessing WHERE id = ?");
    s.bind(1, id);
    if (!s.step()) return std::nullopt;
    IterationRecord r;
    r.iteration_id = id;
    r.node_id = NodeId{s.text(0)};
    r.window_start = timestamp_of(s.int64(1));
    r.window_end = timestamp_of(s.int64(2));
    r.window_count = std::size_t(s.int64(3));
    r.fold_count = std::size_t(s.int64(4));
    r.created_at = timestamp_of(s.int64(5));
    r.labeled_pct = s.real(6);
    r.labeled_count = std::size_t(s.int64(7));
    r.unlabeled_count = std::size_t(s.int64(8));
    r.n_ds = std::size_t(s.int64(9));
    r.processed_set = std::size_t(s.int64(10));
    r.plan_id = s.int64(11);
    r.path = iteration_path_from_string(s.text(12));
    r.batch.iteration_id = id;
    r.batch.budget = std::size_t(s.int64(13));
    r.medoid_tiers = {std::size_t(s.int64(14)), std::size_t(s.int64(15)), std::size_t(s.int64(16))};
    r.mismatch_count = std::size_t(s.int64(17));
    r.classifier_train_accuracy = s.real(18);
    r.classifier_iterations = int(s.int64(19));

    Statement mem(db_, "SELECT audio_id FROM IterationMembers WHERE iteration_id = ? ORDER BY audio_id");
    mem.bind(1, id);
    while (mem.step()) r.processed.emplace_back(mem.text(0));
    Statement med(db_, "SELECT audio_id, class_id FROM IterationMedoids WHERE iteration_id = ? ORDER BY position");
    med.bind(1, id);
    while (med.step()) r.medoids.push_back(MedoidUse{AudioId{med.text(0)}, ClassId(med.int64(1))});
    Statement wp(db_, "SELECT audio_id, provenance, group_id FROM WavsProposed WHERE iteration_id = ? ORDER BY rank");
    wp.bind(1, id);
    while (wp.step()) {
        r.batch.proposals.push_back(Proposal{AudioId{wp.text(0)}, provenance_from_string(wp.text(1))});
        r.assigned_group.push_back(wp.int64(2));
    }
    return r;
}

namespace {

constexpr const char* kProposalColumns =
    "id, iteration_id, audio_id, rank, provenance, group_id, label, labeler_count, agreement_pct, filename, node_id";

ProposalRow read_proposal(const auto& s) {
    ProposalRow p;
    p.id = s.int64(0);
    p.iteration_id = s.int64(1);
    p.audio_id = AudioId{s.text(2)};
    p.rank = std::size_t(s.int64(3));
    p.provenance = provenance_from_string(s.text(4));
    p.group_id = s.int64(5);
    if (!s.null(6)) p.label = ClassId(s.int64(6));
    p.labeler_count = std::size_t(s.int64(7));
    p.agreement_pct = s.real(8);
    p.filename = s.text(9);
    p.node_id = NodeId{s.text(10)};
    return p;
}

}  // namespace

std::vector<ProposalRow> Store::proposals(IterationId iteration) const {
    std::lock_guard lock(mutex_);
    if (!has_iteration(iteration))
        throw Error(ErrorKind::UnknownIteration, "unknown iteration " + std::to_string(iteration));
    std::vector<ProposalRow> out;
    Statement s(db_, std::string("SELECT ") + kProposalColumns + " FROM WavsProposed WHERE iteration_id = ? ORDER BY rank");
    s.bind(1, iteration);
    while (s.step()) out.push_back(read_proposal(s));
    return out;
}

std::optional<ProposalRow> Store::proposal_for(const AudioId& audio) const {
    std::lock_guard lock(mutex_);
    Statement s(db_, std::string("SELECT ") + kProposalColumns + " FROM WavsProposed WHERE audio_id = ?");
    s.bind(1, audio.str());
    if (!s.step()) return std::nullopt;
    return read_proposal(s);
}

AudioSet Store::proposed_audios() const {
    std::lock_guard lock(mutex_);
    AudioSet out;
    Statement s(db_, "SELECT audio_id FROM WavsProposed");
    while (s.step()) out.insert(AudioId{s.text(0)});
    return out;
}

std::optional<StoredPlan> Store::latest_plan(const NodeId& node, Timestamp start, Timestamp end) const {
    std::lock_guard lock(mutex_);
    Statement s(db_, "SELECT id, n_ds FROM DisjointPlans WHERE node_id = ? AND window_start = ? AND window_end = ? "
                     "ORDER BY id DESC LIMIT 1");
    s.bind(1, node.str()).bind(2, seconds_of(start)).bind(3, seconds_of(end));
    if (!s.step()) return std::nullopt;
    StoredPlan plan;
    plan.plan_id = s.int64(0);
    plan.sets.resize(std::size_t(s.int64(1)));
    Statement m(db_, "SELECT set_index, audio_id FROM DisjointSetMembers WHERE plan_id = ? ORDER BY set_index, audio_id");
    m.bind(1, plan.plan_id);
    while (m.step()) plan.sets.at(std::size_t(m.int64(0))).emplace_back(m.text(1));
    return plan;
}

namespace {

StoredChunk read_chunk(const auto& s) {
    StoredChunk c;
    c.annotation.chunk_id = s.int64(0);
    c.annotation.audio_id = AudioId{s.text(1)};
    c.annotation.class_id = ClassId(s.int64(2));
    c.annotation.labeler_id = LabelerId{s.text(3)};
    c.annotation.onset = s.real(4);
    c.annotation.offset = s.real(5);
    c.iteration_id = s.null(6) ? 0 : s.int64(6);
    c.resolved = s.int64(7) != 0;
    if (!s.null(8)) c.resolves = s.int64(8);
    return c;
}

constexpr const char* kChunkColumns =
    "id, audio_id, class_id, labeler_id, onset, offset, iteration_id, resolved, resolves_chunk_id";

}  // namespace

std::size_t Store::record_annotations(std::span<const ChunkAnnotation> batch, IterationId iteration) {
    std::size_t boundary = 0;
    return in_transaction([&] {
        const auto ontology = load_ontology();
        Statement ins(db_, "INSERT INTO Chunks (audio_id, class_id, labeler_id, onset, offset, iteration_id) "
                           "VALUES (?, ?, ?, ?, ?, ?)");
        std::set<AudioId> touched;
        for (const auto& a : batch) {
            const auto audio_row = audio(a.audio_id);
            if (!audio_row) throw Error(ErrorKind::UnknownAudio, "unknown audio " + a.audio_id.str());
            if (!group_of(a.labeler_id)) throw Error(ErrorKind::UnknownLabeler, "unknown labeler " + a.labeler_id.str());
            if (!ontology.contains(a.class_id))
                throw Error(ErrorKind::UnknownClass, "unknown class " + std::to_string(a.class_id));
            if (!(a.onset >= 0 && a.onset < a.offset && a.offset <= audio_row->duration))
                throw Error(ErrorKind::OutOfRangeTimes, "annotation times outside the audio");
            std::optional<IterationId> it;
            if (iteration > 0) {
                it = iteration;
            } else if (auto p = proposal_for(a.audio_id)) {
                it = p->iteration_id;
            }
            ins.bind(1, a.audio_id.str()).bind(2, a.class_id).bind(3, a.labeler_id.str()).bind(4, a.onset)
                .bind(5, a.offset).bind(6, it);
            if (write_hook_) write_hook_(boundary);
            ++boundary;
            ins.run();
            touched.insert(a.audio_id);
        }
        for (const auto& id : touched) refresh_agreement(id);
        return batch.size();
    });
}

void Store::refresh_agreement(const AudioId& audio_id) {
    auto proposal = proposal_for(audio_id);
    if (!proposal) return;
    LabelerGroup group;
    group.group_id = proposal->group_id;
    {
        Statement s(db_, "SELECT id FROM Labelers WHERE group_id = ?");
        s.bind(1, proposal->group_id);
        while (s.step()) group.labeler_ids.insert(LabelerId{s.text(0)});
    }
    std::vector<ChunkAnnotation> mine;
    std::set<LabelerId> labelers;
    for (const auto& c : chunks_for_audio(audio_id)) {
        if (c.resolved || !group.contains(c.annotation.labeler_id)) continue;
        mine.push_back(c.annotation);
        labelers.insert(c.annotation.labeler_id);
    }
    const double agreement = group.size() ? compute_consensus(audio_id, mine, group).agreement : 0.0;
    Statement u(db_, "UPDATE WavsProposed SET labeler_count = ?, agreement_pct = ? WHERE id = ?");
    u.bind(1, labelers.size()).bind(2, 100.0 * agreement).bind(3, proposal->id).run();
}

std::vector<StoredChunk> Store::chunks_for_audio(const AudioId& audio) const {
    std::lock_guard lock(mutex_);
    std::vector<StoredChunk> out;
    Statement s(db_, std::string("SELECT ") + kChunkColumns + " FROM Chunks WHERE audio_id = ? ORDER BY id");
    s.bind(1, audio.str());
    while (s.step()) out.push_back(read_chunk(s));
    return out;
}

std::vector<StoredChunk> Store::chunks_by_labeler(const LabelerId& labeler) const {
    std::lock_guard lock(mutex_);
    std::vector<StoredChunk> out;
    Statement s(db_, std::string("SELECT ") + kChunkColumns + " FROM Chunks WHERE labeler_id = ? ORDER BY id");
    s.bind(1, labeler.str());
    while (s.step()) out.push_back(read_chunk(s));
    return out;
}

std::optional<StoredChunk> Store::chunk(ChunkId id) const {
    std::lock_guard lock(mutex_);
    Statement s(db_, std::string("SELECT ") + kChunkColumns + " FROM Chunks WHERE id = ?");
    s.bind(1, id);
    if (!s.step()) return std::nullopt;
    return read_chunk(s);
}

std::size_t Store::resolve_doubt(ChunkId doubt_chunk, std::span<const ChunkAnnotation> replacements,
                                 IterationId iteration) {
    return in_transaction([&] {
        const auto original = chunk(doubt_chunk);
        if (!original) throw Error(ErrorKind::InvalidArgument, "unknown chunk " + std::to_string(doubt_chunk));
        if (!is_doubt(original->annotation.class_id))
            throw Error(ErrorKind::InvalidArgument, "chunk " + std::to_string(doubt_chunk) + " is not a Doubt chunk");
        if (original->resolved) throw Error(ErrorKind::Conflict, "Doubt chunk already resolved");
        for (const auto& r : replacements)
            if (r.audio_id != original->annotation.audio_id || r.labeler_id != original->annotation.labeler_id)
                throw Error(ErrorKind::ForeignLabeler, "replacements must come from the Doubt chunk's labeler and audio");
        const std::size_t stored = record_annotations(replacements, iteration);
        Statement mark(db_, "UPDATE Chunks SET resolves_chunk_id = ? WHERE id > ? - ? AND id <= ? AND resolves_chunk_id IS NULL");
        const std::int64_t last = sqlite3_last_insert_rowid(db_);
        mark.bind(1, doubt_chunk).bind(2, last).bind(3, replacements.size()).bind(4, last);
        if (!replacements.empty()) mark.run();
        Statement u(db_, "UPDATE Chunks SET resolved = 1 WHERE id = ?");
        u.bind(1, doubt_chunk).run();
        refresh_agreement(original->annotation.audio_id);
        return stored;
    });
}

std::size_t Store::chunk_count() const { return row_count("Chunks"); }

void Store::promote(std::span<const std::pair<AudioId, ClassId>> promotions, IterationId iteration) {
    std::size_t boundary = 0;
    in_transaction([&] {
        Statement seq(db_, "SELECT COALESCE(MAX(seq), 0) FROM Medoids");
        seq.step();
        std::int64_t next = seq.int64(0);
        seq.reset();
        Statement up(db_, "INSERT INTO Medoids (audio_id, class_id, iteration_id, seq) VALUES (?, ?, ?, ?) "
                          "ON CONFLICT(audio_id) DO UPDATE SET class_id = excluded.class_id, "
                          "iteration_id = excluded.iteration_id, seq = excluded.seq");
        Statement label(db_, "UPDATE WavsProposed SET label = ? WHERE audio_id = ?");
        for (const auto& [audio, cls] : promotions) {
            if (is_doubt(cls)) throw Error(ErrorKind::InvalidArgument, "Doubt cannot become a medoid label");
            up.bind(1, audio.str()).bind(2, cls).bind(3, iteration).bind(4, ++next);
            if (write_hook_) write_hook_(boundary);
            ++boundary;
            up.run();
            label.bind(1, cls).bind(2, audio.str());
            if (write_hook_) write_hook_(boundary);
            ++boundary;
            label.run();
        }
    });
}

std::vector<MedoidRow> Store::medoids() const {
    std::lock_guard lock(mutex_);
    std::vector<MedoidRow> out;
    Statement s(db_, "SELECT audio_id, class_id, iteration_id, seq FROM Medoids ORDER BY seq");
    while (s.step()) out.push_back(MedoidRow{AudioId{s.text(0)}, ClassId(s.int64(1)), s.int64(2), s.int64(3)});
    return out;
}

AudioSet Store::labeled_ids() const {
    std::lock_guard lock(mutex_);
    AudioSet out;
    Statement s(db_, "SELECT audio_id FROM Medoids");
    while (s.step()) out.insert(AudioId{s.text(0)});
    return out;
}

std::vector<TagCount> Store::tag_frequency_histogram(const HistogramFilter& filter) const {
    std::lock_guard lock(mutex_);
    std::string sql =
        "SELECT c.class_id, o.name, COUNT(*) AS n FROM Chunks c JOIN Ontology o ON o.id = c.class_id "
        "JOIN Audios a ON a.id = c.audio_id WHERE c.resolved = 0";
    if (!filter.include_doubt) sql += " AND c.class_id != 0";
    if (filter.node) sql += " AND a.node_id = ?";
    sql += " GROUP BY c.class_id ORDER BY n DESC, c.class_id ASC LIMIT ?";
    Statement s(db_, sql);
    int i = 1;
    if (filter.node) s.bind(i++, filter.node->str());
    s.bind(i, filter.top_k);
    std::vector<TagCount> out;
    while (s.step()) out.push_back(TagCount{ClassId(s.int64(0)), s.text(1), std::size_t(s.int64(2))});
    return out;
}

const std::vector<std::string>& Store::table_names() {
    static const std::vector<std::string> names{
        "Projects",  "Sources",         "NodeTypes",        "Nodes",        "Paths",
        "Ontology",  "Labelers",        "Audios",           "Embeddings",   "Meta",
        "ALPreprocessing", "WavsProposed", "IterationMembers", "IterationMedoids", "DisjointPlans",
        "DisjointSetMembers", "Chunks", "Medoids",          "Suggestions",  "SuggestionCredits"};
    return names;
}

namespace {

void require_table(const std::string& table) {
    const auto& names = Store::table_names();
    if (std::find(names.begin(), names.end(), table) == names.end())
        throw Error(ErrorKind::InvalidArgument, "unknown table " + table);
}

}  // namespace

std::size_t Store::row_count(const std::string& table) const {
    require_table(table);
    std::lock_guard lock(mutex_);
    Statement s(db_, "SELECT COUNT(*) FROM " + table);
    s.step();
    return std::size_t(s.int64(0));
}

void Store::export_table(const std::string& table, std::ostream& out) const {
    require_table(table);
    std::lock_guard lock(mutex_);
    Statement s(db_, "SELECT * FROM " + table + " ORDER BY rowid");
    for (int c = 0; c < s.columns(); ++c) out << (c ? "\t" : "") << s.column_name(c);
    out << '\n';
    static constexpr char hex[] = "0123456789abcdef";
    while (s.step()) {
        for (int c = 0; c < s.columns(); ++c) {
            if (c) out << '\t';
            switch (s.column_type(c)) {
                case SQLITE_NULL: out << "NULL"; break;
                case SQLITE_BLOB: {
                    const auto v = s.vector(c);
                    (void)v;
                    // raw bytes as hex
                    const std::string bytes = pack_vector(v);
                    for (unsigned char b : bytes) out << hex[b >> 4] << hex[b & 0xf];
                    break;
                }
                default: out << s.text(c);
            }
        }
        out << '\n';
    }
}

std::size_t Store::foreign_key_violations() const {
    std::lock_guard lock(mutex_);
    Statement s(db_, "PRAGMA foreign_key_check");
    std::size_t n = 0;
    while (s.step()) ++n;
    return n;
}

WindowLease Store::try_acquire_window(const NodeId& node, Timestamp start, Timestamp end) {
    std::mutex* m = nullptr;
    {
        std::lock_guard guard(windows_mutex_);
        auto& slot = window_locks_[window_key(node, start, end)];
        if (!slot) slot = std::make_unique<std::mutex>();
        m = slot.get();
    }
    std::unique_lock<std::mutex> lock(*m, std::try_to_lock);
    return WindowLease(std::move(lock));
}

}  // namespace alab
