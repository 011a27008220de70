#pragma once

#include <Eigen/Core>

#include <chrono>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace alab {

enum class ErrorKind {
    InvalidArgument,
    OutOfRangeTimes,
    UnknownClass,
    InactiveClass,
    MalformedFilename,
    BadMagic,
    TruncatedStream,
    DimensionMismatch,
    ProbOutOfRange,
    UnknownNode,
    InvalidWindow,
    EmptyWindow,
    BudgetExceedsPool,
    EmptyMedoidPool,
    SingleClassDegenerate,
    MissingSidecar,
    PersistenceFailure,
    IncompatibleVersion,
    UnknownAudio,
    UnknownLabeler,
    UnknownIteration,
    ForeignLabeler,
    DuplicateName,
    ConfigInvalid,
    Conflict,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

template <typename Tag>
struct StrongId {
    std::string value;

    StrongId() = default;
    explicit StrongId(std::string v) : value(std::move(v)) {}
    explicit StrongId(const char* v) : value(v) {}

    const std::string& str() const noexcept { return value; }
    bool empty() const noexcept { return value.empty(); }
    friend auto operator<=>(const StrongId&, const StrongId&) = default;
};

using AudioId   = StrongId<struct AudioIdTag>;
using NodeId    = StrongId<struct NodeIdTag>;
using LabelerId = StrongId<struct LabelerIdTag>;

using ClassId     = std::uint32_t;
using GroupId     = std::int64_t;
using IterationId = std::int64_t;
using ChunkId     = std::int64_t;

using Timestamp = std::chrono::sys_seconds;

using AudioSet = std::set<AudioId>;

// ISO-8601 UTC, e.g. 2024-01-08T00:00:10Z.
std::string format_iso8601(Timestamp t);
Timestamp parse_iso8601(std::string_view text);

// Upstream tagger output for one chunk: embedding plus its top-1 class.
struct EmbeddingRecord {
    AudioId audio_id;
    Eigen::VectorXf vector;
    ClassId top1_class = 0;
    float top1_prob = 0.0f;

    friend bool operator==(const EmbeddingRecord& a, const EmbeddingRecord& b) {
        return a.audio_id == b.audio_id && a.vector.size() == b.vector.size() && a.vector == b.vector &&
               a.top1_class == b.top1_class && a.top1_prob == b.top1_prob;
    }
};

// Throws DimensionMismatch / ProbOutOfRange / InvalidArgument (non-finite component).
void check_embedding(const EmbeddingRecord& record, Eigen::Index dim);

inline constexpr double kDefaultChunkSeconds = 10.0;

struct AudioRecord {
    AudioId audio_id;
    std::string filename;
    NodeId node_id;
    Timestamp recorded_at{};
    double duration = kDefaultChunkSeconds;
    std::uint32_t sampling_rate = 32000;
    std::uint32_t bits_per_sample = 16;
    std::uint32_t channels = 1;
    std::int64_t path_id = 0;
};

struct ChunkAnnotation {
    ChunkId chunk_id = 0;
    AudioId audio_id;
    LabelerId labeler_id;
    ClassId class_id = 0;
    double onset = 0.0;
    double offset = 0.0;

    double length() const noexcept { return offset - onset; }
};

// Weak (whole-clip) labels are stored as strong labels spanning the full audio.
ChunkAnnotation full_span_annotation(const AudioId& audio, const LabelerId& labeler, ClassId cls, double duration);

enum class ClassOrigin { seed, suggested };

inline constexpr ClassId kDoubtClassId = 0;
inline constexpr std::string_view kDoubtClassName = "Doubt";

struct OntologyClass {
    ClassId class_id = 0;
    std::string name;
    ClassOrigin origin = ClassOrigin::seed;
    bool active = true;
    // First labeling iteration in which the class may be used.
    IterationId available_from = 0;
};

// The set of permissible event classes. Always contains the active Doubt class.
class Ontology {
public:
    Ontology();

    const OntologyClass& add(std::string name, ClassOrigin origin = ClassOrigin::seed, IterationId available_from = 0);
    void insert(OntologyClass cls);
    void deactivate(ClassId id);

    const OntologyClass* find(ClassId id) const;
    const OntologyClass* find_active(std::string_view name) const;
    bool contains(ClassId id) const { return find(id) != nullptr; }

    // Classes not yet available at `iteration` are reported inactive.
    Ontology visible_at(IterationId iteration) const;

    const std::map<ClassId, OntologyClass>& classes() const noexcept { return classes_; }
    ClassId next_id() const;

private:
    std::map<ClassId, OntologyClass> classes_;
};

inline bool is_doubt(ClassId id) noexcept { return id == kDoubtClassId; }

struct LabelerGroup {
    GroupId group_id = 0;
    std::set<LabelerId> labeler_ids;

    std::size_t size() const noexcept { return labeler_ids.size(); }
    bool contains(const LabelerId& id) const { return labeler_ids.count(id) != 0; }
};

// Groups must be non-empty and pairwise disjoint.
void check_groups(const std::vector<LabelerGroup>& groups);

struct WindowSelection {
    NodeId node_id;
    Timestamp window_start{};
    Timestamp window_end{};
    AudioSet s_w;
    AudioSet s_wm;
    AudioSet s_wnh;

    // s_w == s_wm ∪ s_wnh and s_wm ∩ s_wnh == ∅.
    bool set_identity_holds() const;
};

ChunkAnnotation validate_annotation(const ChunkAnnotation& a, const AudioRecord& audio, const Ontology& ontology);

}  // namespace alab

template <typename Tag>
struct std::hash<alab::StrongId<Tag>> {
    std::size_t operator()(const alab::StrongId<Tag>& id) const noexcept { return std::hash<std::string>{}(id.value); }
};
