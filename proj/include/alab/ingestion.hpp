#pragma once

#include "alab/domain.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace alab {

// Chunk filenames follow `<node_id>_<YYYYMMDD>T<HHMMSS>Z.wav`.
struct ChunkName {
    NodeId node_id;
    Timestamp recorded_at{};

    friend bool operator==(const ChunkName&, const ChunkName&) = default;
};

std::string format_chunk_filename(const NodeId& node, Timestamp recorded_at);
ChunkName parse_chunk_filename(std::string_view filename);

// The filename without its `.wav` extension.
AudioId audio_id_from_filename(std::string_view filename);
std::string filename_from_audio_id(const AudioId& id);

// Catalog entry derived from a chunk filename; format fields take their defaults.
AudioRecord audio_from_filename(std::string_view filename, std::int64_t path_id = 0);

inline constexpr std::array<char, 4> kSidecarMagic{'A', 'L', 'E', 'M'};
inline constexpr std::uint32_t kSidecarVersion = 1;

struct EmbeddingSidecarHeader {
    std::array<char, 4> magic = kSidecarMagic;
    std::uint32_t version = kSidecarVersion;
    std::uint32_t dim = 0;
    std::uint32_t record_count = 0;
    std::uint32_t class_count = 0;
};

struct Sidecar {
    EmbeddingSidecarHeader header;
    std::vector<EmbeddingRecord> records;
};

// Binary layout, little-endian:
//   magic[4] | version u32 | dim u32 | n u32 | classes u32
//   n × ( name_len u32 | name utf-8 | dim × f32 | top1_class u32 | top1_prob f32 )
void write_sidecar(std::ostream& out, const std::vector<EmbeddingRecord>& records, std::uint32_t class_count);
Sidecar read_sidecar(std::istream& in);
std::vector<EmbeddingRecord> load_sidecar(std::istream& in);

// Text manifest: one `filename,class_id,prob,v1,...,vd` line per record.
void write_manifest(std::ostream& out, const std::vector<EmbeddingRecord>& records);
std::vector<EmbeddingRecord> load_manifest(std::istream& in);

struct SyntheticPool {
    std::vector<EmbeddingRecord> records;
    std::vector<ClassId> true_labels;  // 0-based, parallel to records
    Eigen::MatrixXf centers;           // one row per class
};

// K isotropic Gaussian clusters; top-1 prediction is the nearest center with a
// softmax over negative center distances as its probability.
SyntheticPool generate_synthetic_pool(int classes, int per_class, int dim, double spread, std::uint64_t seed,
                                      const NodeId& node = NodeId{"syn00"});

}  // namespace alab
