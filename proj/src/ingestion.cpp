#include "alab/ingestion.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

namespace alab {

namespace {

constexpr std::string_view kWavSuffix = ".wav";

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

unsigned digits_to_uint(std::string_view s) {
    unsigned v = 0;
    std::from_chars(s.data(), s.data() + s.size(), v);
    return v;
}

void put_u32(std::ostream& out, std::uint32_t v) {
    const char bytes[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char((v >> 24) & 0xff)};
    out.write(bytes, 4);
}

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
    in.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw Error(ErrorKind::TruncatedStream, std::string("sidecar truncated while reading ") + what);
}

std::uint32_t get_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    read_exact(in, reinterpret_cast<char*>(b), 4, what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

float get_f32(std::istream& in, const char* what) { return std::bit_cast<float>(get_u32(in, what)); }

std::string float_text(float v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

}  // namespace

std::string format_chunk_filename(const NodeId& node, Timestamp recorded_at) {
    using namespace std::chrono;
    const auto day = floor<days>(recorded_at);
    const year_month_day ymd{day};
    const hh_mm_ss hms{recorded_at - day};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "_%04d%02u%02uT%02d%02d%02dZ", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()), int(hms.hours().count()), int(hms.minutes().count()),
                  int(hms.seconds().count()));
    return node.str() + buf + std::string(kWavSuffix);
}

ChunkName parse_chunk_filename(std::string_view filename) {
    using namespace std::chrono;
    auto fail = [&](const char* why) {
        return Error(ErrorKind::MalformedFilename, std::string(why) + ": " + std::string(filename));
    };
    if (filename.size() <= kWavSuffix.size() || !filename.ends_with(kWavSuffix)) throw fail("missing .wav suffix");
    std::string_view stem = filename.substr(0, filename.size() - kWavSuffix.size());
    const auto sep = stem.rfind('_');
    if (sep == std::string_view::npos || sep == 0) throw fail("missing node prefix");
    std::string_view node = stem.substr(0, sep);
    std::string_view stamp = stem.substr(sep + 1);
    // YYYYMMDDTHHMMSSZ
    if (stamp.size() != 16 || stamp[8] != 'T' || stamp[15] != 'Z') throw fail("bad timestamp layout");
    const auto date = stamp.substr(0, 8);
    const auto time = stamp.substr(9, 6);
    if (!all_digits(date) || !all_digits(time)) throw fail("non-numeric timestamp");
    const int y = int(digits_to_uint(date.substr(0, 4)));
    const unsigned mo = digits_to_uint(date.substr(4, 2));
    const unsigned d = digits_to_uint(date.substr(6, 2));
    const unsigned h = digits_to_uint(time.substr(0, 2));
    const unsigned mi = digits_to_uint(time.substr(2, 2));
    const unsigned s = digits_to_uint(time.substr(4, 2));
    const year_month_day ymd{year{y}, month{mo}, day{d}};
    if (!ymd.ok()) throw fail("impossible date");
    if (h > 23 || mi > 59 || s > 59) throw fail("impossible time of day");
    return ChunkName{NodeId{std::string(node)},
                     sys_days{ymd} + hours{h} + minutes{mi} + seconds{s}};
}

AudioId audio_id_from_filename(std::string_view filename) {
    if (filename.ends_with(kWavSuffix)) filename.remove_suffix(kWavSuffix.size());
    return AudioId{std::string(filename)};
}

std::string filename_from_audio_id(const AudioId& id) { return id.str() + std::string(kWavSuffix); }

AudioRecord audio_from_filename(std::string_view filename, std::int64_t path_id) {
    const auto parsed = parse_chunk_filename(filename);
    AudioRecord audio;
    audio.audio_id = audio_id_from_filename(filename);
    audio.filename = std::string(filename);
    audio.node_id = parsed.node_id;
    audio.recorded_at = parsed.recorded_at;
    audio.path_id = path_id;
    return audio;
}

void write_sidecar(std::ostream& out, const std::vector<EmbeddingRecord>& records, std::uint32_t class_count) {
    if (class_count == 0) throw Error(ErrorKind::InvalidArgument, "class count must be positive");
    const auto dim = records.empty() ? 1 : records.front().vector.size();
    if (dim <= 0) throw Error(ErrorKind::DimensionMismatch, "embedding dimension must be positive");
    for (const auto& r : records) {
        check_embedding(r, dim);
        if (r.top1_class >= class_count)
            throw Error(ErrorKind::InvalidArgument, "top-1 class out of range for " + r.audio_id.str());
    }
    out.write(kSidecarMagic.data(), 4);
    put_u32(out, kSidecarVersion);
    put_u32(out, std::uint32_t(dim));
    put_u32(out, std::uint32_t(records.size()));
    put_u32(out, class_count);
    for (const auto& r : records) {
        const std::string name = filename_from_audio_id(r.audio_id);
        put_u32(out, std::uint32_t(name.size()));
        out.write(name.data(), std::streamsize(name.size()));
        for (Eigen::Index i = 0; i < dim; ++i) put_f32(out, r.vector[i]);
        put_u32(out, r.top1_class);
        put_f32(out, r.top1_prob);
    }
}

Sidecar read_sidecar(std::istream& in) {
    Sidecar sc;
    auto& h = sc.header;
    read_exact(in, h.magic.data(), 4, "magic");
    if (h.magic != kSidecarMagic) throw Error(ErrorKind::BadMagic, "not an embedding sidecar");
    h.version = get_u32(in, "version");
    if (h.version != kSidecarVersion)
        throw Error(ErrorKind::BadMagic, "unsupported sidecar version " + std::to_string(h.version));
    h.dim = get_u32(in, "dim");
    h.record_count = get_u32(in, "record count");
    h.class_count = get_u32(in, "class count");
    if (h.dim == 0) throw Error(ErrorKind::DimensionMismatch, "sidecar dimension must be positive");
    if (h.class_count == 0) throw Error(ErrorKind::InvalidArgument, "sidecar class count must be positive");

    sc.records.reserve(std::min<std::uint32_t>(h.record_count, 1u << 20));
    for (std::uint32_t i = 0; i < h.record_count; ++i) {
        EmbeddingRecord r;
        const auto len = get_u32(in, "name length");
        if (len > 4096) throw Error(ErrorKind::TruncatedStream, "implausible filename length in sidecar");
        std::string name(len, '\0');
        read_exact(in, name.data(), len, "filename");
        r.audio_id = audio_id_from_filename(name);
        r.vector.resize(h.dim);
        for (std::uint32_t j = 0; j < h.dim; ++j) r.vector[j] = get_f32(in, "vector");
        r.top1_class = get_u32(in, "top-1 class");
        r.top1_prob = get_f32(in, "top-1 probability");
        if (r.top1_class >= h.class_count)
            throw Error(ErrorKind::InvalidArgument, "top-1 class out of range for " + r.audio_id.str());
        check_embedding(r, h.dim);
        sc.records.push_back(std::move(r));
    }
    return sc;
}

std::vector<EmbeddingRecord> load_sidecar(std::istream& in) { return read_sidecar(in).records; }

void write_manifest(std::ostream& out, const std::vector<EmbeddingRecord>& records) {
    for (const auto& r : records) {
        out << filename_from_audio_id(r.audio_id) << ',' << r.top1_class << ',' << float_text(r.top1_prob);
        for (Eigen::Index i = 0; i < r.vector.size(); ++i) out << ',' << float_text(r.vector[i]);
        out << '\n';
    }
}

std::vector<EmbeddingRecord> load_manifest(std::istream& in) {
    std::vector<EmbeddingRecord> records;
    std::string line;
    Eigen::Index dim = -1;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string_view> fields;
        std::string_view rest = line;
        for (;;) {
            const auto comma = rest.find(',');
            fields.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        const auto bad = [&](const char* why) {
            return Error(ErrorKind::InvalidArgument,
                         "manifest line " + std::to_string(line_no) + ": " + why);
        };
        if (fields.size() < 4) throw bad("expected filename,class_id,prob,v1..vd");
        EmbeddingRecord r;
        r.audio_id = audio_id_from_filename(fields[0]);
        auto parse_field = [&](std::string_view f, auto& value) {
            auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
            if (ec != std::errc{} || p != f.data() + f.size()) throw bad("unparsable number");
        };
        parse_field(fields[1], r.top1_class);
        parse_field(fields[2], r.top1_prob);
        const auto d = Eigen::Index(fields.size() - 3);
        if (dim < 0) dim = d;
        if (d != dim) throw Error(ErrorKind::DimensionMismatch, "manifest line " + std::to_string(line_no) +
                                                                   " has " + std::to_string(d) + " components");
        r.vector.resize(d);
        for (Eigen::Index i = 0; i < d; ++i) parse_field(fields[std::size_t(i) + 3], r.vector[i]);
        check_embedding(r, dim);
        records.push_back(std::move(r));
    }
    return records;
}

SyntheticPool generate_synthetic_pool(int classes, int per_class, int dim, double spread, std::uint64_t seed,
                                      const NodeId& node) {
    if (classes < 1 || per_class < 1 || dim < 2 || !(spread >= 0.0))
        throw Error(ErrorKind::InvalidArgument, "synthetic pool needs K>=1, per_class>=1, d>=2, spread>=0");
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> normal(0.0f, 1.0f);

    SyntheticPool pool;
    pool.centers.resize(classes, dim);
    for (int c = 0; c < classes; ++c)
        for (int j = 0; j < dim; ++j) pool.centers(c, j) = normal(rng);

    const int n = classes * per_class;
    std::vector<ClassId> labels(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) labels[std::size_t(i)] = ClassId(i / per_class);
    std::shuffle(labels.begin(), labels.end(), rng);

    const Timestamp start = std::chrono::sys_days{std::chrono::year{2024} / 1 / 8};
    pool.records.reserve(std::size_t(n));
    pool.true_labels = labels;
    Eigen::VectorXd dist(classes);
    for (int i = 0; i < n; ++i) {
        EmbeddingRecord r;
        r.audio_id = audio_id_from_filename(format_chunk_filename(node, start + std::chrono::seconds{10 * i}));
        r.vector = pool.centers.row(labels[std::size_t(i)]).transpose();
        for (int j = 0; j < dim; ++j) r.vector[j] += float(spread) * normal(rng);
        for (int c = 0; c < classes; ++c)
            dist[c] = (r.vector - pool.centers.row(c).transpose()).cast<double>().norm();
        Eigen::Index nearest = 0;
        dist.minCoeff(&nearest);
        // softmax(-dist) evaluated relative to the nearest center
        const double denom = (-(dist.array() - dist[nearest])).exp().sum();
        r.top1_class = ClassId(nearest);
        r.top1_prob = float(1.0 / denom);
        pool.records.push_back(std::move(r));
    }
    return pool;
}

}  // namespace alab
