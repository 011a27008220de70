#include "alab/domain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace alab {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::OutOfRangeTimes: return "OutOfRangeTimes";
        case ErrorKind::UnknownClass: return "UnknownClass";
        case ErrorKind::InactiveClass: return "InactiveClass";
        case ErrorKind::MalformedFilename: return "MalformedFilename";
        case ErrorKind::BadMagic: return "BadMagic";
        case ErrorKind::TruncatedStream: return "TruncatedStream";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::ProbOutOfRange: return "ProbOutOfRange";
        case ErrorKind::UnknownNode: return "UnknownNode";
        case ErrorKind::InvalidWindow: return "InvalidWindow";
        case ErrorKind::EmptyWindow: return "EmptyWindow";
        case ErrorKind::BudgetExceedsPool: return "BudgetExceedsPool";
        case ErrorKind::EmptyMedoidPool: return "EmptyMedoidPool";
        case ErrorKind::SingleClassDegenerate: return "SingleClassDegenerate";
        case ErrorKind::MissingSidecar: return "MissingSidecar";
        case ErrorKind::PersistenceFailure: return "PersistenceFailure";
        case ErrorKind::IncompatibleVersion: return "IncompatibleVersion";
        case ErrorKind::UnknownAudio: return "UnknownAudio";
        case ErrorKind::UnknownLabeler: return "UnknownLabeler";
        case ErrorKind::UnknownIteration: return "UnknownIteration";
        case ErrorKind::ForeignLabeler: return "ForeignLabeler";
        case ErrorKind::DuplicateName: return "DuplicateName";
        case ErrorKind::ConfigInvalid: return "ConfigInvalid";
        case ErrorKind::Conflict: return "Conflict";
    }
    return "Unknown";
}

std::string format_iso8601(Timestamp t) {
    using namespace std::chrono;
    const auto day = floor<days>(t);
    const year_month_day ymd{day};
    const hh_mm_ss hms{t - day};
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()), int(hms.hours().count()), int(hms.minutes().count()),
                  int(hms.seconds().count()));
    return buf;
}

namespace {

bool read_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    for (char c : s)
        if (c < '0' || c > '9') return false;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && p == s.data() + s.size();
}

}  // namespace

Timestamp parse_iso8601(std::string_view text) {
    using namespace std::chrono;
    // YYYY-MM-DDTHH:MM:SSZ
    auto fail = [&] { return Error(ErrorKind::InvalidArgument, "bad ISO-8601 timestamp: " + std::string(text)); };
    if (text.size() != 20 || text[4] != '-' || text[7] != '-' || text[10] != 'T' || text[13] != ':' ||
        text[16] != ':' || text[19] != 'Z')
        throw fail();
    int y, mo, d, h, mi, s;
    if (!read_int(text.substr(0, 4), y) || !read_int(text.substr(5, 2), mo) || !read_int(text.substr(8, 2), d) ||
        !read_int(text.substr(11, 2), h) || !read_int(text.substr(14, 2), mi) || !read_int(text.substr(17, 2), s))
        throw fail();
    const year_month_day ymd{year{y}, month{unsigned(mo)}, day{unsigned(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || s > 59) throw fail();
    return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

void check_embedding(const EmbeddingRecord& record, Eigen::Index dim) {
    if (record.vector.size() != dim)
        throw Error(ErrorKind::DimensionMismatch, "embedding of " + record.audio_id.str() + " has dimension " +
                                                      std::to_string(record.vector.size()) + ", expected " +
                                                      std::to_string(dim));
    if (!(record.top1_prob >= 0.0f && record.top1_prob <= 1.0f))
        throw Error(ErrorKind::ProbOutOfRange, "top-1 probability out of [0,1] for " + record.audio_id.str());
    if (!record.vector.allFinite())
        throw Error(ErrorKind::InvalidArgument, "non-finite embedding component for " + record.audio_id.str());
}

ChunkAnnotation full_span_annotation(const AudioId& audio, const LabelerId& labeler, ClassId cls, double duration) {
    ChunkAnnotation a;
    a.audio_id = audio;
    a.labeler_id = labeler;
    a.class_id = cls;
    a.onset = 0.0;
    a.offset = duration;
    return a;
}

Ontology::Ontology() {
    OntologyClass doubt;
    doubt.class_id = kDoubtClassId;
    doubt.name = std::string(kDoubtClassName);
    doubt.origin = ClassOrigin::seed;
    doubt.active = true;
    classes_.emplace(kDoubtClassId, std::move(doubt));
}

ClassId Ontology::next_id() const { return classes_.empty() ? 1 : classes_.rbegin()->first + 1; }

const OntologyClass& Ontology::add(std::string name, ClassOrigin origin, IterationId available_from) {
    if (name.empty()) throw Error(ErrorKind::InvalidArgument, "class name must be non-empty");
    if (find_active(name)) throw Error(ErrorKind::DuplicateName, "class already active: " + name);
    OntologyClass cls;
    cls.class_id = next_id();
    cls.name = std::move(name);
    cls.origin = origin;
    cls.available_from = available_from;
    auto [it, _] = classes_.emplace(cls.class_id, std::move(cls));
    return it->second;
}

void Ontology::insert(OntologyClass cls) {
    if (cls.class_id == kDoubtClassId) {
        // Doubt is reserved; only its name is fixed.
        return;
    }
    if (cls.active) {
        if (auto* other = find_active(cls.name); other && other->class_id != cls.class_id)
            throw Error(ErrorKind::DuplicateName, "class already active: " + cls.name);
    }
    classes_[cls.class_id] = std::move(cls);
}

void Ontology::deactivate(ClassId id) {
    if (is_doubt(id)) throw Error(ErrorKind::InvalidArgument, "the Doubt class cannot be removed");
    auto it = classes_.find(id);
    if (it == classes_.end()) throw Error(ErrorKind::UnknownClass, "unknown class " + std::to_string(id));
    it->second.active = false;
}

const OntologyClass* Ontology::find(ClassId id) const {
    auto it = classes_.find(id);
    return it == classes_.end() ? nullptr : &it->second;
}

const OntologyClass* Ontology::find_active(std::string_view name) const {
    for (const auto& [_, cls] : classes_)
        if (cls.active && cls.name == name) return &cls;
    return nullptr;
}

Ontology Ontology::visible_at(IterationId iteration) const {
    Ontology view = *this;
    for (auto& [_, cls] : view.classes_)
        if (cls.available_from > iteration) cls.active = false;
    view.classes_[kDoubtClassId].active = true;
    return view;
}

void check_groups(const std::vector<LabelerGroup>& groups) {
    std::set<LabelerId> seen;
    std::set<GroupId> ids;
    for (const auto& g : groups) {
        if (g.labeler_ids.empty())
            throw Error(ErrorKind::ConfigInvalid, "labeler group " + std::to_string(g.group_id) + " is empty");
        if (!ids.insert(g.group_id).second)
            throw Error(ErrorKind::ConfigInvalid, "duplicate group id " + std::to_string(g.group_id));
        for (const auto& l : g.labeler_ids)
            if (!seen.insert(l).second)
                throw Error(ErrorKind::ConfigInvalid, "labeler " + l.str() + " belongs to more than one group");
    }
}

bool WindowSelection::set_identity_holds() const {
    AudioSet united = s_wm;
    united.insert(s_wnh.begin(), s_wnh.end());
    if (united != s_w) return false;
    return std::none_of(s_wm.begin(), s_wm.end(), [&](const AudioId& id) { return s_wnh.count(id) != 0; });
}

ChunkAnnotation validate_annotation(const ChunkAnnotation& a, const AudioRecord& audio, const Ontology& ontology) {
    if (!(a.onset >= 0.0) || !(a.onset < a.offset) || !(a.offset <= audio.duration))
        throw Error(ErrorKind::OutOfRangeTimes, "onset/offset [" + std::to_string(a.onset) + ", " +
                                                    std::to_string(a.offset) + "] outside (0, " +
                                                    std::to_string(audio.duration) + "]");
    const auto* cls = ontology.find(a.class_id);
    if (!cls) throw Error(ErrorKind::UnknownClass, "unknown class " + std::to_string(a.class_id));
    if (!cls->active) throw Error(ErrorKind::InactiveClass, "class " + cls->name + " is not active");
    return a;
}

}  // namespace alab
