#include "alab/service.hpp"

#include "alab/consensus.hpp"
#include "alab/projection.hpp"
#include "alab/serialize.hpp"

#include <httplib.h>

#include <random>
#include <thread>

namespace alab {

using nlohmann::json;

int http_status(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument:
        case ErrorKind::OutOfRangeTimes:
        case ErrorKind::UnknownClass:
        case ErrorKind::InactiveClass:
        case ErrorKind::MalformedFilename:
        case ErrorKind::DimensionMismatch:
        case ErrorKind::ProbOutOfRange:
        case ErrorKind::UnknownNode:
        case ErrorKind::InvalidWindow:
        case ErrorKind::EmptyWindow:
        case ErrorKind::BudgetExceedsPool:
        case ErrorKind::MissingSidecar:
        case ErrorKind::UnknownLabeler:
        case ErrorKind::SingleClassDegenerate:
        case ErrorKind::EmptyMedoidPool:
            return 422;
        case ErrorKind::Conflict:
        case ErrorKind::ForeignLabeler:
        case ErrorKind::DuplicateName:
            return 409;
        case ErrorKind::UnknownIteration:
        case ErrorKind::UnknownAudio:
            return 404;
        default:
            return 500;
    }
}

namespace {

struct HttpError {
    int status;
    std::string kind;
    std::string message;
};

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    try {
        auto j = json::parse(req.body);
        if (!j.is_object()) throw HttpError{400, "BadRequest", "request body must be a JSON object"};
        return j;
    } catch (const json::parse_error& e) {
        throw HttpError{400, "BadRequest", std::string("malformed JSON: ") + e.what()};
    }
}

template <typename T>
T field(const json& j, const char* key) {
    if (!j.contains(key)) throw HttpError{400, "BadRequest", std::string("missing field '") + key + "'"};
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw HttpError{400, "BadRequest", std::string("field '") + key + "' has the wrong type"};
    }
}

std::int64_t path_int(const httplib::Request& req, int group) {
    const std::string text = req.matches[group];
    try {
        return std::stoll(text);
    } catch (const std::exception&) {
        throw HttpError{404, "NotFound", "bad id " + text};
    }
}

std::int64_t query_int(const httplib::Request& req, const char* name) {
    const std::string text = req.get_param_value(name);
    try {
        std::size_t used = 0;
        const auto v = std::stoll(text, &used);
        if (used == text.size()) return v;
    } catch (const std::exception&) {
    }
    throw HttpError{400, "BadRequest", std::string(name) + " must be an integer"};
}

Timestamp parse_time(const json& j, const char* key) {
    try {
        return parse_iso8601(field<std::string>(j, key));
    } catch (const Error& e) {
        throw Error(ErrorKind::InvalidWindow, std::string("field '") + key + "': " + e.what());
    }
}

std::vector<ChunkAnnotation> parse_chunks(const json& body, const AudioId& audio, const LabelerId& labeler) {
    if (!body.contains("chunks") || !body.at("chunks").is_array())
        throw HttpError{400, "BadRequest", "'chunks' must be an array"};
    std::vector<ChunkAnnotation> out;
    for (const auto& c : body.at("chunks")) {
        ChunkAnnotation a;
        a.audio_id = audio;
        a.labeler_id = labeler;
        a.class_id = field<ClassId>(c, "class_id");
        a.onset = field<double>(c, "onset");
        a.offset = field<double>(c, "offset");
        out.push_back(a);
    }
    return out;
}

std::string random_token() {
    static thread_local std::random_device rd;
    static constexpr char hex[] = "0123456789abcdef";
    std::string t;
    for (int i = 0; i < 32; ++i) t += hex[rd() & 0xf];
    return t;
}

}  // namespace

struct Service::Impl {
    Store& store;
    ServiceConfig config;
    Engine::Clock clock;
    Engine engine;
    httplib::Server server;
    std::thread worker;
    std::mutex sessions_mutex;
    std::map<std::string, ApiSession> sessions;

    Impl(Store& s, ServiceConfig c, Engine::Clock k)
        : store(s), config(std::move(c)), clock(k ? k : Engine::Clock{[] {
              return std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
          }}),
          engine(s, config.engine, clock) {
        sync_labelers(store, config);
        routes();
    }

    ApiSession authenticate(const httplib::Request& req) {
        const auto header = req.get_header_value("Authorization");
        constexpr std::string_view prefix = "Bearer ";
        if (header.rfind(prefix, 0) != 0) throw HttpError{401, "Unauthenticated", "missing bearer token"};
        const auto token = header.substr(prefix.size());
        std::lock_guard lock(sessions_mutex);
        auto it = sessions.find(token);
        if (it == sessions.end()) throw HttpError{401, "Unauthenticated", "unknown token"};
        if (it->second.expires_at <= clock()) {
            sessions.erase(it);
            throw HttpError{401, "Unauthenticated", "session expired"};
        }
        return it->second;
    }

    ApiSession require(const httplib::Request& req, Role role) {
        auto s = authenticate(req);
        if (s.role != role)
            throw HttpError{403, "Forbidden", role == Role::operator_role ? "operator role required" : "labeler role required"};
        return s;
    }

    template <typename F>
    httplib::Server::Handler wrap(F&& handler) {
        return [this, handler = std::forward<F>(handler)](const httplib::Request& req, httplib::Response& res) {
            try {
                handler(req, res);
            } catch (const HttpError& e) {
                send_json(res, e.status, {{"error", e.kind}, {"message", e.message}});
            } catch (const Error& e) {
                send_json(res, http_status(e.kind()), {{"error", to_string(e.kind())}, {"message", e.what()}});
            } catch (const std::exception& e) {
                send_json(res, 500, {{"error", "Internal"}, {"message", e.what()}});
            }
        };
    }

    IterationRecord iteration(IterationId id) {
        auto r = store.load_iteration(id);
        if (!r) throw Error(ErrorKind::UnknownIteration, "unknown iteration " + std::to_string(id));
        return *r;
    }

    void routes() {
        server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
            send_json(res, 200, {{"status", "ok"}});
        });

        server.Post("/sessions", wrap([this](const httplib::Request& req, httplib::Response& res) {
            const auto body = parse_body(req);
            const auto role = field<std::string>(body, "role");
            const auto secret = field<std::string>(body, "secret");
            ApiSession s;
            if (role == "operator") {
                if (config.operator_secret.empty() || secret != config.operator_secret)
                    throw HttpError{401, "Unauthenticated", "bad operator credentials"};
                s.role = Role::operator_role;
            } else if (role == "labeler") {
                s.labeler_id = LabelerId{field<std::string>(body, "labeler_id")};
                auto it = config.labeler_secrets.find(s.labeler_id);
                const auto group = store.group_of(s.labeler_id);
                if (it == config.labeler_secrets.end() || it->second != secret || !group)
                    throw HttpError{401, "Unauthenticated", "bad labeler credentials"};
                s.role = Role::labeler;
                s.group_id = *group;
            } else {
                throw HttpError{400, "BadRequest", "role is 'operator' or 'labeler'"};
            }
            s.token = random_token();
            s.expires_at = clock() + std::chrono::seconds{config.session_ttl_seconds};
            {
                std::lock_guard lock(sessions_mutex);
                sessions[s.token] = s;
            }
            json j{{"token", s.token}, {"role", role}, {"expires_at", format_iso8601(s.expires_at)}};
            if (s.role == Role::labeler) {
                j["labeler_id"] = s.labeler_id.str();
                j["group_id"] = s.group_id;
            }
            send_json(res, 201, j);
        }));

        server.Post("/iterations", wrap([this](const httplib::Request& req, httplib::Response& res) {
            require(req, Role::operator_role);
            const auto body = parse_body(req);
            IterationRequest r;
            r.node_id = NodeId{field<std::string>(body, "node")};
            r.window_start = parse_time(body, "window_start");
            r.window_end = parse_time(body, "window_end");
            if (body.contains("budget")) r.budget = field<std::size_t>(body, "budget");
            if (body.contains("iteration_id")) r.iteration_id = field<IterationId>(body, "iteration_id");
            if (body.contains("strategy")) r.strategy = strategy_from_string(field<std::string>(body, "strategy"));
            send_json(res, 201, to_json(engine.run_iteration(r)));
        }));

        server.Get("/iterations", wrap([this](const httplib::Request& req, httplib::Response& res) {
            authenticate(req);
            send_json(res, 200, {{"iterations", store.iteration_ids()}});
        }));

        server.Get(R"(/iterations/(\d+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
            authenticate(req);
            send_json(res, 200, to_json(iteration(path_int(req, 1))));
        }));

        server.Get(R"(/iterations/(\d+)/proposals)", wrap([this](const httplib::Request& req, httplib::Response& res) {
            const auto session = authenticate(req);
            const IterationId id = path_int(req, 1);
            LabelerId labeler = session.labeler_id;
            if (req.has_param("labeler")) labeler = LabelerId{req.get_param_value("labeler")};
            if (session.role == Role::labeler && labeler != session.labeler_id)
                throw HttpError{403, "Forbidden", "labelers see only their own worklist"};
            const auto group = store.group_of(labeler);
            if (!group) throw Error(ErrorKind::UnknownLabeler, "unknown labeler " + labeler.str());
            const auto rows = store.proposals(id);
            AudioSet done;
            for (const auto& c : store.chunks_by_labeler(labeler)) done.insert(c.annotation.audio_id);
            json items = json::array();
            for (const auto& p : rows) {
                if (p.group_id != *group || done.count(p.audio_id)) continue;
                const auto audio = store.audio(p.audio_id);
                items.push_back({{"audio_id", p.audio_id.str()},
                                 {"rank", p.rank},
                                 {"provenance", to_string(p.provenance)},
                                 {"filename", p.filename},
                                 {"audio_url", "/audio/" + p.filename},
                                 {"duration", audio ? audio->duration : 0.0},
                                 {"agreement", p.agreement_pct / 100.0},
                                 {"labeler_count", p.labeler_count}});
            }
            send_json(res, 200, {{"iteration_id", id}, {"labeler_id", labeler.str()}, {"group_id", *group}, {"items", items}});
        }));

        server.Post("/annotations", wrap([this](const httplib::Request& req, httplib::Response& res) {
            const auto session = require(req, Role::labeler);
            const auto body = parse_body(req);
            const AudioId audio_id{field<std::string>(body, "audio_id")};
            const auto proposal = store.proposal_for(audio_id);
            if (!proposal) throw Error(ErrorKind::Conflict, "audio " + audio_id.str() + " was not proposed");
            if (proposal->group_id != session.group_id)
                throw Error(ErrorKind::Conflict, "audio " + audio_id.str() + " belongs to another group");
            const auto audio = store.audio(audio_id);
            if (!audio) throw Error(ErrorKind::UnknownAudio, "unknown audio " + audio_id.str());
            const auto visible = store.load_ontology().visible_at(proposal->iteration_id);
            auto chunks = parse_chunks(body, audio_id, session.labeler_id);
            if (chunks.empty()) throw Error(ErrorKind::InvalidArgument, "no chunks submitted");
            for (const auto& c : chunks) validate_annotation(c, *audio, visible);
            const auto stored = store.record_annotations(chunks, proposal->iteration_id);
            const auto after = store.proposal_for(audio_id);
            send_json(res, 200, {{"audio_id", audio_id.str()},
                                 {"stored", stored},
                                 {"agreement", after->agreement_pct / 100.0},
                                 {"labeler_count", after->labeler_count}});
        }));

        server.Get("/doubts", wrap([this](const httplib::Request& req, httplib::Response& res) {
            const auto session = authenticate(req);
            LabelerId labeler = session.labeler_id;
            if (req.has_param("labeler")) labeler = LabelerId{req.get_param_value("labeler")};
            if (session.role == Role::labeler && labeler != session.labeler_id)
                throw HttpError{403, "Forbidden", "labelers see only their own worklist"};
            std::vector<DoubtHistoryEntry> history;
            for (const auto& c : store.chunks_by_labeler(labeler)) history.push_back({c.annotation, c.resolved});
            json items = json::array();
            for (const auto& d : build_doubt_worklist(labeler, history))
                items.push_back({{"audio_id", d.audio_id.str()}, {"chunk_id", d.chunk_id}});
            const auto count = std::size_t(store.latest_iteration_id());
            send_json(res, 200, {{"labeler_id", labeler.str()},
                                 {"doubt_round", count > 0 && is_doubt_iteration(count)},
                                 {"items", items}});
        }));

        server.Post(R"(/doubts/(\d+)/resolve)", wrap([this](const httplib::Request& req, httplib::Response& res) {
            const auto session = require(req, Role::labeler);
            const ChunkId id = path_int(req, 1);
            const auto original = store.chunk(id);
            if (!original) throw HttpError{404, "NotFound", "unknown chunk " + std::to_string(id)};
            if (original->annotation.labeler_id != session.labeler_id)
                throw Error(ErrorKind::ForeignLabeler, "chunk belongs to another labeler");
            const auto body = parse_body(req);
            auto chunks = parse_chunks(body, original->annotation.audio_id, session.labeler_id);
            const auto audio = store.audio(original->annotation.audio_id);
            const auto visible = store.load_ontology().visible_at(store.latest_iteration_id());
            for (const auto& c : chunks) validate_annotation(c, *audio, visible);
            send_json(res, 200, to_json(resolve_doubt(store, id, chunks)));
        }));

        server.Get("/ontology", wrap([this](const httplib::Request& req, httplib::Response& res) {
            authenticate(req);
            IterationId at = store.latest_iteration_id();
            if (req.has_param("iteration")) at = query_int(req, "iteration");
            json list = json::array();
            const auto visible = store.load_ontology().visible_at(at);
            for (const auto& [_, c] : visible.classes())
                if (c.active) list.push_back(to_json(c));
            send_json(res, 200, {{"iteration", at}, {"classes", list}});
        }));

        server.Post("/ontology/suggestions", wrap([this](const httplib::Request& req, httplib::Response& res) {
            const auto session = require(req, Role::labeler);
            const auto body = parse_body(req);
            const auto r = suggest_ontology_class(store, session.labeler_id, field<std::string>(body, "name"),
                                                  config.auto_approve_suggestions);
            send_json(res, 201, suggestion_json(r));
        }));

        server.Get("/ontology/suggestions", wrap([this](const httplib::Request& req, httplib::Response& res) {
            authenticate(req);
            json list = json::array();
            for (const auto& s : store.suggestions()) list.push_back(suggestion_json({s.id, s.approved, s.class_id, s.credited}));
            send_json(res, 200, {{"suggestions", list}});
        }));

        server.Post(R"(/ontology/suggestions/(\d+)/approve)",
                    wrap([this](const httplib::Request& req, httplib::Response& res) {
                        require(req, Role::operator_role);
                        send_json(res, 200, suggestion_json(approve_ontology_suggestion(store, path_int(req, 1))));
                    }));

        server.Post(R"(/iterations/(\d+)/consensus)", wrap([this](const httplib::Request& req, httplib::Response& res) {
            require(req, Role::operator_role);
            const auto rec = iteration(path_int(req, 1));
            const auto lease = store.try_acquire_window(rec.node_id, rec.window_start, rec.window_end);
            if (!lease.held()) throw Error(ErrorKind::Conflict, "an iteration is running on this window");
            const auto outcomes = iteration_consensus(store, rec.iteration_id);
            const auto promoted = promote_medoids(store, outcomes, rec.iteration_id);
            json list = json::array();
            for (const auto& o : outcomes) list.push_back(to_json(o));
            send_json(res, 200, {{"iteration_id", rec.iteration_id}, {"promoted", promoted}, {"outcomes", list}});
        }));

        server.Get("/dashboard/projection", wrap([this](const httplib::Request& req, httplib::Response& res) {
            authenticate(req);
            if (!req.has_param("iteration")) throw HttpError{400, "BadRequest", "iteration parameter required"};
            send_json(res, 200, projection(iteration(query_int(req, "iteration"))));
        }));

        server.Get("/dashboard/histogram", wrap([this](const httplib::Request& req, httplib::Response& res) {
            HistogramFilter f;
            if (req.has_param("top")) {
                const auto top = query_int(req, "top");
                if (top < 0) throw HttpError{400, "BadRequest", "top must not be negative"};
                f.top_k = std::size_t(top);
            }
            if (req.has_param("node")) f.node = NodeId{req.get_param_value("node")};
            if (req.has_param("include_doubt")) f.include_doubt = req.get_param_value("include_doubt") == "true";
            send_json(res, 200, {{"top", f.top_k}, {"bins", to_json(store.tag_frequency_histogram(f))}});
        }));

        if (!config.static_dir.empty()) server.set_mount_point("/", config.static_dir);
    }

    static json suggestion_json(const SuggestionResult& r) {
        json credited = json::array();
        for (const auto& l : r.credited) credited.push_back(l.str());
        json j{{"suggestion_id", r.suggestion_id}, {"approved", r.approved}, {"credited", credited}};
        j["class_id"] = r.class_id ? json(*r.class_id) : json(nullptr);
        return j;
    }

    json projection(const IterationRecord& rec) {
        std::vector<AudioId> ids;
        for (const auto& m : rec.medoids) ids.push_back(m.audio_id);
        const std::size_t medoid_count = ids.size();
        AudioSet proposed;
        for (const auto& p : rec.batch.proposals) proposed.insert(p.audio_id);
        ids.insert(ids.end(), rec.processed.begin(), rec.processed.end());
        const auto embeddings = store.embeddings(ids);
        json points = json::array();
        if (!embeddings.empty()) {
            RowMatrix<double> x(Eigen::Index(embeddings.size()), embeddings.front().vector.size());
            for (std::size_t i = 0; i < embeddings.size(); ++i)
                x.row(Eigen::Index(i)) = embeddings[i].vector.cast<double>().transpose();
            const auto xy = principal_projection_2d(x);
            for (std::size_t i = 0; i < embeddings.size(); ++i) {
                const char* role = i < medoid_count ? "medoid" : proposed.count(ids[i]) ? "proposed" : "discarded";
                json p{{"audio_id", ids[i].str()},
                       {"x", xy(Eigen::Index(i), 0)},
                       {"y", xy(Eigen::Index(i), 1)},
                       {"role", role},
                       {"top1_class", embeddings[i].top1_class}};
                if (i < medoid_count) p["class_id"] = rec.medoids[i].class_id;
                points.push_back(std::move(p));
            }
        }
        return {{"iteration_id", rec.iteration_id}, {"method", "pca"}, {"points", points}};
    }
};

Service::Service(Store& store, ServiceConfig config, Engine::Clock clock)
    : impl_(std::make_unique<Impl>(store, std::move(config), std::move(clock))) {}

Service::~Service() { stop(); }

int Service::start() {
    auto& s = impl_->server;
    int port = impl_->config.port;
    if (port == 0) {
        port = s.bind_to_any_port(impl_->config.host);
    } else if (!s.bind_to_port(impl_->config.host, port)) {
        port = -1;
    }
    if (port < 0)
        throw Error(ErrorKind::ConfigInvalid, "cannot bind " + impl_->config.host + ":" + std::to_string(impl_->config.port));
    impl_->worker = std::thread([&s] { s.listen_after_bind(); });
    s.wait_until_ready();
    return port;
}

void Service::run() {
    if (!impl_->server.listen(impl_->config.host, impl_->config.port))
        throw Error(ErrorKind::ConfigInvalid, "cannot bind " + impl_->config.host + ":" + std::to_string(impl_->config.port));
}

void Service::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->worker.joinable()) impl_->worker.join();
}

Engine& Service::engine() { return impl_->engine; }

}  // namespace alab
