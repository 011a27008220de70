#include "alab/config.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace alab {

namespace {

using nlohmann::json;

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ConfigInvalid, std::string("config field '") + key + "': " + e.what());
    }
}

}  // namespace

ServiceConfig parse_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw Error(ErrorKind::ConfigInvalid, "config must be a JSON object");

    ServiceConfig c;
    read_field(j, "host", c.host);
    read_field(j, "port", c.port);
    read_field(j, "storage", c.storage);
    read_field(j, "budget", c.engine.budget);
    read_field(j, "n_smax", c.engine.partition.n_smax);
    read_field(j, "n_mmax", c.engine.n_mmax);
    read_field(j, "seed", c.engine.seed);
    read_field(j, "operator_secret", c.operator_secret);
    read_field(j, "session_ttl_seconds", c.session_ttl_seconds);
    read_field(j, "static_dir", c.static_dir);
    read_field(j, "auto_approve_suggestions", c.auto_approve_suggestions);
    if (j.contains("logistic")) {
        const auto& l = j.at("logistic");
        read_field(l, "l2", c.engine.logistic.l2);
        read_field(l, "max_iterations", c.engine.logistic.max_iterations);
        read_field(l, "gradient_tolerance", c.engine.logistic.gradient_tolerance);
    }
    if (j.contains("groups")) {
        if (!j.at("groups").is_array()) throw Error(ErrorKind::ConfigInvalid, "'groups' must be an array");
        GroupId next = 1;
        for (const auto& g : j.at("groups")) {
            GroupConfig gc;
            gc.group_id = next++;
            read_field(g, "id", gc.group_id);
            if (!g.contains("labelers")) throw Error(ErrorKind::ConfigInvalid, "group without 'labelers'");
            for (const auto& l : g.at("labelers")) {
                if (l.is_string()) {
                    gc.labelers.emplace_back(l.get<std::string>());
                } else if (l.is_object() && l.contains("id")) {
                    gc.labelers.emplace_back(l.at("id").get<std::string>());
                    if (l.contains("secret")) c.labeler_secrets[gc.labelers.back()] = l.at("secret").get<std::string>();
                } else {
                    throw Error(ErrorKind::ConfigInvalid, "labeler entries are strings or {id, secret} objects");
                }
            }
            c.groups.push_back(std::move(gc));
        }
    }

    if (c.port < 0 || c.port > 65535) throw Error(ErrorKind::ConfigInvalid, "port out of range");
    if (c.engine.budget == 0) throw Error(ErrorKind::ConfigInvalid, "budget must be at least 1");
    if (c.engine.partition.n_smax == 0) throw Error(ErrorKind::ConfigInvalid, "n_smax must be at least 1");
    if (c.engine.n_mmax == 0) throw Error(ErrorKind::ConfigInvalid, "n_mmax must be at least 1");
    if (c.session_ttl_seconds < 0) throw Error(ErrorKind::ConfigInvalid, "session_ttl_seconds must be >= 0");
    std::vector<LabelerGroup> groups;
    std::set<GroupId> ids;
    for (const auto& g : c.groups) {
        if (!ids.insert(g.group_id).second)
            throw Error(ErrorKind::ConfigInvalid, "duplicate group id " + std::to_string(g.group_id));
        LabelerGroup lg{g.group_id, {g.labelers.begin(), g.labelers.end()}};
        if (lg.size() != g.labelers.size()) throw Error(ErrorKind::ConfigInvalid, "labeler listed twice in a group");
        groups.push_back(std::move(lg));
    }
    if (!groups.empty()) check_groups(groups);
    return c;
}

ServiceConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::ConfigInvalid, "cannot read config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

void apply_env_overrides(ServiceConfig& config, const std::function<const char*(const char*)>& getenv_fn) {
    if (const char* port = getenv_fn("ALAB_PORT"); port && *port) {
        int value = 0;
        const auto* end = port + std::char_traits<char>::length(port);
        const auto [p, ec] = std::from_chars(port, end, value);
        if (ec != std::errc{} || p != end || value < 0 || value > 65535)
            throw Error(ErrorKind::ConfigInvalid, std::string("ALAB_PORT is not a port: ") + port);
        config.port = value;
    }
    if (const char* storage = getenv_fn("ALAB_STORAGE"); storage && *storage) config.storage = storage;
}

void sync_labelers(Store& store, const ServiceConfig& config) {
    for (const auto& g : config.groups)
        for (const auto& l : g.labelers) store.add_labeler(l, g.group_id);
}

}  // namespace alab
