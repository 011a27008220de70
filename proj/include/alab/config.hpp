#pragma once

#include "alab/engine.hpp"

#include <cstdlib>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace alab {

struct GroupConfig {
    GroupId group_id = 0;
    std::vector<LabelerId> labelers;
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string storage = "alab.db";
    EngineConfig engine;
    std::vector<GroupConfig> groups;
    std::map<LabelerId, std::string> labeler_secrets;
    std::string operator_secret;
    std::int64_t session_ttl_seconds = 8 * 3600;
    std::string static_dir;
    // Suggested classes are approved on submission unless a reviewer is required.
    bool auto_approve_suggestions = true;
};

// Throws ConfigInvalid on malformed JSON, unknown types or inconsistent groups.
ServiceConfig parse_config(const std::string& json_text);
ServiceConfig load_config(const std::string& path);

// ALAB_PORT and ALAB_STORAGE override the file.
void apply_env_overrides(ServiceConfig& config,
                         const std::function<const char*(const char*)>& getenv_fn = [](const char* k) {
                             return std::getenv(k);
                         });

// Registers the configured labelers and groups in the store.
void sync_labelers(Store& store, const ServiceConfig& config);

}  // namespace alab
