#pragma once

#include "alab/config.hpp"
#include "alab/engine.hpp"
#include "alab/store.hpp"

#include <memory>
#include <string>

namespace alab {

enum class Role { operator_role, labeler };

struct ApiSession {
    std::string token;
    Role role = Role::labeler;
    LabelerId labeler_id;
    GroupId group_id = 0;
    Timestamp expires_at{};
};

// HTTP status for an error kind.
int http_status(ErrorKind kind);

// JSON API over a store. Handlers run on the server's worker threads.
class Service {
public:
    Service(Store& store, ServiceConfig config, Engine::Clock clock = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Binds (port 0 picks a free one) and serves on a background thread; returns the port.
    int start();
    // Binds and serves on the calling thread until stop().
    void run();
    void stop();

    Engine& engine();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace alab
