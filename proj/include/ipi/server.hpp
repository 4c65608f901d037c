#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "ipi/session.hpp"

namespace ipi {

struct ServerConfig {
    std::string host = "127.0.0.1";
    unsigned short port = 8080;
    /// Served read-only under /frames/.
    std::filesystem::path frames_dir;
    SessionConfig session;
};

/// "host:port", ":port" or "port". Throws ConfigError.
std::pair<std::string, unsigned short> parse_listen(const std::string& listen);

/// WebSocket session endpoint (/session), health (/healthz) and the static
/// frame route (/frames/<file>). One thread per connection.
class Server {
public:
    using HealthProbe = std::function<bool()>;

    Server(ServerConfig config, SessionManager::BackendProvider backends, HealthProbe health);
    ~Server();

    /// Binds and starts accepting. ConfigError when the address is in use.
    void start();
    /// Port actually bound (useful with port 0).
    unsigned short port() const { return bound_port_; }
    /// Stops accepting, closes open sockets after their current message and
    /// joins every connection thread.
    void stop();

    SessionManager& sessions() { return manager_; }

private:
    struct Impl;
    struct Connection;

    void serve_connection(const std::shared_ptr<Connection>& conn);

    ServerConfig config_;
    SessionManager manager_;
    HealthProbe health_;
    std::unique_ptr<Impl> impl_;
    unsigned short bound_port_ = 0;
};

}  // namespace ipi
