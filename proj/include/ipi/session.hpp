#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipi/agent.hpp"
#include "ipi/backends.hpp"
#include "ipi/timeline.hpp"

namespace ipi {

inline constexpr const char* kWireVersion = "ipi-wire/1";

/// Client-to-server message types.
enum class ClientType { tick, utterance, frame_push, session_config };
/// Server-to-client message types.
enum class ServerType { trigger, answer, task_state, gate_telemetry, error, session_config, frame_push };

std::string to_string(ClientType t);
std::string to_string(ServerType t);

struct SessionFrames {
    enum class Kind { synthetic, directory, push };

    Kind kind = Kind::synthetic;
    int length = 3600;
    std::string directory;

    static SessionFrames from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct SessionConfig {
    AgentConfig agent;
    SessionFrames frames;

    /// Overrides from JSON ("theta_low", "theta_high", "mode", "frames", ...).
    /// Throws ValidationError/ConfigError on invalid values.
    static SessionConfig from_json(const nlohmann::json& j, SessionConfig base = {});
};

/// One live interactive session. All calls are serialized by the caller
/// (one event loop per session); the manager provides that lock.
class Session {
public:
    Session(std::string id, SessionConfig config, Backends backends);

    const std::string& id() const { return id_; }
    Tick current_tick() const { return timeline_->current(); }

    /// Handles one client message and returns the server messages it produced.
    /// Malformed input yields an error message; the session survives.
    std::vector<nlohmann::json> handle(const nlohmann::json& message);

    /// First message a client receives.
    nlohmann::json hello();

    nlohmann::json snapshot() const;
    static std::unique_ptr<Session> restore(const nlohmann::json& snapshot, Backends backends);

    const Agent& agent() const { return agent_; }

private:
    nlohmann::json make(ServerType type, std::optional<std::int64_t> ack, nlohmann::json payload);
    nlohmann::json error(std::optional<std::int64_t> ack, const std::string& code, const std::string& message);
    std::vector<nlohmann::json> on_tick(std::int64_t seq, const nlohmann::json& payload);
    std::vector<nlohmann::json> on_utterance(std::int64_t seq, const nlohmann::json& payload);
    std::vector<nlohmann::json> on_frame_push(std::int64_t seq, const nlohmann::json& payload);
    std::vector<nlohmann::json> on_config(std::int64_t seq, const nlohmann::json& payload);
    nlohmann::json task_list() const;
    void build_timeline();

    std::string id_;
    SessionConfig config_;
    Agent agent_;
    std::shared_ptr<FrameSource> source_;
    std::shared_ptr<PushFrameSource> push_source_;
    std::unique_ptr<Timeline> timeline_;
    std::int64_t server_seq_ = 0;
    std::optional<std::int64_t> client_seq_;
};

/// Owns live sessions. Thread-safe; each session is used under its own lock.
class SessionManager {
public:
    using BackendProvider = std::function<Backends()>;

    SessionManager(SessionConfig defaults, BackendProvider backends);

    /// Opens a session; invalid overrides are refused with ValidationError
    /// or ConfigError.
    std::string open(const nlohmann::json& overrides = nlohmann::json::object());

    /// Runs `fn` with exclusive access to the session. NotFoundError if absent.
    void with_session(const std::string& id, const std::function<void(Session&)>& fn);

    bool contains(const std::string& id) const;
    std::size_t size() const;
    void close(const std::string& id);

private:
    struct Entry {
        std::mutex mutex;
        std::unique_ptr<Session> session;
    };

    SessionConfig defaults_;
    BackendProvider backends_;
    mutable std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
    std::uint64_t next_id_ = 1;
};

}  // namespace ipi
