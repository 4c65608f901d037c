#include "ipi/session.hpp"

#include <filesystem>

#include <spdlog/spdlog.h>

#include "ipi/error.hpp"

namespace ipi {

using nlohmann::json;

std::string to_string(ClientType t) {
    switch (t) {
        case ClientType::tick: return "tick";
        case ClientType::utterance: return "utterance";
        case ClientType::frame_push: return "frame_push";
        case ClientType::session_config: return "session_config";
    }
    return "unknown";
}

std::string to_string(ServerType t) {
    switch (t) {
        case ServerType::trigger: return "trigger";
        case ServerType::answer: return "answer";
        case ServerType::task_state: return "task_state";
        case ServerType::gate_telemetry: return "gate_telemetry";
        case ServerType::error: return "error";
        case ServerType::session_config: return "session_config";
        case ServerType::frame_push: return "frame_push";
    }
    return "unknown";
}

SessionFrames SessionFrames::from_json(const json& j) {
    if (!j.is_object()) throw ValidationError("frames must be an object");
    SessionFrames f;
    const auto kind = j.value("kind", "synthetic");
    if (kind == "synthetic") {
        f.kind = Kind::synthetic;
        f.length = j.value("length", f.length);
        if (f.length < 1) throw ValidationError("frames.length must be >= 1");
    } else if (kind == "directory") {
        f.kind = Kind::directory;
        if (!j.contains("path") || !j["path"].is_string()) {
            throw ValidationError("frames.path is required for a directory source");
        }
        f.directory = j["path"].get<std::string>();
    } else if (kind == "push") {
        f.kind = Kind::push;
    } else {
        throw ValidationError("unknown frames.kind '" + kind + "'");
    }
    return f;
}

json SessionFrames::to_json() const {
    switch (kind) {
        case Kind::synthetic: return {{"kind", "synthetic"}, {"length", length}};
        case Kind::directory: return {{"kind", "directory"}, {"path", directory}};
        case Kind::push: return {{"kind", "push"}};
    }
    return json::object();
}

namespace {

json config_to_json(const SessionConfig& c) {
    return {{"mode", to_string(c.agent.mode)},
            {"thresholds", to_json(c.agent.thresholds)},
            {"window_capacity", c.agent.window_capacity},
            {"proposal_count", c.agent.proposal_count},
            {"context_limit", c.agent.context_limit},
            {"with_reminder", c.agent.with_reminder},
            {"frames", c.frames.to_json()}};
}

std::string error_code(const std::exception& e) {
    if (dynamic_cast<const ProtocolError*>(&e)) return "protocol";
    if (dynamic_cast<const BoundsError*>(&e)) return "bounds";
    if (dynamic_cast<const NotFoundError*>(&e)) return "not_found";
    if (dynamic_cast<const AmbiguityError*>(&e)) return "ambiguous";
    if (dynamic_cast<const ValidationError*>(&e)) return "validation";
    if (dynamic_cast<const ConfigError*>(&e)) return "config";
    if (dynamic_cast<const BackendUnavailable*>(&e)) return "backend_unavailable";
    if (dynamic_cast<const CoverageError*>(&e)) return "coverage";
    if (dynamic_cast<const CausalityError*>(&e)) return "causality";
    if (dynamic_cast<const ParseError*>(&e)) return "malformed";
    return "internal";
}

}  // namespace

SessionConfig SessionConfig::from_json(const json& j, SessionConfig base) {
    if (!j.is_object()) throw ValidationError("session config must be an object");
    auto& a = base.agent;
    if (j.contains("thresholds")) {
        a.thresholds = thresholds_from_json(j["thresholds"]);
    }
    json th = to_json(a.thresholds);
    if (j.contains("theta_low")) th["theta_low"] = j["theta_low"];
    if (j.contains("theta_high")) th["theta_high"] = j["theta_high"];
    a.thresholds = thresholds_from_json(th);
    if (j.contains("mode")) a.mode = ablation_mode_from(j["mode"].get<std::string>());
    if (j.contains("window_capacity")) a.window_capacity = j["window_capacity"].get<int>();
    if (j.contains("proposal_count")) a.proposal_count = j["proposal_count"].get<int>();
    if (j.contains("context_limit")) a.context_limit = j["context_limit"].get<std::size_t>();
    if (j.contains("with_reminder")) a.with_reminder = j["with_reminder"].get<bool>();
    if (j.contains("frames")) base.frames = SessionFrames::from_json(j["frames"]);
    if (a.window_capacity < 1) throw ValidationError("window_capacity must be >= 1");
    if (a.proposal_count < 1) throw ValidationError("proposal_count must be >= 1");
    return base;
}

Session::Session(std::string id, SessionConfig config, Backends backends)
    : id_(std::move(id)), config_(std::move(config)), agent_(config_.agent, std::move(backends)) {
    build_timeline();
}

void Session::build_timeline() {
    switch (config_.frames.kind) {
        case SessionFrames::Kind::synthetic:
            source_ = std::make_shared<SyntheticFrameSource>(id_, config_.frames.length);
            break;
        case SessionFrames::Kind::directory:
            source_ = std::make_shared<DirectoryFrameSource>(config_.frames.directory);
            break;
        case SessionFrames::Kind::push:
            push_source_ = std::make_shared<PushFrameSource>();
            source_ = push_source_;
            break;
    }
    timeline_ = std::make_unique<Timeline>(source_, std::vector<ScheduledEvent>{},
                                           config_.agent.window_capacity);
}

json Session::make(ServerType type, std::optional<std::int64_t> ack, json payload) {
    return {{"type", to_string(type)},
            {"seq", ++server_seq_},
            {"ack", ack ? json(*ack) : json(nullptr)},
            {"payload", std::move(payload)}};
}

json Session::error(std::optional<std::int64_t> ack, const std::string& code, const std::string& message) {
    return make(ServerType::error, ack, {{"code", code}, {"message", message}});
}

json Session::hello() {
    json payload = config_to_json(config_);
    payload["session_id"] = id_;
    payload["wire"] = kWireVersion;
    payload["tick"] = timeline_->current();
    return make(ServerType::session_config, std::nullopt, std::move(payload));
}

std::vector<json> Session::handle(const json& message) {
    if (!message.is_object() || !message.contains("type") || !message["type"].is_string() ||
        !message.contains("seq") || !message["seq"].is_number_integer()) {
        return {error(std::nullopt, "malformed", "message needs a string type and an integer seq")};
    }
    const auto seq = message["seq"].get<std::int64_t>();
    const auto type = message["type"].get<std::string>();
    json payload = message.value("payload", json::object());
    if (!payload.is_object()) return {error(seq, "malformed", "payload must be an object")};
    if (client_seq_ && seq <= *client_seq_) {
        return {error(seq, "out_of_order",
                      "seq " + std::to_string(seq) + " after " + std::to_string(*client_seq_))};
    }
    client_seq_ = seq;
    try {
        if (type == "tick") return on_tick(seq, payload);
        if (type == "utterance") return on_utterance(seq, payload);
        if (type == "frame_push") return on_frame_push(seq, payload);
        if (type == "session_config") return on_config(seq, payload);
        return {error(seq, "unknown_type", "clients cannot send '" + type + "'")};
    } catch (const json::exception& e) {
        return {error(seq, "malformed", e.what())};
    } catch (const Error& e) {
        return {error(seq, error_code(e), e.what())};
    }
}

std::vector<json> Session::on_tick(std::int64_t seq, const json& payload) {
    const Tick next = timeline_->current() + 1;
    if (payload.contains("tick") && payload["tick"].get<Tick>() != next) {
        throw ProtocolError("expected tick " + std::to_string(next) + ", got " + payload["tick"].dump());
    }
    auto step = timeline_->advance(next);
    std::vector<json> out;
    std::vector<AgentOutput> outputs;
    for (const auto& event : step.due) outputs.push_back(agent_.handle_event(event, step.window));
    auto report = agent_.monitor_tick(next, step.window);

    json decisions = json::array();
    for (const auto& d : report.decisions) decisions.push_back(to_json(d));
    std::string frame = step.window.frames.back().source;
    if (config_.frames.kind == SessionFrames::Kind::directory) {
        frame = "/frames/" + std::filesystem::path(frame).filename().string();
    }
    out.push_back(make(ServerType::gate_telemetry, seq,
                       {{"tick", next},
                        {"frame", frame},
                        {"decisions", decisions},
                        {"failures", report.failures}}));
    for (const auto& o : report.outputs) {
        out.push_back(make(ServerType::trigger, seq,
                           {{"task_id", o.task_id->str()},
                            {"tick", o.at_tick},
                            {"text", *o.text},
                            {"reason", to_string(*o.reason)},
                            {"target_key", *o.target_key},
                            {"revision", *o.revision}}));
    }
    return out;
}

json Session::task_list() const {
    json list = json::array();
    for (const auto& [id, t] : agent_.tasks().all()) {
        list.push_back({{"task_id", id.str()},
                        {"target", t.target},
                        {"target_key", t.target_key},
                        {"status", to_string(t.status)},
                        {"revision", t.revision},
                        {"created_at", t.created_at},
                        {"triggers", t.trigger_log.size()},
                        {"thresholds", to_json(agent_.thresholds_for(id))}});
    }
    return list;
}

std::vector<json> Session::on_utterance(std::int64_t seq, const json& payload) {
    if (!payload.contains("text") || !payload["text"].is_string()) {
        throw ValidationError("utterance payload needs a text field");
    }
    if (timeline_->current() < 1) throw ProtocolError("send a tick before the first utterance");
    ScheduledEvent event;
    event.at_tick = timeline_->current();
    event.utterance = payload["text"].get<std::string>();
    event.event_id = payload.value("event_id", "u" + std::to_string(seq));
    if (event.utterance.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw ValidationError("utterance text is empty");
    }
    const auto out = agent_.handle_event(event, timeline_->window());
    switch (out.kind) {
        case OutputKind::immediate_response:
            return {make(ServerType::answer, seq,
                         {{"event_id", event.event_id}, {"tick", out.at_tick}, {"text", *out.text}})};
        case OutputKind::task_update:
            return {make(ServerType::task_state, seq,
                         {{"event_id", event.event_id}, {"output", to_json(out)}, {"tasks", task_list()}})};
        default:
            return {error(seq, "no_action", out.diagnostic.value_or("utterance produced no action"))};
    }
}

std::vector<json> Session::on_frame_push(std::int64_t seq, const json& payload) {
    if (!push_source_) throw ProtocolError("this session pulls frames from a server-side source");
    if (!payload.contains("source") || !payload["source"].is_string()) {
        throw ValidationError("frame_push payload needs a source field");
    }
    const Tick index = payload.value("index", push_source_->length() + 1);
    push_source_->push(Frame{index, payload["source"].get<std::string>()});
    return {make(ServerType::frame_push, seq, {{"index", index}, {"length", push_source_->length()}})};
}

std::vector<json> Session::on_config(std::int64_t seq, const json& payload) {
    json th = to_json(agent_.config().thresholds);
    if (payload.contains("task_id")) {
        auto id = TaskId::parse(payload["task_id"].get<std::string>());
        if (!id) throw ValidationError("bad task_id " + payload["task_id"].dump());
        th = to_json(agent_.thresholds_for(*id));
        if (payload.contains("theta_low")) th["theta_low"] = payload["theta_low"];
        if (payload.contains("theta_high")) th["theta_high"] = payload["theta_high"];
        agent_.set_task_thresholds(*id, thresholds_from_json(th));
    } else {
        if (payload.contains("theta_low")) th["theta_low"] = payload["theta_low"];
        if (payload.contains("theta_high")) th["theta_high"] = payload["theta_high"];
        const auto t = thresholds_from_json(th);
        agent_.set_thresholds(t);
        config_.agent.thresholds = t;
    }
    json body = config_to_json(config_);
    body["session_id"] = id_;
    body["wire"] = kWireVersion;
    body["tick"] = timeline_->current();
    body["tasks"] = task_list();
    return {make(ServerType::session_config, seq, std::move(body))};
}

json Session::snapshot() const {
    json pushed = json::array();
    if (push_source_) {
        for (Tick i = 1; i <= push_source_->length(); ++i) pushed.push_back(push_source_->frame(i).source);
    }
    return {{"format", "ipi-session-snapshot/1"},
            {"session_id", id_},
            {"tick", timeline_->current()},
            {"server_seq", server_seq_},
            {"client_seq", client_seq_ ? json(*client_seq_) : json(nullptr)},
            {"config", config_to_json(config_)},
            {"pushed_frames", pushed},
            {"agent", agent_.snapshot()}};
}

std::unique_ptr<Session> Session::restore(const json& j, Backends backends) {
    if (j.value("format", "") != "ipi-session-snapshot/1") throw ParseError("not a session snapshot");
    auto config = SessionConfig::from_json(j.at("config"));
    auto s = std::make_unique<Session>(j.at("session_id").get<std::string>(), config, std::move(backends));
    if (s->push_source_) {
        Tick i = 0;
        for (const auto& ref : j.at("pushed_frames")) s->push_source_->push(Frame{++i, ref.get<std::string>()});
    }
    s->timeline_->seek(j.at("tick").get<Tick>());
    s->agent_.restore(j.at("agent"));
    s->server_seq_ = j.at("server_seq").get<std::int64_t>();
    if (!j.at("client_seq").is_null()) s->client_seq_ = j.at("client_seq").get<std::int64_t>();
    return s;
}

SessionManager::SessionManager(SessionConfig defaults, BackendProvider backends)
    : defaults_(std::move(defaults)), backends_(std::move(backends)) {
    defaults_.agent.thresholds.validate();
}

std::string SessionManager::open(const json& overrides) {
    auto config = SessionConfig::from_json(overrides, defaults_);
    std::string id;
    {
        std::lock_guard lock(mutex_);
        id = "s-" + std::to_string(next_id_++);
    }
    auto entry = std::make_shared<Entry>();
    entry->session = std::make_unique<Session>(id, config, backends_());
    std::lock_guard lock(mutex_);
    sessions_.emplace(id, std::move(entry));
    spdlog::info("opened session {}", id);
    return id;
}

void SessionManager::with_session(const std::string& id, const std::function<void(Session&)>& fn) {
    std::shared_ptr<Entry> entry;
    {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw NotFoundError("no session " + id);
        entry = it->second;
    }
    std::lock_guard lock(entry->mutex);
    fn(*entry->session);
}

bool SessionManager::contains(const std::string& id) const {
    std::lock_guard lock(mutex_);
    return sessions_.count(id) > 0;
}

std::size_t SessionManager::size() const {
    std::lock_guard lock(mutex_);
    return sessions_.size();
}

void SessionManager::close(const std::string& id) {
    std::lock_guard lock(mutex_);
    sessions_.erase(id);
}

}  // namespace ipi
