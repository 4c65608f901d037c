#include "ipi/agent.hpp"

#include <algorithm>
#include <future>

#include <spdlog/spdlog.h>

#include "ipi/error.hpp"
#include "ipi/prompts.hpp"

namespace ipi {

using nlohmann::json;

std::string to_string(AblationMode mode) {
    switch (mode) {
        case AblationMode::full: return "full";
        case AblationMode::no_interaction_control: return "no_interaction_control";
        case AblationMode::no_gating: return "no_gating";
        case AblationMode::embedding_only: return "embedding_only";
    }
    return "unknown";
}

AblationMode ablation_mode_from(const std::string& name) {
    for (auto m : {AblationMode::full, AblationMode::no_interaction_control, AblationMode::no_gating,
                   AblationMode::embedding_only}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("unknown ablation mode '" + name +
                      "' (expected full, no_interaction_control, no_gating or embedding_only)");
}

Agent::Agent(AgentConfig config, Backends backends)
    : config_(std::move(config)),
      backends_(std::move(backends)),
      router_(backends_.chat),
      responder_(backends_.chat) {
    if (!backends_.embedding) throw ConfigError("agent needs an embedding backend");
    if (config_.window_capacity < 1) throw ConfigError("window capacity must be >= 1");
    if (config_.proposal_count < 1) throw ConfigError("proposal count must be >= 1");
    config_.thresholds.validate();
}

bool Agent::uses_embeddings() const {
    return config_.mode == AblationMode::full || config_.mode == AblationMode::embedding_only ||
           config_.mode == AblationMode::no_interaction_control;
}

void Agent::set_thresholds(const GateThresholds& thresholds) {
    thresholds.validate();
    config_.thresholds = thresholds;
}

void Agent::set_task_thresholds(TaskId id, const GateThresholds& thresholds) {
    thresholds.validate();
    tasks_.get(id);
    task_thresholds_[id] = thresholds;
}

GateThresholds Agent::thresholds_for(TaskId id) const {
    auto it = task_thresholds_.find(id);
    return it == task_thresholds_.end() ? config_.thresholds : it->second;
}

void Agent::record_user_turn(const ScheduledEvent& event, TurnKind kind,
                             std::optional<TaskId> task) {
    InteractionTurn turn;
    turn.at_tick = event.at_tick;
    turn.speaker = Speaker::user;
    turn.text = event.utterance;
    turn.kind = kind;
    turn.event_id = event.event_id;
    turn.task_id = task;
    interactions_.record(std::move(turn));
}

AgentOutput Agent::handle_event(const ScheduledEvent& event, const FrameWindow& window) {
    const auto context =
        config_.mode == AblationMode::no_interaction_control
            ? std::vector<InteractionTurn>{}
            : interactions_.retrieve_context(event.utterance, event.at_tick, config_.context_limit);
    IntentClass intent;
    try {
        intent = router_.classify(event.utterance, context, tasks_.active_tasks(event.at_tick),
                                  event.event_id, event.at_tick);
    } catch (const BackendUnavailable& e) {
        ++backend_failures_;
        AgentOutput out;
        out.at_tick = event.at_tick;
        out.event_id = event.event_id;
        out.diagnostic = std::string("routing failed: ") + e.what();
        return out;
    }
    return dispatch(intent, event, window);
}

AgentOutput Agent::dispatch(const IntentClass& intent, const ScheduledEvent& event,
                            const FrameWindow& window) {
    if (window.end_tick != event.at_tick) {
        throw ProtocolError("event " + event.event_id + " dispatched with a window ending at t=" +
                            std::to_string(window.end_tick));
    }
    AgentOutput out;
    try {
        if (intent.kind == IntentKind::proactive_instruction) {
            out = dispatch_proactive(intent, event);
        } else if (config_.mode == AblationMode::no_interaction_control) {
            out = passthrough(event, window);
        } else if (intent.kind == IntentKind::reactive_query) {
            out = dispatch_reactive(event, window);
        } else {
            out = dispatch_management(intent, event);
        }
    } catch (const NotFoundError& e) {
        out = AgentOutput{};
        out.diagnostic = std::string(e.what()) + " (utterance: \"" + event.utterance + "\")";
    } catch (const AmbiguityError& e) {
        out = AgentOutput{};
        out.diagnostic = std::string(e.what()) + " (utterance: \"" + event.utterance + "\")";
    }
    out.at_tick = event.at_tick;
    out.event_id = event.event_id;
    return out;
}

void Agent::prepare_task(TaskId id, const std::vector<InteractionTurn>& context, Tick at) {
    const auto enhanced = responder_.enhance_instruction(tasks_.get(id), context, at);
    tasks_.set_enhanced_target(id, enhanced.enhanced);
    const auto& task = tasks_.get(id);
    gate_states_[id] = GateState{id, task.revision, std::nullopt, 0, {}};
    proposals_.erase(id);
    if (!uses_embeddings()) return;
    try {
        auto set = generate_proposals(task, config_.proposal_count, *backends_.chat,
                                      *backends_.embedding, at);
        tasks_.set_proposals(id, set.proposals);
        proposals_[id] = std::move(set);
    } catch (const BackendUnavailable& e) {
        ++backend_failures_;
        spdlog::warn("no proposal embeddings for {}; its gate passes raw decisions through: {}",
                     id.str(), e.what());
    }
}

AgentOutput Agent::dispatch_proactive(const IntentClass& intent, const ScheduledEvent& event) {
    if (intent.targets.empty()) throw ValidationError("proactive instruction without targets");
    const bool memory = config_.mode != AblationMode::no_interaction_control;
    const auto context =
        memory ? interactions_.retrieve_context(event.utterance, event.at_tick, config_.context_limit)
               : std::vector<InteractionTurn>{};
    AgentOutput out;
    out.kind = OutputKind::task_update;
    std::string summary = "Monitoring";
    for (const auto& target : intent.targets) {
        const auto id = tasks_.add_task(event.utterance, target, event.at_tick);
        prepare_task(id, context, event.at_tick);
        out.task_ids.push_back(id);
        summary += (out.task_ids.size() == 1 ? ": " : "; ") + tasks_.get(id).target;
    }
    if (out.task_ids.size() == 1) {
        const auto& task = tasks_.get(out.task_ids.front());
        out.task_id = task.id;
        out.target_key = task.target_key;
        out.revision = task.revision;
    }
    out.text = summary;
    if (memory) record_user_turn(event, TurnKind::proactive_instruction, out.task_ids.front());
    return out;
}

AgentOutput Agent::dispatch_management(const IntentClass& intent, const ScheduledEvent& event) {
    const auto at = event.at_tick;
    const auto context = interactions_.retrieve_context(event.utterance, at, config_.context_limit);
    const auto id = tasks_.resolve(intent.task_reference, at);
    AgentOutput out;
    out.kind = OutputKind::task_update;
    out.task_id = id;
    out.task_ids = {id};
    if (intent.kind == IntentKind::management_cancel) {
        auto result = tasks_.cancel_task(id, at);
        out.diagnostic = result.warning;
        out.text = "Cancelled " + id.str() + ": " + result.task.target;
    } else {
        if (intent.targets.empty()) throw ValidationError("modification without a new target");
        if (intent.targets.size() > 1) {
            spdlog::warn("modification names {} targets; using the first", intent.targets.size());
        }
        auto result = tasks_.modify_task(id, event.utterance, intent.targets.front(), at);
        out.diagnostic = result.warning;
        prepare_task(id, context, at);
        out.text = "Updated " + id.str() + ": " + tasks_.get(id).target;
    }
    const auto& task = tasks_.get(id);
    out.target_key = task.target_key;
    out.revision = task.revision;
    record_user_turn(event, TurnKind::management_instruction, id);
    return out;
}

void Agent::append_reminder(Tick at) {
    const auto active = tasks_.active_tasks(at);
    if (active.empty()) return;
    std::string targets;
    for (const auto& t : active) targets += (targets.empty() ? "" : "; ") + t.target;
    InteractionTurn turn;
    turn.at_tick = at;
    turn.speaker = Speaker::user;
    turn.kind = TurnKind::reminder;
    turn.text = prompts::render("reminder", {{"targets", targets}});
    interactions_.record(turn);
    reminder_ = turn.text;
}

AgentOutput Agent::dispatch_reactive(const ScheduledEvent& event, const FrameWindow& window) {
    const auto context =
        interactions_.retrieve_context(event.utterance, event.at_tick, config_.context_limit);
    const auto answer = responder_.reactive_answer(event.utterance, window, context, event.event_id);
    if (answer == kErrorAnswer) ++backend_failures_;
    record_user_turn(event, TurnKind::reactive_query, std::nullopt);
    InteractionTurn reply;
    reply.at_tick = event.at_tick;
    reply.speaker = Speaker::agent;
    reply.kind = TurnKind::answer;
    reply.text = answer;
    reply.event_id = event.event_id;
    interactions_.record(std::move(reply));
    if (config_.with_reminder) append_reminder(event.at_tick);

    AgentOutput out;
    out.kind = OutputKind::immediate_response;
    out.text = answer;
    return out;
}

AgentOutput Agent::passthrough(const ScheduledEvent& event, const FrameWindow& window) {
    const auto answer = responder_.passthrough(event.utterance, window, event.event_id);
    if (answer == kErrorAnswer) ++backend_failures_;
    AgentOutput out;
    out.kind = OutputKind::immediate_response;
    out.text = answer;
    return out;
}

namespace {

struct TaskEvaluation {
    GateDecision decision;
    std::optional<GateState> state;
    std::optional<std::string> response;
    std::optional<std::string> failure;
};

}  // namespace

TickReport Agent::monitor_tick(Tick at, const FrameWindow& window) {
    if (window.end_tick != at) {
        throw ProtocolError("monitor_tick(" + std::to_string(at) + ") with a window ending at t=" +
                            std::to_string(window.end_tick));
    }
    TickReport report;
    auto active = tasks_.active_tasks(at);
    if (active.empty()) return report;
    std::sort(active.begin(), active.end(),
              [](const ProactiveTask& a, const ProactiveTask& b) { return a.id < b.id; });

    std::optional<Vector> v_t;
    const bool need_vector =
        uses_embeddings() && std::any_of(active.begin(), active.end(), [&](const auto& t) {
            return proposals_.count(t.id) > 0;
        });
    if (need_vector) {
        try {
            v_t = embed_window(window, *backends_.embedding, at);
        } catch (const BackendUnavailable& e) {
            ++backend_failures_;
            report.failures.push_back(std::string("window embedding: ") + e.what());
        }
    }

    for (const auto& task : active) {
        auto it = gate_states_.find(task.id);
        if (it == gate_states_.end() || it->second.revision != task.revision) {
            gate_states_[task.id] = GateState{task.id, task.revision, std::nullopt, 0, {}};
        }
    }

    const auto mode = config_.mode;
    const auto reminder = reminder_;
    auto evaluate = [&, mode, reminder](const ProactiveTask& task) {
        TaskEvaluation ev;
        const EnhancedInstruction enhanced{task.id, task.target, task.enhanced_target, {}};
        std::optional<double> d;
        if (v_t) {
            auto ps = proposals_.find(task.id);
            if (ps != proposals_.end() && ps->second.revision == task.revision) {
                auto res = delta(gate_states_.at(task.id), ps->second, *v_t, at);
                d = res.delta;
                ev.state = std::move(res.state);
            }
        }
        const auto thresholds = thresholds_for(task.id);
        try {
            switch (mode) {
                case AblationMode::embedding_only:
                    ev.decision = gate(0, d, thresholds);
                    break;
                case AblationMode::no_gating:
                    ev.decision = gate(responder_.raw_trigger(task, window, enhanced, reminder),
                                       std::nullopt, thresholds);
                    break;
                case AblationMode::full:
                case AblationMode::no_interaction_control:
                    ev.decision =
                        gate(responder_.raw_trigger(task, window, enhanced, reminder), d, thresholds);
                    break;
            }
        } catch (const BackendUnavailable& e) {
            ev.failure = task.id.str() + ": " + e.what();
            ev.decision = gate(0, std::nullopt, thresholds);
        }
        ev.decision.task_id = task.id;
        ev.decision.revision = task.revision;
        if (ev.decision.final == 1 && !ev.failure) {
            ev.response = responder_.proactive_response(task, window, enhanced);
        }
        return ev;
    };

    std::vector<TaskEvaluation> results;
    results.reserve(active.size());
    if (config_.parallel && active.size() > 1) {
        std::vector<std::future<TaskEvaluation>> futures;
        for (const auto& task : active) {
            futures.push_back(std::async(std::launch::async, evaluate, std::cref(task)));
        }
        for (auto& f : futures) results.push_back(f.get());
    } else {
        for (const auto& task : active) results.push_back(evaluate(task));
    }

    for (std::size_t i = 0; i < active.size(); ++i) {
        const auto& task = active[i];
        auto& ev = results[i];
        if (ev.state) gate_states_[task.id] = std::move(*ev.state);
        if (ev.failure) {
            ++backend_failures_;
            report.failures.push_back(*ev.failure);
            spdlog::warn("monitoring failed for {} at t={}: {}", task.id.str(), at, *ev.failure);
        }
        report.decisions.push_back(ev.decision);
        if (!ev.response) continue;

        tasks_.record_trigger(task.id, at, *ev.response);
        InteractionTurn turn;
        turn.at_tick = at;
        turn.speaker = Speaker::agent;
        turn.kind = TurnKind::trigger;
        turn.text = *ev.response;
        turn.task_id = task.id;
        interactions_.record(std::move(turn));

        AgentOutput out;
        out.at_tick = at;
        out.kind = OutputKind::proactive_trigger;
        out.task_id = task.id;
        out.text = *ev.response;
        out.target_key = task.target_key;
        out.revision = task.revision;
        out.reason = ev.decision.reason;
        report.outputs.push_back(std::move(out));
    }
    return report;
}

json Agent::snapshot() const {
    json j;
    j["format"] = "ipi-agent-snapshot/1";
    j["mode"] = to_string(config_.mode);
    j["thresholds"] = to_json(config_.thresholds);
    j["tasks"] = tasks_.to_json();
    j["interactions"] = interactions_.to_json();
    j["proposal_sets"] = json::array();
    for (const auto& [id, ps] : proposals_) j["proposal_sets"].push_back(to_json(ps));
    j["gate_states"] = json::array();
    for (const auto& [id, s] : gate_states_) j["gate_states"].push_back(to_json(s));
    j["task_thresholds"] = json::array();
    for (const auto& [id, t] : task_thresholds_) {
        j["task_thresholds"].push_back({{"task_id", id.str()}, {"thresholds", to_json(t)}});
    }
    j["reminder"] = reminder_ ? json(*reminder_) : json(nullptr);
    j["backend_failures"] = backend_failures_;
    return j;
}

void Agent::restore(const json& j) {
    if (j.value("format", "") != "ipi-agent-snapshot/1") {
        throw ParseError("not an agent snapshot");
    }
    if (j.at("mode").get<std::string>() != to_string(config_.mode)) {
        throw ConfigError("snapshot was taken in mode " + j.at("mode").get<std::string>());
    }
    auto thresholds = thresholds_from_json(j.at("thresholds"));
    thresholds.validate();
    auto tasks = ProactiveMemory::from_json(j.at("tasks"));
    auto interactions = InteractionMemory::from_json(j.at("interactions"));
    std::map<TaskId, ProposalSet> proposals;
    for (const auto& p : j.at("proposal_sets")) {
        auto ps = proposal_set_from_json(p);
        proposals[ps.task_id] = std::move(ps);
    }
    std::map<TaskId, GateState> states;
    for (const auto& s : j.at("gate_states")) {
        auto st = gate_state_from_json(s);
        states[st.task_id] = std::move(st);
    }
    std::map<TaskId, GateThresholds> overrides;
    for (const auto& o : j.at("task_thresholds")) {
        auto id = TaskId::parse(o.at("task_id").get<std::string>());
        if (!id) throw ParseError("bad task id in snapshot thresholds");
        overrides[*id] = thresholds_from_json(o.at("thresholds"));
    }
    config_.thresholds = thresholds;
    tasks_ = std::move(tasks);
    interactions_ = std::move(interactions);
    proposals_ = std::move(proposals);
    gate_states_ = std::move(states);
    task_thresholds_ = std::move(overrides);
    reminder_ = j.at("reminder").is_null() ? std::nullopt
                                           : std::optional<std::string>(j["reminder"].get<std::string>());
    backend_failures_ = j.value("backend_failures", std::size_t{0});
}

}  // namespace ipi
