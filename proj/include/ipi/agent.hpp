#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipi/backends.hpp"
#include "ipi/gating.hpp"
#include "ipi/memory.hpp"
#include "ipi/responder.hpp"
#include "ipi/router.hpp"
#include "ipi/timeline.hpp"

namespace ipi {

enum class AblationMode { full, no_interaction_control, no_gating, embedding_only };

std::string to_string(AblationMode mode);
/// Throws ConfigError for an unknown name.
AblationMode ablation_mode_from(const std::string& name);

struct AgentConfig {
    int window_capacity = 16;
    int proposal_count = 4;
    std::size_t context_limit = InteractionMemory::kDefaultContextLimit;
    GateThresholds thresholds;
    AblationMode mode = AblationMode::full;
    /// Appends a reminder turn after every reactive interaction.
    bool with_reminder = false;
    /// Evaluate tasks concurrently within a tick.
    bool parallel = true;
};

struct TickReport {
    std::vector<AgentOutput> outputs;
    std::vector<GateDecision> decisions;
    /// Backend failures isolated to single tasks during this tick.
    std::vector<std::string> failures;
};

/// The IPI agent: router, memories, responder and gate for one stream.
/// Not thread-safe; callers drive it from one loop.
class Agent {
public:
    Agent(AgentConfig config, Backends backends);

    /// Query-arrival path: classify then dispatch one user event.
    AgentOutput handle_event(const ScheduledEvent& event, const FrameWindow& window);

    AgentOutput dispatch(const IntentClass& intent, const ScheduledEvent& event,
                         const FrameWindow& window);

    /// Continuous-monitoring path. Runs after the tick's events.
    TickReport monitor_tick(Tick at, const FrameWindow& window);

    const AgentConfig& config() const { return config_; }
    void set_thresholds(const GateThresholds& thresholds);
    void set_task_thresholds(TaskId id, const GateThresholds& thresholds);
    GateThresholds thresholds_for(TaskId id) const;

    const ProactiveMemory& tasks() const { return tasks_; }
    const InteractionMemory& interactions() const { return interactions_; }
    const std::map<TaskId, GateState>& gate_states() const { return gate_states_; }
    const std::map<TaskId, ProposalSet>& proposal_sets() const { return proposals_; }

    /// Count of backend failures seen so far (routing, raw decisions, embeddings).
    std::size_t backend_failures() const { return backend_failures_; }

    nlohmann::json snapshot() const;
    void restore(const nlohmann::json& snapshot);

private:
    bool uses_embeddings() const;
    AgentOutput dispatch_proactive(const IntentClass& intent, const ScheduledEvent& event);
    AgentOutput dispatch_management(const IntentClass& intent, const ScheduledEvent& event);
    AgentOutput dispatch_reactive(const ScheduledEvent& event, const FrameWindow& window);
    AgentOutput passthrough(const ScheduledEvent& event, const FrameWindow& window);
    void prepare_task(TaskId id, const std::vector<InteractionTurn>& context, Tick at);
    void record_user_turn(const ScheduledEvent& event, TurnKind kind, std::optional<TaskId> task);
    void append_reminder(Tick at);

    AgentConfig config_;
    Backends backends_;
    IntentRouter router_;
    Responder responder_;
    ProactiveMemory tasks_;
    InteractionMemory interactions_;
    std::map<TaskId, ProposalSet> proposals_;
    std::map<TaskId, GateState> gate_states_;
    std::map<TaskId, GateThresholds> task_thresholds_;
    std::optional<std::string> reminder_;
    std::size_t backend_failures_ = 0;
};

}  // namespace ipi
