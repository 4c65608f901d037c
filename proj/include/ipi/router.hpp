#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipi/backends.hpp"
#include "ipi/gating.hpp"
#include "ipi/memory.hpp"

namespace ipi {

enum class IntentKind { reactive_query, proactive_instruction, management_modify, management_cancel };

std::string to_string(IntentKind kind);
std::optional<IntentKind> intent_kind_from(const std::string& s);

struct IntentClass {
    IntentKind kind = IntentKind::reactive_query;
    /// Task id ("task-3") or target key; empty means "most recent task".
    std::optional<std::string> task_reference;
    /// Targets of a proactive instruction, or the new target of a modification.
    std::vector<TargetSpec> targets;
    /// True when the keyword rules produced this class.
    bool from_rules = false;
};

/// Parses the structured reply of the classification prompt. Returns
/// nullopt when the reply is malformed or violates the kind's invariants.
std::optional<IntentClass> parse_intent(const std::string& reply);

/// Deterministic keyword classifier used when the backend reply is unusable.
IntentClass classify_by_rules(const std::string& utterance);

/// Splits "the kettle boils or the timer rings" into separate targets.
std::vector<std::string> split_targets(const std::string& text);

/// Intent Router: backend classification with a keyword fallback.
class IntentRouter {
public:
    explicit IntentRouter(std::shared_ptr<ChatBackend> chat);

    /// Throws BackendUnavailable when the backend cannot be reached at all.
    IntentClass classify(const std::string& utterance, const std::vector<InteractionTurn>& context,
                         const std::vector<ProactiveTask>& active, const std::string& event_id,
                         Tick now) const;

private:
    std::shared_ptr<ChatBackend> chat_;
};

enum class OutputKind { proactive_trigger, task_update, immediate_response, no_action };

std::string to_string(OutputKind kind);

/// y_t: one unit of runtime output.
struct AgentOutput {
    Tick at_tick = 0;
    OutputKind kind = OutputKind::no_action;
    std::optional<TaskId> task_id;
    /// Every task touched by a task_update (a multi-target instruction
    /// creates several).
    std::vector<TaskId> task_ids;
    std::optional<std::string> text;
    std::optional<std::string> event_id;
    std::optional<std::string> target_key;
    std::optional<int> revision;
    std::optional<GateReason> reason;
    /// Why nothing happened (routing or memory error), for no_action.
    std::optional<std::string> diagnostic;
};

/// Kind-specific field invariants.
bool well_formed(const AgentOutput& out);

nlohmann::json to_json(const AgentOutput& out);
AgentOutput agent_output_from_json(const nlohmann::json& j);

}  // namespace ipi
