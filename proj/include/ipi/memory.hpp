#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipi/timeline.hpp"

namespace ipi {

struct TaskId {
    std::uint32_t value = 0;

    auto operator<=>(const TaskId&) const = default;
    std::string str() const { return "task-" + std::to_string(value); }
    /// Accepts "task-<n>"; returns nullopt for anything else.
    static std::optional<TaskId> parse(const std::string& text);
};

enum class TaskStatus { active, cancelled };

std::string to_string(TaskStatus status);

struct TriggerRecord {
    Tick tick = 0;
    std::string text;
    int revision = 1;
    std::string target_key;
};

/// A standing monitoring objective. The target may be replaced by a
/// modification, which bumps `revision` and clears the proposals.
struct ProactiveTask {
    TaskId id;
    std::string instruction;
    std::string target;
    std::string target_key;
    std::string structured_target;
    /// Target after reference resolution against interaction history.
    std::string enhanced_target;
    std::vector<std::string> proposals;
    TaskStatus status = TaskStatus::active;
    Tick created_at = 0;
    std::optional<Tick> cancelled_at;
    int revision = 1;
    Tick revised_at = 0;
    bool single_shot = false;
    std::vector<TriggerRecord> trigger_log;

    bool active_at(Tick t) const;
};

/// One target extracted from a proactive or modification instruction.
struct TargetSpec {
    std::string text;
    /// Stable label for the target; derived from the text when empty.
    std::string key;
};

/// Lowercased, whitespace-collapsed, trailing punctuation stripped.
std::string structure_target(const std::string& text);

/// Slug used as the default target key ("The dog appears." -> "the_dog_appears").
std::string target_key_for(const std::string& text);

struct MutationResult {
    ProactiveTask task;
    std::optional<std::string> warning;
};

/// Proactive Memory: the task set. All mutations go through one writer.
class ProactiveMemory {
public:
    TaskId add_task(const std::string& instruction, const TargetSpec& target, Tick at);
    MutationResult cancel_task(TaskId id, Tick at);
    MutationResult modify_task(TaskId id, const std::string& new_instruction,
                               const TargetSpec& new_target, Tick at);

    /// Tasks active at `at`, ordered by (created_at, id).
    std::vector<ProactiveTask> active_tasks(Tick at) const;

    /// Binds a management instruction to a task. `reference` may be a task id
    /// ("task-3") or a target key; without a reference the most recently
    /// created active task is chosen.
    TaskId resolve(const std::optional<std::string>& reference, Tick at) const;

    void set_enhanced_target(TaskId id, std::string enhanced);
    void set_proposals(TaskId id, std::vector<std::string> proposals);
    void record_trigger(TaskId id, Tick tick, std::string text);

    const ProactiveTask& get(TaskId id) const;
    const std::map<TaskId, ProactiveTask>& all() const { return tasks_; }
    bool empty() const { return tasks_.empty(); }

    nlohmann::json to_json() const;
    static ProactiveMemory from_json(const nlohmann::json& j);

private:
    ProactiveTask& mutable_task(TaskId id);

    std::map<TaskId, ProactiveTask> tasks_;
    std::uint32_t next_id_ = 1;
};

enum class Speaker { user, agent };

enum class TurnKind {
    reactive_query,
    proactive_instruction,
    management_instruction,
    answer,
    trigger,
    reminder,
};

std::string to_string(Speaker speaker);
std::string to_string(TurnKind kind);

struct InteractionTurn {
    std::size_t id = 0;
    Tick at_tick = 0;
    Speaker speaker = Speaker::user;
    std::string text;
    TurnKind kind = TurnKind::reactive_query;
    std::optional<std::string> event_id;
    std::optional<TaskId> task_id;
};

/// Interaction Memory: append-only log of turns.
class InteractionMemory {
public:
    static constexpr std::size_t kDefaultContextLimit = 8;

    /// Appends a turn; the id field is assigned here.
    std::size_t record(InteractionTurn turn);

    /// The most recent `limit` turns at or before `at`, oldest first.
    /// Retrieval is by recency; `query` is accepted for future semantic
    /// retrieval and is currently unused.
    std::vector<InteractionTurn> retrieve_context(const std::string& query, Tick at,
                                                  std::size_t limit) const;

    std::size_t size() const { return turns_.size(); }
    const std::vector<InteractionTurn>& turns() const { return turns_; }

    nlohmann::json to_json() const;
    static InteractionMemory from_json(const nlohmann::json& j);

private:
    std::vector<InteractionTurn> turns_;
};

}  // namespace ipi
