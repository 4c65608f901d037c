#include "ipi/memory.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "ipi/error.hpp"
#include "ipi/text.hpp"

namespace ipi {

using nlohmann::json;

std::optional<TaskId> TaskId::parse(const std::string& text) {
    constexpr std::string_view prefix = "task-";
    if (text.size() <= prefix.size() || text.compare(0, prefix.size(), prefix) != 0) {
        return std::nullopt;
    }
    const auto digits = text.substr(prefix.size());
    if (!std::all_of(digits.begin(), digits.end(), [](unsigned char c) { return std::isdigit(c); })) {
        return std::nullopt;
    }
    return TaskId{static_cast<std::uint32_t>(std::stoul(digits))};
}

std::string to_string(TaskStatus status) {
    return status == TaskStatus::active ? "active" : "cancelled";
}

bool ProactiveTask::active_at(Tick t) const {
    if (created_at > t) return false;
    return !cancelled_at || *cancelled_at > t;
}

std::string structure_target(const std::string& text) {
    auto out = text::trim(text);
    while (!out.empty() && (out.back() == '.' || out.back() == '!' || out.back() == '?')) {
        out.pop_back();
    }
    std::string collapsed;
    bool space = false;
    for (unsigned char c : out) {
        if (std::isspace(c)) {
            space = true;
            continue;
        }
        if (space && !collapsed.empty()) collapsed.push_back(' ');
        space = false;
        collapsed.push_back(static_cast<char>(std::tolower(c)));
    }
    return collapsed;
}

std::string target_key_for(const std::string& text) {
    auto norm = text::normalize(text);
    std::replace(norm.begin(), norm.end(), ' ', '_');
    return norm;
}

namespace {

TargetSpec complete(const TargetSpec& target) {
    TargetSpec out = target;
    out.text = text::trim(out.text);
    if (out.key.empty()) out.key = target_key_for(out.text);
    return out;
}

}  // namespace

TaskId ProactiveMemory::add_task(const std::string& instruction, const TargetSpec& target, Tick at) {
    if (text::trim(instruction).empty()) {
        throw ValidationError("proactive instruction is empty");
    }
    const auto spec = complete(target.text.empty() ? TargetSpec{instruction, target.key} : target);
    if (spec.key.empty()) {
        throw ValidationError("proactive target has no content: '" + instruction + "'");
    }
    ProactiveTask task;
    task.id = TaskId{next_id_++};
    task.instruction = instruction;
    task.target = spec.text;
    task.target_key = spec.key;
    task.structured_target = structure_target(spec.text);
    task.enhanced_target = task.target;
    task.created_at = at;
    task.revised_at = at;
    const auto id = task.id;
    tasks_.emplace(id, std::move(task));
    return id;
}

ProactiveTask& ProactiveMemory::mutable_task(TaskId id) {
    auto it = tasks_.find(id);
    if (it == tasks_.end()) throw NotFoundError("unknown task " + id.str());
    return it->second;
}

const ProactiveTask& ProactiveMemory::get(TaskId id) const {
    auto it = tasks_.find(id);
    if (it == tasks_.end()) throw NotFoundError("unknown task " + id.str());
    return it->second;
}

MutationResult ProactiveMemory::cancel_task(TaskId id, Tick at) {
    auto& task = mutable_task(id);
    if (task.status == TaskStatus::cancelled) {
        auto warning = id.str() + " is already cancelled";
        spdlog::warn("{}", warning);
        return {task, std::move(warning)};
    }
    task.status = TaskStatus::cancelled;
    task.cancelled_at = at;
    return {task, std::nullopt};
}

MutationResult ProactiveMemory::modify_task(TaskId id, const std::string& new_instruction,
                                            const TargetSpec& new_target, Tick at) {
    auto& task = mutable_task(id);
    if (task.status == TaskStatus::cancelled) {
        throw ValidationError("cannot modify cancelled task " + id.str());
    }
    if (text::trim(new_instruction).empty()) {
        throw ValidationError("modification instruction is empty");
    }
    const auto spec =
        complete(new_target.text.empty() ? TargetSpec{new_instruction, new_target.key} : new_target);
    task.instruction = new_instruction;
    task.target = spec.text;
    task.target_key = spec.key;
    task.structured_target = structure_target(spec.text);
    task.enhanced_target = task.target;
    task.proposals.clear();
    task.revision += 1;
    task.revised_at = at;
    return {task, std::nullopt};
}

std::vector<ProactiveTask> ProactiveMemory::active_tasks(Tick at) const {
    std::vector<ProactiveTask> out;
    for (const auto& [id, task] : tasks_) {
        if (task.active_at(at)) out.push_back(task);
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id);
    });
    return out;
}

TaskId ProactiveMemory::resolve(const std::optional<std::string>& reference, Tick at) const {
    const auto active = active_tasks(at);
    if (reference && !reference->empty()) {
        if (auto id = TaskId::parse(*reference)) {
            auto it = tasks_.find(*id);
            if (it == tasks_.end()) throw NotFoundError("unknown task " + *reference);
            return *id;
        }
        for (const auto& task : active) {
            if (task.target_key == *reference) return task.id;
        }
        throw NotFoundError("no active task matches '" + *reference + "'");
    }
    if (active.empty()) {
        throw NotFoundError("no active task to manage");
    }
    const Tick newest = active.back().created_at;
    const auto tied = std::count_if(active.begin(), active.end(),
                                    [&](const auto& t) { return t.created_at == newest; });
    if (tied > 1) {
        throw AmbiguityError(std::to_string(tied) + " tasks were created at tick " +
                             std::to_string(newest) + "; the instruction must name one");
    }
    return active.back().id;
}

void ProactiveMemory::set_enhanced_target(TaskId id, std::string enhanced) {
    mutable_task(id).enhanced_target = std::move(enhanced);
}

void ProactiveMemory::set_proposals(TaskId id, std::vector<std::string> proposals) {
    mutable_task(id).proposals = std::move(proposals);
}

void ProactiveMemory::record_trigger(TaskId id, Tick tick, std::string text) {
    auto& task = mutable_task(id);
    if (!task.active_at(tick)) {
        throw ValidationError("trigger for inactive task " + id.str() + " at tick " +
                              std::to_string(tick));
    }
    if (!task.trigger_log.empty() && task.trigger_log.back().tick >= tick) {
        throw ValidationError("trigger log of " + id.str() + " must be strictly increasing");
    }
    task.trigger_log.push_back({tick, std::move(text), task.revision, task.target_key});
}

json ProactiveMemory::to_json() const {
    json tasks = json::array();
    for (const auto& [id, t] : tasks_) {
        json log = json::array();
        for (const auto& r : t.trigger_log) {
            log.push_back({{"tick", r.tick}, {"text", r.text}, {"revision", r.revision},
                           {"target_key", r.target_key}});
        }
        tasks.push_back({{"task_id", id.str()},
                         {"instruction", t.instruction},
                         {"target", t.target},
                         {"target_key", t.target_key},
                         {"structured_target", t.structured_target},
                         {"enhanced_target", t.enhanced_target},
                         {"proposals", t.proposals},
                         {"status", to_string(t.status)},
                         {"created_at", t.created_at},
                         {"cancelled_at", t.cancelled_at ? json(*t.cancelled_at) : json(nullptr)},
                         {"revision", t.revision},
                         {"revised_at", t.revised_at},
                         {"single_shot", t.single_shot},
                         {"trigger_log", log}});
    }
    return {{"next_id", next_id_}, {"tasks", tasks}};
}

ProactiveMemory ProactiveMemory::from_json(const json& j) {
    ProactiveMemory mem;
    mem.next_id_ = j.at("next_id").get<std::uint32_t>();
    for (const auto& jt : j.at("tasks")) {
        ProactiveTask t;
        const auto id = TaskId::parse(jt.at("task_id").get<std::string>());
        if (!id) throw ParseError("bad task id in snapshot");
        t.id = *id;
        t.instruction = jt.at("instruction").get<std::string>();
        t.target = jt.at("target").get<std::string>();
        t.target_key = jt.at("target_key").get<std::string>();
        t.structured_target = jt.at("structured_target").get<std::string>();
        t.enhanced_target = jt.at("enhanced_target").get<std::string>();
        t.proposals = jt.at("proposals").get<std::vector<std::string>>();
        t.status = jt.at("status") == "active" ? TaskStatus::active : TaskStatus::cancelled;
        t.created_at = jt.at("created_at").get<Tick>();
        if (!jt.at("cancelled_at").is_null()) t.cancelled_at = jt.at("cancelled_at").get<Tick>();
        t.revision = jt.at("revision").get<int>();
        t.revised_at = jt.at("revised_at").get<Tick>();
        t.single_shot = jt.at("single_shot").get<bool>();
        for (const auto& r : jt.at("trigger_log")) {
            t.trigger_log.push_back({r.at("tick").get<Tick>(), r.at("text").get<std::string>(),
                                     r.at("revision").get<int>(),
                                     r.at("target_key").get<std::string>()});
        }
        mem.tasks_.emplace(t.id, std::move(t));
    }
    return mem;
}

std::string to_string(Speaker speaker) { return speaker == Speaker::user ? "user" : "agent"; }

std::string to_string(TurnKind kind) {
    switch (kind) {
        case TurnKind::reactive_query: return "reactive_query";
        case TurnKind::proactive_instruction: return "proactive_instruction";
        case TurnKind::management_instruction: return "management_instruction";
        case TurnKind::answer: return "answer";
        case TurnKind::trigger: return "trigger";
        case TurnKind::reminder: return "reminder";
    }
    return "unknown";
}

namespace {

TurnKind turn_kind_from(const std::string& s) {
    for (auto k : {TurnKind::reactive_query, TurnKind::proactive_instruction,
                   TurnKind::management_instruction, TurnKind::answer, TurnKind::trigger,
                   TurnKind::reminder}) {
        if (to_string(k) == s) return k;
    }
    throw ParseError("unknown turn kind '" + s + "'");
}

}  // namespace

std::size_t InteractionMemory::record(InteractionTurn turn) {
    if (!turns_.empty() && turn.at_tick < turns_.back().at_tick) {
        throw ValidationError("interaction turns must be recorded in tick order");
    }
    turn.id = turns_.size();
    turns_.push_back(std::move(turn));
    return turns_.back().id;
}

std::vector<InteractionTurn> InteractionMemory::retrieve_context(const std::string& /*query*/,
                                                                 Tick at,
                                                                 std::size_t limit) const {
    auto end = std::upper_bound(turns_.begin(), turns_.end(), at,
                                [](Tick t, const InteractionTurn& turn) { return t < turn.at_tick; });
    const auto available = static_cast<std::size_t>(end - turns_.begin());
    const auto take = std::min(limit, available);
    return {end - static_cast<std::ptrdiff_t>(take), end};
}

json InteractionMemory::to_json() const {
    json out = json::array();
    for (const auto& t : turns_) {
        out.push_back({{"id", t.id},
                       {"at_tick", t.at_tick},
                       {"speaker", to_string(t.speaker)},
                       {"text", t.text},
                       {"kind", to_string(t.kind)},
                       {"event_id", t.event_id ? json(*t.event_id) : json(nullptr)},
                       {"task_id", t.task_id ? json(t.task_id->str()) : json(nullptr)}});
    }
    return out;
}

InteractionMemory InteractionMemory::from_json(const json& j) {
    InteractionMemory mem;
    for (const auto& jt : j) {
        InteractionTurn t;
        t.at_tick = jt.at("at_tick").get<Tick>();
        t.speaker = jt.at("speaker") == "user" ? Speaker::user : Speaker::agent;
        t.text = jt.at("text").get<std::string>();
        t.kind = turn_kind_from(jt.at("kind").get<std::string>());
        if (!jt.at("event_id").is_null()) t.event_id = jt.at("event_id").get<std::string>();
        if (!jt.at("task_id").is_null()) t.task_id = TaskId::parse(jt.at("task_id").get<std::string>());
        mem.record(std::move(t));
    }
    return mem;
}

}  // namespace ipi
