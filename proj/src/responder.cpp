#include "ipi/responder.hpp"

#include <sstream>

#include <spdlog/spdlog.h>

#include "ipi/error.hpp"
#include "ipi/prompts.hpp"
#include "ipi/text.hpp"

namespace ipi {

std::string render_context(const std::vector<InteractionTurn>& turns) {
    if (turns.empty()) return "(none)";
    std::ostringstream out;
    for (const auto& t : turns) {
        out << "[t=" << t.at_tick << "s] " << to_string(t.speaker) << " (" << to_string(t.kind)
            << "): " << t.text << '\n';
    }
    auto s = out.str();
    s.pop_back();
    return s;
}

std::optional<int> parse_yes_no(const std::string& reply) {
    auto s = text::normalize(reply);
    if (text::starts_with_word(s, "yes") || text::starts_with_word(s, "true")) return 1;
    if (text::starts_with_word(s, "no") || text::starts_with_word(s, "false")) return 0;
    return std::nullopt;
}

namespace {

ChatRequest window_request(ChatPurpose purpose, const FrameWindow& window, std::string prompt) {
    ChatRequest r;
    r.purpose = purpose;
    r.current_tick = window.end_tick;
    r.tick = window.end_tick;
    r.messages.push_back({"user", std::move(prompt), window.frames});
    return r;
}

}  // namespace

Responder::Responder(std::shared_ptr<ChatBackend> chat) : chat_(std::move(chat)) {
    if (!chat_) throw ValidationError("responder needs a chat backend");
}

EnhancedInstruction Responder::enhance_instruction(const ProactiveTask& task,
                                                   const std::vector<InteractionTurn>& context,
                                                   Tick now) const {
    if (task.status != TaskStatus::active) {
        throw ValidationError("cannot enhance inactive task " + task.id.str());
    }
    EnhancedInstruction out{task.id, task.target, task.target, {}};
    if (context.empty()) return out;
    for (const auto& t : context) out.context_turn_ids.push_back(t.id);

    ChatRequest r;
    r.purpose = ChatPurpose::enhance;
    r.task_key = task.target_key;
    r.current_tick = now;
    r.tick = now;
    r.messages.push_back({"user",
                          prompts::render("enhance", {{"context", render_context(context)},
                                                      {"instruction", task.target}}),
                          {}});
    try {
        auto reply = text::trim(chat_->chat(r));
        if (!reply.empty()) out.enhanced = std::move(reply);
    } catch (const BackendUnavailable& e) {
        spdlog::warn("enhancement of {} fell back to the original: {}", task.id.str(), e.what());
    }
    return out;
}

int Responder::raw_trigger(const ProactiveTask& task, const FrameWindow& window,
                           const EnhancedInstruction& enhanced,
                           const std::optional<std::string>& reminder) const {
    if (task.status != TaskStatus::active) {
        throw ValidationError("raw trigger requested for inactive task " + task.id.str());
    }
    if (window.empty()) throw ValidationError("raw trigger needs a non-empty window");
    auto r = window_request(ChatPurpose::raw_trigger, window,
                            prompts::render("raw_trigger",
                                            {{"target", enhanced.enhanced},
                                             {"tick", std::to_string(window.end_tick)},
                                             {"frame_count", std::to_string(window.frames.size())},
                                             {"reminder", reminder ? "\n" + *reminder + "\n" : ""}}));
    r.task_key = task.target_key;
    r.reminder = reminder.has_value();
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto reply = chat_->chat(r);
        if (auto parsed = parse_yes_no(reply)) return *parsed;
        spdlog::warn("unparseable raw trigger reply for {} at t={}: '{}'", task.id.str(),
                     window.end_tick, reply);
    }
    return 0;
}

std::string Responder::proactive_response(const ProactiveTask& task, const FrameWindow& window,
                                          const EnhancedInstruction& enhanced) const {
    const auto fallback = "Alert: " + task.target;
    auto r = window_request(ChatPurpose::proactive_response, window,
                            prompts::render("proactive_response",
                                            {{"instruction", task.instruction},
                                             {"target", enhanced.enhanced},
                                             {"tick", std::to_string(window.end_tick)}}));
    r.task_key = task.target_key;
    try {
        auto reply = text::trim(chat_->chat(r));
        return reply.empty() ? fallback : reply;
    } catch (const BackendUnavailable& e) {
        spdlog::warn("proactive response for {} degraded: {}", task.id.str(), e.what());
        return fallback;
    }
}

std::string Responder::reactive_answer(const std::string& query, const FrameWindow& window,
                                       const std::vector<InteractionTurn>& context,
                                       const std::string& event_id) const {
    if (text::trim(query).empty()) throw ValidationError("reactive query is empty");
    if (window.empty()) throw ValidationError("reactive answer needs a non-empty window");
    auto r = window_request(ChatPurpose::reactive_answer, window,
                            prompts::render("reactive_answer",
                                            {{"context", render_context(context)},
                                             {"query", query},
                                             {"tick", std::to_string(window.end_tick)}}));
    r.event_id = event_id;
    try {
        auto reply = text::trim(chat_->chat(r));
        return reply.empty() ? kErrorAnswer : reply;
    } catch (const BackendUnavailable& e) {
        spdlog::warn("reactive answer for {} failed: {}", event_id, e.what());
        return kErrorAnswer;
    }
}

std::string Responder::passthrough(const std::string& utterance, const FrameWindow& window,
                                   const std::string& event_id) const {
    if (window.empty()) throw ValidationError("pass-through needs a non-empty window");
    auto r = window_request(ChatPurpose::passthrough, window,
                            prompts::render("passthrough", {{"utterance", utterance},
                                                            {"tick", std::to_string(window.end_tick)}}));
    r.event_id = event_id;
    try {
        auto reply = text::trim(chat_->chat(r));
        return reply.empty() ? kErrorAnswer : reply;
    } catch (const BackendUnavailable& e) {
        spdlog::warn("pass-through for {} failed: {}", event_id, e.what());
        return kErrorAnswer;
    }
}

}  // namespace ipi
