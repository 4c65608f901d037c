#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ipi/backends.hpp"
#include "ipi/memory.hpp"

namespace ipi {

/// Answer text recorded when a reactive query could not be answered. The
/// harness scores it as incorrect.
inline const std::string kErrorAnswer = "[error: backend unavailable]";

struct EnhancedInstruction {
    TaskId task_id;
    std::string original;
    std::string enhanced;
    std::vector<std::size_t> context_turn_ids;
};

/// Renders turns as "[t=5s] user: ..." lines for prompts.
std::string render_context(const std::vector<InteractionTurn>& turns);

/// The Response Tool. Stateless over its chat backend.
class Responder {
public:
    explicit Responder(std::shared_ptr<ChatBackend> chat);

    /// Resolves references in the task target against prior turns. Identity
    /// when there is nothing to resolve or the backend fails.
    EnhancedInstruction enhance_instruction(const ProactiveTask& task,
                                            const std::vector<InteractionTurn>& context,
                                            Tick now) const;

    /// r_i(t) from a strict yes/no prompt; one retry on malformed output,
    /// then 0. `reminder` is appended to the prompt when present.
    int raw_trigger(const ProactiveTask& task, const FrameWindow& window,
                    const EnhancedInstruction& enhanced,
                    const std::optional<std::string>& reminder = std::nullopt) const;

    /// Response text for a task whose final gate decision is 1.
    std::string proactive_response(const ProactiveTask& task, const FrameWindow& window,
                                   const EnhancedInstruction& enhanced) const;

    /// Immediate answer grounded in the window and the retrieved turns.
    /// Returns kErrorAnswer when the backend stays unavailable.
    std::string reactive_answer(const std::string& query, const FrameWindow& window,
                                const std::vector<InteractionTurn>& context,
                                const std::string& event_id) const;

    /// Forwards an utterance to the base model without memory (ablation).
    std::string passthrough(const std::string& utterance, const FrameWindow& window,
                            const std::string& event_id) const;

private:
    std::shared_ptr<ChatBackend> chat_;
};

/// Parses a yes/no reply; nullopt when it is neither.
std::optional<int> parse_yes_no(const std::string& reply);

}  // namespace ipi
