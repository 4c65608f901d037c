#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ipi/gating.hpp"
#include "ipi/manifest.hpp"
#include "ipi/router.hpp"
#include "ipi/verdict.hpp"

namespace ipi {

/// Everything the scorer needs from one replayed instance.
struct InstanceTranscript {
    std::string instance_id;
    Category category = Category::timing;
    std::string mode = "full";
    GateThresholds thresholds;
    bool with_reminder = false;
    int stream_length = 0;
    std::vector<Tick> evaluated_ticks;
    std::vector<AgentOutput> outputs;
    std::vector<std::pair<Tick, GateDecision>> decisions;
    std::optional<std::string> evaluation_error;

    /// Proactive triggers for a target key, in tick order.
    std::vector<const AgentOutput*> triggers_for(const std::string& key) const;
};

/// JSON lines: a header, one line per output and gate decision, an end line.
std::string to_jsonl(const InstanceTranscript& t);
InstanceTranscript transcript_from_jsonl(const std::string& text);

struct TriggerScore {
    TimingVerdict verdict = TimingVerdict::late;
    /// First trigger inside [t*-4, t*+4].
    std::optional<Tick> first;
    const AgentOutput* output = nullptr;
};

/// First trigger for the truth's key within the evaluation interval,
/// classified against [t*-1, t*+1]. No trigger counts as late.
TriggerScore score_trigger(const InstanceTranscript& t, const TriggerTruth& truth);

struct RepeatedScore {
    bool correct = false;
    std::size_t matched = 0;
    /// Triggers for the key that matched no occurrence.
    std::size_t spurious = 0;
};

/// Greedy earliest-unconsumed matching of occurrences to triggers.
RepeatedScore score_repeated(const InstanceTranscript& t, const std::vector<TriggerTruth>& truths);

/// Bidirectional substring match after normalization. The error sentinel
/// never matches.
bool match_answer(const std::string& prediction, const std::vector<std::string>& candidates);
bool match_answer(const std::string& prediction, const AnswerTruth& truth);

enum class Verdict { correct, incorrect, evaluation_error };

std::string to_string(Verdict v);

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct InstanceVerdict {
    std::string instance_id;
    Category category = Category::timing;
    Verdict verdict = Verdict::incorrect;
    /// Timing classification of the first trigger truth (timing category).
    std::optional<TimingVerdict> timing;
    /// No trigger at all inside the evaluation interval.
    bool missed = false;
    std::size_t spurious = 0;
    std::vector<Check> checks;
    std::optional<std::string> error;
};

/// All-correct conjunction of the category's component checks.
InstanceVerdict score_instance(const InstanceTranscript& t, const EvalInstance& instance);

nlohmann::json to_json(const InstanceVerdict& v);

}  // namespace ipi
