#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipi/backends.hpp"
#include "ipi/memory.hpp"

namespace ipi {

struct GateThresholds {
    double theta_low = 0.02;
    double theta_high = 0.08;

    /// theta_low = -inf, theta_high = +inf: the gate never intervenes.
    static GateThresholds identity();
    /// Throws ValidationError unless theta_low <= theta_high (NaN rejected).
    void validate() const;

    bool operator==(const GateThresholds&) const = default;
};

/// Thresholds in JSON: numbers, or the strings "-inf"/"inf" for the limits.
nlohmann::json to_json(const GateThresholds& t);
GateThresholds thresholds_from_json(const nlohmann::json& j);
double parse_threshold(const std::string& text);

enum class GateReason { pass_through, suppressed, forced, unchanged };

std::string to_string(GateReason reason);
std::optional<GateReason> gate_reason_from(const std::string& s);

struct GateDecision {
    TaskId task_id;
    int revision = 1;
    int raw = 0;
    std::optional<double> delta;
    int final = 0;
    GateReason reason = GateReason::pass_through;

    bool operator==(const GateDecision&) const = default;
};

nlohmann::json to_json(const GateDecision& d);
GateDecision gate_decision_from_json(const nlohmann::json& j);

/// Textual restatements of a task target and their unit embeddings.
struct ProposalSet {
    TaskId task_id;
    int revision = 1;
    std::vector<std::string> proposals;
    std::vector<Vector> embeddings;

    std::size_t size() const { return proposals.size(); }
};

/// Similarity history of one task revision.
struct GateState {
    TaskId task_id;
    int revision = 1;
    std::optional<std::vector<double>> prev_scores;
    Tick last_tick = 0;
    /// Recent (tick, delta) pairs for telemetry; bounded.
    std::vector<std::pair<Tick, double>> delta_history;

    static constexpr std::size_t kHistoryLimit = 64;
};

nlohmann::json to_json(const ProposalSet& p);
ProposalSet proposal_set_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GateState& s);
GateState gate_state_from_json(const nlohmann::json& j);

struct DeltaResult {
    std::optional<double> delta;
    std::vector<double> scores;
    GateState state;
};

/// Scores every proposal against v_t and max-pools the one-tick increase.
/// A state from another revision, or one last updated at a tick other than
/// t-1, is reset and yields an undefined delta.
DeltaResult delta(const GateState& state, const ProposalSet& proposals, const Vector& window_vec,
                  Tick t);

/// Dual-threshold gate. Total and pure.
GateDecision gate(int raw, std::optional<double> delta, const GateThresholds& thresholds);

/// Asks the chat backend for `count` distinct restatements of the task
/// target and embeds them. Backend failure or unusable output degrades to
/// the raw target text alone.
ProposalSet generate_proposals(const ProactiveTask& task, int count, ChatBackend& chat,
                               EmbeddingBackend& embedder, Tick now);

/// v_t for a window; throws on an empty window.
Vector embed_window(const FrameWindow& window, EmbeddingBackend& embedder, Tick now);

double cosine(const Vector& a, const Vector& b);

// ---------------------------------------------------------------------------
// Threshold sweep over synthetic similarity traces.

struct SimilarityTrace {
    std::string trace_id;
    Tick first_tick = 1;
    /// scores[i][m] is the similarity of proposal m at tick first_tick + i.
    std::vector<std::vector<double>> scores;
    std::vector<int> raw;
    Tick t_star = 0;
};

struct SweepRow {
    GateThresholds thresholds;
    std::size_t traces = 0;
    std::size_t correct = 0;
    std::size_t early = 0;
    std::size_t late = 0;
    std::size_t forced = 0;
    std::size_t suppressed = 0;
};

std::vector<SimilarityTrace> similarity_traces_from_json(const nlohmann::json& j);
nlohmann::json to_json(const std::vector<SimilarityTrace>& traces);

/// Noisy traces: a similarity jump at t*, raw decisions corrupted early or
/// late. Deterministic for a seed.
std::vector<SimilarityTrace> synthetic_similarity_traces(std::size_t count, unsigned seed);

/// Every grid row evaluated over every trace. Empty grid is a validation error.
std::vector<SweepRow> sweep(const std::vector<SimilarityTrace>& traces,
                            const std::vector<GateThresholds>& grid);

/// CSV with header theta_low,theta_high,correct,early,late,forced,suppressed.
/// correct/early/late are percentages of traces; forced/suppressed are tick
/// counts.
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace ipi
