#include "ipi/gating.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <spdlog/spdlog.h>

#include "ipi/error.hpp"
#include "ipi/prompts.hpp"
#include "ipi/text.hpp"

namespace ipi {

using nlohmann::json;

GateThresholds GateThresholds::identity() {
    return {-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
}

void GateThresholds::validate() const {
    if (std::isnan(theta_low) || std::isnan(theta_high)) {
        throw ValidationError("gate thresholds must not be NaN");
    }
    if (theta_low > theta_high) {
        throw ValidationError("theta_low (" + text::format_double(theta_low) +
                              ") exceeds theta_high (" + text::format_double(theta_high) + ")");
    }
}

namespace {

json threshold_json(double v) {
    if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
    return v;
}

double threshold_value(const json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return parse_threshold(j.get<std::string>());
    throw ValidationError("threshold must be a number or \"-inf\"/\"inf\"");
}

}  // namespace

double parse_threshold(const std::string& text) {
    const auto t = text::lower(text::trim(text));
    if (t == "-inf" || t == "-infinity") return -std::numeric_limits<double>::infinity();
    if (t == "inf" || t == "+inf" || t == "infinity") return std::numeric_limits<double>::infinity();
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(t, &used);
    } catch (const std::exception&) {
        throw ValidationError("bad threshold '" + text + "'");
    }
    if (used != t.size()) throw ValidationError("bad threshold '" + text + "'");
    return v;
}

json to_json(const GateThresholds& t) {
    return {{"theta_low", threshold_json(t.theta_low)}, {"theta_high", threshold_json(t.theta_high)}};
}

GateThresholds thresholds_from_json(const json& j) {
    GateThresholds t;
    if (j.contains("theta_low")) t.theta_low = threshold_value(j.at("theta_low"));
    if (j.contains("theta_high")) t.theta_high = threshold_value(j.at("theta_high"));
    t.validate();
    return t;
}

std::string to_string(GateReason reason) {
    switch (reason) {
        case GateReason::pass_through: return "pass_through";
        case GateReason::suppressed: return "suppressed";
        case GateReason::forced: return "forced";
        case GateReason::unchanged: return "unchanged";
    }
    return "unknown";
}

std::optional<GateReason> gate_reason_from(const std::string& s) {
    for (auto r : {GateReason::pass_through, GateReason::suppressed, GateReason::forced,
                   GateReason::unchanged}) {
        if (to_string(r) == s) return r;
    }
    return std::nullopt;
}

GateDecision gate_decision_from_json(const json& j) {
    GateDecision d;
    auto id = TaskId::parse(j.at("task_id").get<std::string>());
    if (!id) throw ParseError("bad task id in gate decision");
    d.task_id = *id;
    d.revision = j.at("revision").get<int>();
    d.raw = j.at("raw").get<int>();
    if (!j.at("delta").is_null()) d.delta = j.at("delta").get<double>();
    d.final = j.at("final").get<int>();
    auto reason = gate_reason_from(j.at("reason").get<std::string>());
    if (!reason) throw ParseError("unknown gate reason " + j.at("reason").dump());
    d.reason = *reason;
    return d;
}

json to_json(const GateDecision& d) {
    return {{"task_id", d.task_id.str()},
            {"revision", d.revision},
            {"raw", d.raw},
            {"delta", d.delta ? json(*d.delta) : json(nullptr)},
            {"final", d.final},
            {"reason", to_string(d.reason)}};
}

json to_json(const ProposalSet& p) {
    return {{"task_id", p.task_id.str()},
            {"revision", p.revision},
            {"proposals", p.proposals},
            {"embeddings", p.embeddings}};
}

ProposalSet proposal_set_from_json(const json& j) {
    ProposalSet p;
    p.task_id = TaskId::parse(j.at("task_id").get<std::string>()).value();
    p.revision = j.at("revision").get<int>();
    p.proposals = j.at("proposals").get<std::vector<std::string>>();
    p.embeddings = j.at("embeddings").get<std::vector<Vector>>();
    return p;
}

json to_json(const GateState& s) {
    json history = json::array();
    for (const auto& [tick, d] : s.delta_history) history.push_back({tick, d});
    return {{"task_id", s.task_id.str()},
            {"revision", s.revision},
            {"prev_scores", s.prev_scores ? json(*s.prev_scores) : json(nullptr)},
            {"last_tick", s.last_tick},
            {"delta_history", history}};
}

GateState gate_state_from_json(const json& j) {
    GateState s;
    s.task_id = TaskId::parse(j.at("task_id").get<std::string>()).value();
    s.revision = j.at("revision").get<int>();
    if (!j.at("prev_scores").is_null()) s.prev_scores = j.at("prev_scores").get<std::vector<double>>();
    s.last_tick = j.at("last_tick").get<Tick>();
    for (const auto& h : j.at("delta_history")) {
        s.delta_history.emplace_back(h.at(0).get<Tick>(), h.at(1).get<double>());
    }
    return s;
}

double cosine(const Vector& a, const Vector& b) {
    if (a.size() != b.size()) {
        throw ConfigError("embedding dimension mismatch: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
    }
    // Both sides are unit-normalized by the embedding backend.
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot;
}

DeltaResult delta(const GateState& state, const ProposalSet& proposals, const Vector& window_vec,
                  Tick t) {
    if (proposals.embeddings.empty()) throw ValidationError("proposal set is empty");
    DeltaResult out;
    out.state = state;
    if (state.task_id != proposals.task_id || state.revision != proposals.revision) {
        out.state = GateState{proposals.task_id, proposals.revision, std::nullopt, 0, {}};
    }
    out.scores.reserve(proposals.embeddings.size());
    for (const auto& e : proposals.embeddings) out.scores.push_back(cosine(e, window_vec));

    const auto& prev = out.state.prev_scores;
    if (prev && prev->size() == out.scores.size() && out.state.last_tick == t - 1) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < out.scores.size(); ++m) {
            best = std::max(best, out.scores[m] - (*prev)[m]);
        }
        out.delta = best;
        auto& history = out.state.delta_history;
        history.emplace_back(t, best);
        if (history.size() > GateState::kHistoryLimit) history.erase(history.begin());
    }
    out.state.prev_scores = out.scores;
    out.state.last_tick = t;
    return out;
}

GateDecision gate(int raw, std::optional<double> delta, const GateThresholds& thresholds) {
    GateDecision d;
    d.raw = raw != 0 ? 1 : 0;
    d.delta = delta;
    if (!delta) {
        d.final = d.raw;
        d.reason = GateReason::pass_through;
    } else if (d.raw == 1) {
        const bool suppress = *delta < thresholds.theta_low;
        d.final = suppress ? 0 : 1;
        d.reason = suppress ? GateReason::suppressed : GateReason::unchanged;
    } else {
        const bool force = *delta > thresholds.theta_high;
        d.final = force ? 1 : 0;
        d.reason = force ? GateReason::forced : GateReason::unchanged;
    }
    return d;
}

namespace {

std::vector<std::string> parse_proposal_list(const std::string& reply, int count) {
    auto body = text::trim(reply);
    // Tolerate fenced replies.
    if (const auto open = body.find('['), close = body.rfind(']');
        open != std::string::npos && close != std::string::npos && close > open) {
        body = body.substr(open, close - open + 1);
    }
    const auto j = json::parse(body, nullptr, false);
    if (!j.is_array()) return {};
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& item : j) {
        if (!item.is_string()) continue;
        auto s = text::trim(item.get<std::string>());
        if (s.empty() || !seen.insert(text::normalize(s)).second) continue;
        out.push_back(std::move(s));
        if (static_cast<int>(out.size()) == count) break;
    }
    return out;
}

}  // namespace

ProposalSet generate_proposals(const ProactiveTask& task, int count, ChatBackend& chat,
                               EmbeddingBackend& embedder, Tick now) {
    if (count < 1) throw ValidationError("proposal count must be >= 1");
    ProposalSet set;
    set.task_id = task.id;
    set.revision = task.revision;

    ChatRequest request;
    request.purpose = ChatPurpose::proposals;
    request.task_key = task.target_key;
    request.current_tick = now;
    request.tick = now;
    request.messages.push_back(
        {"user",
         prompts::render("proposals", {{"target", task.enhanced_target},
                                       {"count", std::to_string(count)}}),
         {}});

    for (int attempt = 0; attempt < 2 && set.proposals.empty(); ++attempt) {
        try {
            set.proposals = parse_proposal_list(chat.chat(request), count);
        } catch (const BackendUnavailable& e) {
            spdlog::warn("proposal generation for {} failed: {}", task.id.str(), e.what());
            break;
        }
    }
    if (set.proposals.empty()) {
        spdlog::warn("proposal generation for {} degraded to the raw target", task.id.str());
        set.proposals = {task.target};
    }

    for (std::size_t m = 0; m < set.proposals.size(); ++m) {
        EmbedRequest er;
        er.kind = EmbedRequest::Kind::text;
        er.text = set.proposals[m];
        er.current_tick = now;
        er.task_key = task.target_key;
        er.proposal_index = static_cast<int>(m);
        set.embeddings.push_back(embedder.embed(er));
    }
    return set;
}

Vector embed_window(const FrameWindow& window, EmbeddingBackend& embedder, Tick now) {
    if (window.empty()) throw ValidationError("cannot embed an empty window");
    EmbedRequest er;
    er.kind = EmbedRequest::Kind::window;
    er.window = window;
    er.current_tick = now;
    return embedder.embed(er);
}

}  // namespace ipi
