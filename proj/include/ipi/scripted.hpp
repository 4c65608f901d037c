#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ipi/backends.hpp"

namespace ipi {

/// Raw trigger decisions of one target over the span of ticks the trace
/// covers: 1 at the listed ticks, 0 elsewhere inside the span.
struct RawTriggerTrack {
    Tick first = 1;
    Tick last = 0;
    std::set<Tick> fire;
};

/// Everything a scripted run is allowed to ask a model. Lookups that miss
/// raise CoverageError; there are no defaults.
struct ScriptedTrace {
    std::map<std::string, nlohmann::json> classifications;  // event_id -> intent JSON
    std::map<std::string, RawTriggerTrack> raw_triggers;     // target key -> track
    std::map<Tick, Vector> window_vectors;
    std::map<std::string, std::vector<std::string>> proposal_texts;
    std::map<std::string, std::vector<Vector>> proposal_vectors;
    std::map<std::string, std::string> answers;       // event_id -> text
    std::map<std::string, std::string> enhancements;  // target key -> text
    std::map<std::string, std::string> responses;     // target key -> text
    std::size_t dimension = 0;

    /// Validates schema, unit norms, dimension consistency and duplicate
    /// ticks. Errors name the offending key.
    static ScriptedTrace from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    bool raw_trigger(const std::string& key, Tick tick) const;
};

ScriptedTrace load_trace(const std::filesystem::path& path);

/// Deterministic, network-free backend answering from a ScriptedTrace. It
/// speaks the same text protocol as a live model so the parsing paths in
/// the router and responder are exercised unchanged.
class ScriptedChatBackend : public ChatBackend {
public:
    explicit ScriptedChatBackend(std::shared_ptr<const ScriptedTrace> trace);

    std::size_t lookups() const { return lookups_.load(); }

protected:
    std::string do_chat(const ChatRequest& request) override;

private:
    std::shared_ptr<const ScriptedTrace> trace_;
    std::atomic<std::size_t> lookups_{0};
};

class ScriptedEmbeddingBackend : public EmbeddingBackend {
public:
    explicit ScriptedEmbeddingBackend(std::shared_ptr<const ScriptedTrace> trace);

protected:
    Vector do_embed(const EmbedRequest& request) override;

private:
    std::shared_ptr<const ScriptedTrace> trace_;
};

Backends make_scripted_backends(std::shared_ptr<const ScriptedTrace> trace);

}  // namespace ipi
