#include "ipi/scripted.hpp"

#include <cmath>
#include <fstream>

#include "ipi/error.hpp"

namespace ipi {

using nlohmann::json;

namespace {

const std::set<std::string> kIntentKinds = {"reactive_query", "proactive_instruction",
                                            "management_modify", "management_cancel"};

Vector parse_unit_vector(const json& j, const std::string& where, std::size_t& dimension) {
    if (!j.is_array() || j.empty()) throw ParseError(where + ": vector must be a non-empty array");
    Vector v;
    v.reserve(j.size());
    for (const auto& x : j) {
        if (!x.is_number()) throw ParseError(where + ": vector entries must be numbers");
        v.push_back(x.get<double>());
    }
    if (dimension == 0) {
        dimension = v.size();
    } else if (v.size() != dimension) {
        throw ParseError(where + ": dimension " + std::to_string(v.size()) + " != " +
                         std::to_string(dimension));
    }
    if (std::abs(norm(v) - 1.0) > 1e-6) throw ParseError(where + ": vector is not unit norm");
    return v;
}

template <typename Map>
const typename Map::mapped_type& lookup(const Map& map, const std::string& key,
                                        const std::string& table) {
    auto it = map.find(key);
    if (it == map.end()) {
        throw CoverageError("scripted trace has no " + table + " entry for '" + key + "'");
    }
    return it->second;
}

const json& object_at(const json& j, const char* field) {
    static const json empty = json::object();
    if (!j.contains(field)) return empty;
    const auto& v = j.at(field);
    if (!v.is_object()) throw ParseError(std::string("trace field '") + field + "' must be an object");
    return v;
}

std::map<std::string, std::string> string_map(const json& j, const char* field) {
    std::map<std::string, std::string> out;
    for (const auto& [key, value] : object_at(j, field).items()) {
        if (!value.is_string()) {
            throw ParseError(std::string("trace ") + field + "." + key + " must be a string");
        }
        out.emplace(key, value.get<std::string>());
    }
    return out;
}

}  // namespace

ScriptedTrace ScriptedTrace::from_json(const json& j) {
    if (!j.is_object()) throw ParseError("trace must be a JSON object");
    ScriptedTrace t;
    try {
        for (const auto& [id, c] : object_at(j, "classifications").items()) {
            if (!c.is_object() || !c.contains("kind") || !kIntentKinds.count(c.at("kind").get<std::string>())) {
                throw ParseError("trace classifications." + id + " has no valid kind");
            }
            t.classifications.emplace(id, c);
        }
        for (const auto& [key, track] : object_at(j, "raw_triggers").items()) {
            RawTriggerTrack r;
            const auto& span = track.at("span");
            if (!span.is_array() || span.size() != 2) {
                throw ParseError("trace raw_triggers." + key + ".span must be [first, last]");
            }
            r.first = span[0].get<Tick>();
            r.last = span[1].get<Tick>();
            if (r.first < 1 || r.last < r.first) {
                throw ParseError("trace raw_triggers." + key + ".span is invalid");
            }
            for (const auto& tick : track.at("fire")) {
                const auto tk = tick.get<Tick>();
                if (tk < r.first || tk > r.last) {
                    throw ParseError("trace raw_triggers." + key + ": fire tick " +
                                     std::to_string(tk) + " outside span");
                }
                if (!r.fire.insert(tk).second) {
                    throw ParseError("trace raw_triggers." + key + ": duplicate tick " +
                                     std::to_string(tk));
                }
            }
            t.raw_triggers.emplace(key, std::move(r));
        }
        if (j.contains("window_vectors")) {
            for (const auto& entry : j.at("window_vectors")) {
                const auto tick = entry.at("tick").get<Tick>();
                const auto where = "trace window_vectors[tick=" + std::to_string(tick) + "]";
                auto v = parse_unit_vector(entry.at("vector"), where, t.dimension);
                if (!t.window_vectors.emplace(tick, std::move(v)).second) {
                    throw ParseError(where + ": duplicate tick");
                }
            }
        }
        for (const auto& [key, texts] : object_at(j, "proposal_texts").items()) {
            auto list = texts.get<std::vector<std::string>>();
            if (list.empty()) throw ParseError("trace proposal_texts." + key + " is empty");
            t.proposal_texts.emplace(key, std::move(list));
        }
        for (const auto& [key, vectors] : object_at(j, "proposal_vectors").items()) {
            std::vector<Vector> list;
            for (std::size_t m = 0; m < vectors.size(); ++m) {
                list.push_back(parse_unit_vector(
                    vectors[m], "trace proposal_vectors." + key + "[" + std::to_string(m) + "]",
                    t.dimension));
            }
            auto texts = t.proposal_texts.find(key);
            if (texts == t.proposal_texts.end() || texts->second.size() != list.size()) {
                throw ParseError("trace proposal_vectors." + key +
                                 " does not match proposal_texts." + key);
            }
            t.proposal_vectors.emplace(key, std::move(list));
        }
        t.answers = string_map(j, "answers");
        t.enhancements = string_map(j, "enhancements");
        t.responses = string_map(j, "responses");
    } catch (const json::exception& e) {
        throw ParseError(std::string("trace: ") + e.what());
    }
    return t;
}

json ScriptedTrace::to_json() const {
    json j;
    j["classifications"] = json::object();
    for (const auto& [k, v] : classifications) j["classifications"][k] = v;
    j["raw_triggers"] = json::object();
    for (const auto& [k, r] : raw_triggers) {
        j["raw_triggers"][k] = {{"span", {r.first, r.last}}, {"fire", r.fire}};
    }
    j["window_vectors"] = json::array();
    for (const auto& [tick, v] : window_vectors) {
        j["window_vectors"].push_back({{"tick", tick}, {"vector", v}});
    }
    j["proposal_texts"] = proposal_texts;
    j["proposal_vectors"] = proposal_vectors;
    j["answers"] = answers;
    j["enhancements"] = enhancements;
    j["responses"] = responses;
    return j;
}

bool ScriptedTrace::raw_trigger(const std::string& key, Tick tick) const {
    const auto& track = lookup(raw_triggers, key, "raw_triggers");
    if (tick < track.first || tick > track.last) {
        throw CoverageError("scripted trace has no raw trigger for ('" + key + "', tick " +
                            std::to_string(tick) + ")");
    }
    return track.fire.count(tick) > 0;
}

ScriptedTrace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open trace " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("trace " + path.string() + ": " + e.what());
    }
    return ScriptedTrace::from_json(j);
}

ScriptedChatBackend::ScriptedChatBackend(std::shared_ptr<const ScriptedTrace> trace)
    : trace_(std::move(trace)) {}

std::string ScriptedChatBackend::do_chat(const ChatRequest& request) {
    ++lookups_;
    const auto& t = *trace_;
    switch (request.purpose) {
        case ChatPurpose::classify:
            return lookup(t.classifications, request.event_id, "classifications").dump();
        case ChatPurpose::proposals:
            return json(lookup(t.proposal_texts, request.task_key, "proposal_texts")).dump();
        case ChatPurpose::enhance: {
            auto it = t.enhancements.find(request.task_key);
            return it == t.enhancements.end() ? std::string() : it->second;
        }
        case ChatPurpose::raw_trigger: {
            const auto variant = request.task_key + "#reminder";
            const auto& key =
                request.reminder && t.raw_triggers.count(variant) ? variant : request.task_key;
            return t.raw_trigger(key, request.tick) ? "yes" : "no";
        }
        case ChatPurpose::proactive_response: {
            auto it = t.responses.find(request.task_key);
            return it == t.responses.end() ? std::string() : it->second;
        }
        case ChatPurpose::reactive_answer:
        case ChatPurpose::passthrough:
            return lookup(t.answers, request.event_id, "answers");
    }
    throw CoverageError("unsupported scripted purpose");
}

ScriptedEmbeddingBackend::ScriptedEmbeddingBackend(std::shared_ptr<const ScriptedTrace> trace)
    : EmbeddingBackend(trace->dimension ? std::optional<std::size_t>(trace->dimension)
                                        : std::nullopt),
      trace_(std::move(trace)) {}

Vector ScriptedEmbeddingBackend::do_embed(const EmbedRequest& request) {
    if (request.kind == EmbedRequest::Kind::window) {
        auto it = trace_->window_vectors.find(request.window.end_tick);
        if (it == trace_->window_vectors.end()) {
            throw CoverageError("scripted trace has no window vector for tick " +
                                std::to_string(request.window.end_tick));
        }
        return it->second;
    }
    const auto& vectors = lookup(trace_->proposal_vectors, request.task_key, "proposal_vectors");
    if (request.proposal_index < 0 ||
        static_cast<std::size_t>(request.proposal_index) >= vectors.size()) {
        throw CoverageError("scripted trace has no proposal vector ('" + request.task_key + "', " +
                            std::to_string(request.proposal_index) + ")");
    }
    return vectors[static_cast<std::size_t>(request.proposal_index)];
}

Backends make_scripted_backends(std::shared_ptr<const ScriptedTrace> trace) {
    Backends b;
    b.chat = std::make_shared<ScriptedChatBackend>(trace);
    b.embedding = std::make_shared<CachingEmbedder>(std::make_shared<ScriptedEmbeddingBackend>(trace));
    return b;
}

}  // namespace ipi
