#include "ipi/router.hpp"

#include <algorithm>
#include <array>
#include <regex>
#include <sstream>

#include <spdlog/spdlog.h>

#include "ipi/error.hpp"
#include "ipi/prompts.hpp"
#include "ipi/responder.hpp"
#include "ipi/text.hpp"

namespace ipi {

using nlohmann::json;

std::string to_string(IntentKind kind) {
    switch (kind) {
        case IntentKind::reactive_query: return "reactive_query";
        case IntentKind::proactive_instruction: return "proactive_instruction";
        case IntentKind::management_modify: return "management_modify";
        case IntentKind::management_cancel: return "management_cancel";
    }
    return "unknown";
}

std::optional<IntentKind> intent_kind_from(const std::string& s) {
    for (auto k : {IntentKind::reactive_query, IntentKind::proactive_instruction,
                   IntentKind::management_modify, IntentKind::management_cancel}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

namespace {

std::string strip_edges(std::string s) {
    s = text::trim(s);
    while (!s.empty() && std::string(".!?,;:\"'").find(s.back()) != std::string::npos) s.pop_back();
    while (!s.empty() && std::string("\"',;:").find(s.front()) != std::string::npos) s.erase(0, 1);
    return text::trim(s);
}

std::string strip_leading_words(std::string s, std::initializer_list<const char*> words) {
    bool again = true;
    while (again) {
        again = false;
        s = text::trim(s);
        const auto low = text::lower(s);
        for (const char* w : words) {
            const std::string word = w;
            if (low.rfind(word + " ", 0) == 0) {
                s = s.substr(word.size() + 1);
                again = true;
                break;
            }
        }
    }
    return s;
}

std::string strip_trailing_words(std::string s, std::initializer_list<const char*> words) {
    s = strip_edges(s);
    const auto low = text::lower(s);
    for (const char* w : words) {
        const std::string word = w;
        if (low.size() > word.size() && low.compare(low.size() - word.size(), word.size(), word) == 0 &&
            low[low.size() - word.size() - 1] == ' ') {
            return strip_edges(s.substr(0, s.size() - word.size()));
        }
    }
    return s;
}

constexpr std::array kCancelPhrases = {
    "cancel",          "stop watching",  "stop monitoring", "stop tracking", "stop reminding",
    "stop alerting",   "stop notifying", "stop looking",    "never mind",    "nevermind",
    "no longer",       "don't remind",   "do not remind",   "don't tell me", "do not tell me",
    "forget about",    "forget it",      "don't bother",    "no need to",
};

constexpr std::array kModifyPhrases = {
    "instead", "change it to", "change that to", "change the", "switch to", "switch it to",
    "rather than", "update it to", "update the",
};

// Phrases that introduce a monitoring target, longest first so that the
// target text starts right after the phrase.
constexpr std::array kProactivePhrases = {
    "keep an eye out for", "let me know whenever", "tell me whenever", "notify me whenever",
    "alert me whenever",   "remind me whenever",   "let me know when",  "let me know if",
    "let me know once",    "remind me when",       "remind me if",      "remind me once",
    "tell me when",        "tell me if",           "tell me once",      "notify me when",
    "notify me if",        "alert me when",        "alert me if",       "warn me when",
    "warn me if",          "ping me when",         "watch for",         "look out for",
    "whenever",
};

// The new target of a modification, after one of these.
constexpr std::array kModifyTargetPhrases = {
    "change it to", "change that to", "switch it to", "switch to", "update it to",
};

std::optional<std::size_t> find_phrase(const std::string& low, const std::string& phrase) {
    std::size_t pos = 0;
    while ((pos = low.find(phrase, pos)) != std::string::npos) {
        const bool left = pos == 0 || !std::isalnum(static_cast<unsigned char>(low[pos - 1]));
        const auto end = pos + phrase.size();
        const bool right = end >= low.size() || !std::isalnum(static_cast<unsigned char>(low[end]));
        if (left && right) return pos;
        ++pos;
    }
    return std::nullopt;
}

template <std::size_t N>
bool has_any(const std::string& low, const std::array<const char*, N>& phrases) {
    return std::any_of(phrases.begin(), phrases.end(),
                       [&](const char* p) { return find_phrase(low, p).has_value(); });
}

template <std::size_t N>
std::optional<std::string> text_after(const std::string& original,
                                      const std::array<const char*, N>& phrases) {
    const auto low = text::lower(original);
    std::optional<std::pair<std::size_t, std::size_t>> best;
    for (const char* p : phrases) {
        if (auto pos = find_phrase(low, p)) {
            const std::size_t len = std::string(p).size();
            if (!best || *pos < best->first || (*pos == best->first && len > best->second)) {
                best = {*pos, len};
            }
        }
    }
    if (!best) return std::nullopt;
    return original.substr(best->first + best->second);
}

std::vector<TargetSpec> to_specs(const std::vector<std::string>& texts) {
    std::vector<TargetSpec> out;
    for (const auto& t : texts) out.push_back({t, target_key_for(t)});
    return out;
}

std::string render_tasks(const std::vector<ProactiveTask>& active) {
    if (active.empty()) return "(none)";
    std::ostringstream out;
    for (const auto& t : active) {
        out << "- " << t.id.str() << " [" << t.target_key << "]: " << t.target << '\n';
    }
    auto s = out.str();
    s.pop_back();
    return s;
}

}  // namespace

std::vector<std::string> split_targets(const std::string& raw) {
    static const std::regex sep(R"(\s*,\s*(?:and|or)?\s+(?:when|if|whenever)\s+|\s+(?:and|or)\s+(?:when|if|whenever)\s+|\s*,\s*or\s+|\s+or\s+|\s*,\s*|\s*;\s*)",
                                std::regex::icase);
    std::vector<std::string> out;
    std::sregex_token_iterator it(raw.begin(), raw.end(), sep, -1), end;
    for (; it != end; ++it) {
        auto part = strip_leading_words(it->str(), {"when", "if", "whenever", "once"});
        part = strip_trailing_words(part, {"instead", "please", "thanks"});
        part = strip_edges(part);
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

IntentClass classify_by_rules(const std::string& utterance) {
    const auto low = text::lower(utterance);
    IntentClass ic;
    ic.from_rules = true;

    if (has_any(low, kCancelPhrases)) {
        ic.kind = IntentKind::management_cancel;
        return ic;
    }
    if (has_any(low, kModifyPhrases)) {
        auto rest = text_after(utterance, kModifyTargetPhrases);
        if (!rest) rest = text_after(utterance, kProactivePhrases);
        if (rest) {
            auto targets = split_targets(*rest);
            if (!targets.empty()) {
                ic.kind = IntentKind::management_modify;
                ic.targets = to_specs(targets);
                return ic;
            }
        }
    }
    if (auto rest = text_after(utterance, kProactivePhrases)) {
        auto targets = split_targets(*rest);
        if (!targets.empty()) {
            if (utterance.find('?') != std::string::npos) {
                spdlog::warn("utterance mixes a question with an instruction; routed as proactive: '{}'",
                             utterance);
            }
            ic.kind = IntentKind::proactive_instruction;
            ic.targets = to_specs(targets);
            return ic;
        }
    }
    ic.kind = IntentKind::reactive_query;
    return ic;
}

std::optional<IntentClass> parse_intent(const std::string& reply) {
    auto body = text::trim(reply);
    // Tolerate a fenced block or prose around the object.
    const auto open = body.find('{');
    const auto close = body.rfind('}');
    if (open == std::string::npos || close == std::string::npos || close < open) return std::nullopt;
    json j = json::parse(body.substr(open, close - open + 1), nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;

    IntentClass ic;
    if (!j.contains("kind") || !j["kind"].is_string()) return std::nullopt;
    auto kind = intent_kind_from(j["kind"].get<std::string>());
    if (!kind) return std::nullopt;
    ic.kind = *kind;

    if (j.contains("task_reference") && !j["task_reference"].is_null()) {
        if (!j["task_reference"].is_string()) return std::nullopt;
        auto ref = text::trim(j["task_reference"].get<std::string>());
        if (!ref.empty()) ic.task_reference = ref;
    }
    if (j.contains("targets") && !j["targets"].is_null()) {
        if (!j["targets"].is_array()) return std::nullopt;
        for (const auto& t : j["targets"]) {
            TargetSpec spec;
            if (t.is_string()) {
                spec.text = strip_edges(t.get<std::string>());
            } else if (t.is_object() && t.contains("text") && t["text"].is_string()) {
                spec.text = strip_edges(t["text"].get<std::string>());
                if (t.contains("key")) {
                    if (!t["key"].is_string()) return std::nullopt;
                    spec.key = t["key"].get<std::string>();
                }
            } else {
                return std::nullopt;
            }
            if (spec.text.empty()) return std::nullopt;
            if (spec.key.empty()) spec.key = target_key_for(spec.text);
            ic.targets.push_back(std::move(spec));
        }
    }
    const bool needs_targets =
        ic.kind == IntentKind::proactive_instruction || ic.kind == IntentKind::management_modify;
    if (needs_targets && ic.targets.empty()) return std::nullopt;
    if (!needs_targets) ic.targets.clear();
    if (ic.kind == IntentKind::reactive_query || ic.kind == IntentKind::proactive_instruction) {
        ic.task_reference.reset();
    }
    return ic;
}

IntentRouter::IntentRouter(std::shared_ptr<ChatBackend> chat) : chat_(std::move(chat)) {
    if (!chat_) throw ValidationError("router needs a chat backend");
}

IntentClass IntentRouter::classify(const std::string& utterance,
                                   const std::vector<InteractionTurn>& context,
                                   const std::vector<ProactiveTask>& active,
                                   const std::string& event_id, Tick now) const {
    if (text::trim(utterance).empty()) throw ValidationError("utterance is empty");
    ChatRequest r;
    r.purpose = ChatPurpose::classify;
    r.event_id = event_id;
    r.current_tick = now;
    r.tick = now;
    r.messages.push_back({"user",
                          prompts::render("classify", {{"tasks", render_tasks(active)},
                                                       {"context", render_context(context)},
                                                       {"utterance", utterance}}),
                          {}});
    const auto reply = chat_->chat(r);
    if (auto parsed = parse_intent(reply)) return *parsed;
    spdlog::warn("malformed classification for '{}'; using keyword rules", utterance);
    return classify_by_rules(utterance);
}

std::string to_string(OutputKind kind) {
    switch (kind) {
        case OutputKind::proactive_trigger: return "proactive_trigger";
        case OutputKind::task_update: return "task_update";
        case OutputKind::immediate_response: return "immediate_response";
        case OutputKind::no_action: return "no_action";
    }
    return "unknown";
}

namespace {

std::optional<OutputKind> output_kind_from(const std::string& s) {
    for (auto k : {OutputKind::proactive_trigger, OutputKind::task_update,
                   OutputKind::immediate_response, OutputKind::no_action}) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

}  // namespace

bool well_formed(const AgentOutput& out) {
    const bool has_text = out.text && !text::trim(*out.text).empty();
    switch (out.kind) {
        case OutputKind::proactive_trigger: return has_text && out.task_id.has_value();
        case OutputKind::immediate_response: return has_text;
        case OutputKind::task_update: return !out.task_ids.empty();
        case OutputKind::no_action: return !out.task_id && !out.text && out.task_ids.empty();
    }
    return false;
}

json to_json(const AgentOutput& out) {
    json j = {{"tick", out.at_tick}, {"kind", to_string(out.kind)}};
    if (out.task_id) j["task_id"] = out.task_id->str();
    if (!out.task_ids.empty()) {
        j["task_ids"] = json::array();
        for (auto id : out.task_ids) j["task_ids"].push_back(id.str());
    }
    if (out.text) j["text"] = *out.text;
    if (out.event_id) j["event_id"] = *out.event_id;
    if (out.target_key) j["target_key"] = *out.target_key;
    if (out.revision) j["revision"] = *out.revision;
    if (out.reason) j["reason"] = to_string(*out.reason);
    if (out.diagnostic) j["diagnostic"] = *out.diagnostic;
    return j;
}

AgentOutput agent_output_from_json(const json& j) {
    AgentOutput out;
    out.at_tick = j.at("tick").get<Tick>();
    auto kind = output_kind_from(j.at("kind").get<std::string>());
    if (!kind) throw ParseError("unknown output kind " + j.at("kind").dump());
    out.kind = *kind;
    auto id_of = [](const json& v) {
        auto id = TaskId::parse(v.get<std::string>());
        if (!id) throw ParseError("bad task id " + v.dump());
        return *id;
    };
    if (j.contains("task_id")) out.task_id = id_of(j["task_id"]);
    if (j.contains("task_ids")) {
        for (const auto& v : j["task_ids"]) out.task_ids.push_back(id_of(v));
    }
    if (j.contains("text")) out.text = j["text"].get<std::string>();
    if (j.contains("event_id")) out.event_id = j["event_id"].get<std::string>();
    if (j.contains("target_key")) out.target_key = j["target_key"].get<std::string>();
    if (j.contains("revision")) out.revision = j["revision"].get<int>();
    if (j.contains("reason")) {
        out.reason = gate_reason_from(j["reason"].get<std::string>());
        if (!out.reason) throw ParseError("unknown gate reason " + j["reason"].dump());
    }
    if (j.contains("diagnostic")) out.diagnostic = j["diagnostic"].get<std::string>();
    return out;
}

}  // namespace ipi
