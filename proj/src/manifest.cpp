#include "ipi/manifest.hpp"

#include <fstream>
#include <map>
#include <set>

#include "ipi/error.hpp"
#include "ipi/text.hpp"

namespace ipi {

using nlohmann::json;

std::string to_string(Category c) {
    switch (c) {
        case Category::timing: return "timing";
        case Category::understanding: return "understanding";
        case Category::repeated: return "repeated";
        case Category::cancel: return "cancel";
        case Category::modify: return "modify";
        case Category::multi: return "multi";
        case Category::R2P: return "R2P";
        case Category::RuP: return "RuP";
        case Category::RaP: return "RaP";
    }
    return "unknown";
}

std::optional<Category> category_from(const std::string& s) {
    for (auto c : kAllCategories) {
        if (to_string(c) == s) return c;
    }
    return std::nullopt;
}

std::string to_string(Aspect a) {
    switch (a) {
        case Aspect::monitoring: return "monitoring";
        case Aspect::management: return "management";
        case Aspect::interleaved: return "interleaved";
    }
    return "unknown";
}

std::string display_name(Aspect a) {
    switch (a) {
        case Aspect::monitoring: return "Proactive Monitoring";
        case Aspect::management: return "Proactive Task Management";
        case Aspect::interleaved: return "Interleaved Reactive-Proactive";
    }
    return "unknown";
}

Aspect aspect_of(Category c) {
    switch (c) {
        case Category::timing:
        case Category::understanding:
        case Category::repeated: return Aspect::monitoring;
        case Category::cancel:
        case Category::modify:
        case Category::multi: return Aspect::management;
        default: return Aspect::interleaved;
    }
}

std::string column_label(Category c) {
    switch (c) {
        case Category::timing: return "Timing";
        case Category::understanding: return "Under.";
        case Category::repeated: return "Repeat.";
        case Category::cancel: return "Cancel";
        case Category::modify: return "Modify";
        case Category::multi: return "Multi";
        default: return to_string(c);
    }
}

bool is_multi_turn(Category c) {
    switch (c) {
        case Category::timing:
        case Category::understanding:
        case Category::repeated:
        case Category::multi: return false;
        default: return true;
    }
}

int EvalInstance::stream_length() const { return frames.length; }

Tick EvalInstance::event_tick(const std::string& event_id) const {
    for (const auto& e : events) {
        if (e.event_id == event_id) return e.at_tick;
    }
    throw NotFoundError("instance " + instance_id + " has no event '" + event_id + "'");
}

namespace {

class InstanceParser {
public:
    InstanceParser(const json& j, std::size_t index, const std::filesystem::path& base)
        : j_(j), base_(base) {
        where_ = "instances[" + std::to_string(index) + "]";
    }

    EvalInstance parse() {
        if (!j_.is_object()) fail("", "must be an object");
        EvalInstance in;
        in.instance_id = str(j_, "instance_id");
        if (in.instance_id.empty()) fail("instance_id", "must be non-empty");
        where_ = "instance " + in.instance_id;
        const auto cat = str(j_, "category");
        auto c = category_from(cat);
        if (!c) fail("category", "unknown category '" + cat + "'");
        in.category = *c;
        in.frames = frames(field(j_, "frames"));
        events(in);
        truths(in);
        trace(in);
        requirements(in);
        return in;
    }

private:
    [[noreturn]] void fail(const std::string& field, const std::string& msg) const {
        throw ValidationError(where_ + (field.empty() ? "" : ", field " + field) + ": " + msg);
    }

    const json& field(const json& obj, const char* name) const {
        if (!obj.is_object() || !obj.contains(name)) fail(name, "is required");
        return obj.at(name);
    }

    std::string str(const json& obj, const char* name) const {
        const auto& v = field(obj, name);
        if (!v.is_string()) fail(name, "must be a string");
        return v.get<std::string>();
    }

    int integer(const json& obj, const char* name) const {
        const auto& v = field(obj, name);
        if (!v.is_number_integer()) fail(name, "must be an integer");
        return v.get<int>();
    }

    const json& array(const json& obj, const char* name, bool required) const {
        static const json empty = json::array();
        if (!obj.contains(name)) {
            if (required) fail(name, "is required");
            return empty;
        }
        const auto& v = obj.at(name);
        if (!v.is_array()) fail(name, "must be an array");
        return v;
    }

    std::filesystem::path resolve(const std::string& p) const {
        std::filesystem::path path(p);
        return path.is_relative() && !base_.empty() ? base_ / path : path;
    }

    FrameSpec frames(const json& f) const {
        FrameSpec spec;
        const auto kind = str(f, "kind");
        if (kind == "synthetic") {
            spec.kind = FrameSpec::Kind::synthetic;
            spec.length = integer(f, "length");
        } else if (kind == "list") {
            spec.kind = FrameSpec::Kind::list;
            for (const auto& r : array(f, "refs", true)) {
                if (!r.is_string()) fail("frames.refs", "entries must be strings");
                spec.refs.push_back(r.get<std::string>());
            }
            spec.length = static_cast<int>(spec.refs.size());
        } else if (kind == "directory") {
            spec.kind = FrameSpec::Kind::directory;
            spec.directory = resolve(str(f, "path"));
            try {
                spec.length = DirectoryFrameSource(spec.directory).length();
            } catch (const Error& e) {
                fail("frames.path", e.what());
            }
        } else {
            fail("frames.kind", "unknown frame source kind '" + kind + "'");
        }
        if (spec.length < 1) fail("frames", "stream must contain at least one frame");
        return spec;
    }

    void events(EvalInstance& in) const {
        std::set<std::string> ids;
        for (const auto& e : array(j_, "events", false)) {
            ScheduledEvent ev;
            ev.event_id = str(e, "event_id");
            ev.at_tick = integer(e, "at_tick");
            ev.utterance = str(e, "utterance");
            if (!ids.insert(ev.event_id).second) fail("events", "duplicate event_id " + ev.event_id);
            if (ev.at_tick < 1 || ev.at_tick > in.frames.length) {
                fail("events." + ev.event_id + ".at_tick", "outside the stream");
            }
            if (text::trim(ev.utterance).empty()) fail("events." + ev.event_id, "empty utterance");
            in.events.push_back(std::move(ev));
        }
    }

    bool has_event(const EvalInstance& in, const std::string& id) const {
        for (const auto& e : in.events) {
            if (e.event_id == id) return true;
        }
        return false;
    }

    std::vector<std::string> candidates(const json& list, const std::string& name) const {
        if (!list.is_array()) fail(name, "must be an array");
        if (list.empty()) fail(name, "needs at least one candidate");
        if (list.size() > kMaxCandidates) {
            fail(name, "has " + std::to_string(list.size()) + " candidates; at most " +
                           std::to_string(kMaxCandidates) + " are allowed");
        }
        std::vector<std::string> out;
        for (const auto& c : list) {
            if (!c.is_string()) fail(name, "candidates must be strings");
            if (text::normalize(c.get<std::string>()).empty()) {
                fail(name, "candidate is empty after normalization");
            }
            out.push_back(c.get<std::string>());
        }
        return out;
    }

    void truths(EvalInstance& in) const {
        const auto& t = field(j_, "truth");
        std::map<std::string, std::pair<int, Tick>> last;
        for (const auto& jt : array(t, "triggers", false)) {
            TriggerTruth tt;
            tt.task_key = str(jt, "task_key");
            tt.t_star = integer(jt, "t_star");
            tt.occurrence_index = jt.contains("occurrence_index") ? integer(jt, "occurrence_index") : 0;
            if (tt.t_star < 1 || tt.t_star > in.frames.length) {
                fail("truth.triggers." + tt.task_key + ".t_star", "outside the stream");
            }
            if (auto it = last.find(tt.task_key); it != last.end()) {
                if (tt.occurrence_index <= it->second.first || tt.t_star <= it->second.second) {
                    fail("truth.triggers." + tt.task_key, "occurrences must strictly increase");
                }
            }
            last[tt.task_key] = {tt.occurrence_index, tt.t_star};
            if (jt.contains("response_candidates")) {
                tt.response_candidates =
                    candidates(jt.at("response_candidates"),
                               "truth.triggers." + tt.task_key + ".response_candidates");
            }
            in.triggers.push_back(std::move(tt));
        }
        for (const auto& ja : array(t, "answers", false)) {
            AnswerTruth at;
            at.query_event_id = str(ja, "query_event_id");
            if (!has_event(in, at.query_event_id)) {
                fail("truth.answers.query_event_id", "references missing event '" + at.query_event_id + "'");
            }
            at.candidates = candidates(field(ja, "candidates"), "truth.answers." + at.query_event_id);
            in.answers.push_back(std::move(at));
        }
        for (const auto& js : array(t, "silences", false)) {
            SilenceTruth st;
            st.task_key = str(js, "task_key");
            st.from_event_id = str(js, "from_event_id");
            if (!has_event(in, st.from_event_id)) {
                fail("truth.silences.from_event_id", "references missing event '" + st.from_event_id + "'");
            }
            in.silences.push_back(std::move(st));
        }
    }

    void trace(EvalInstance& in) const {
        if (!j_.contains("trace") || j_.at("trace").is_null()) return;
        const auto& t = j_.at("trace");
        try {
            if (t.is_string()) {
                in.trace = std::make_shared<ScriptedTrace>(load_trace(resolve(t.get<std::string>())));
            } else {
                in.trace = std::make_shared<ScriptedTrace>(ScriptedTrace::from_json(t));
            }
        } catch (const Error& e) {
            fail("trace", e.what());
        }
    }

    void requirements(const EvalInstance& in) const {
        std::map<std::string, int> per_key;
        for (const auto& t : in.triggers) ++per_key[t.task_key];
        const auto triggers = in.triggers.size();
        const auto answers = in.answers.size();
        switch (in.category) {
            case Category::timing:
                if (triggers == 0) fail("truth.triggers", "timing needs a trigger truth");
                break;
            case Category::understanding:
                if (triggers == 0) fail("truth.triggers", "understanding needs a trigger truth");
                for (const auto& t : in.triggers) {
                    if (t.response_candidates.empty()) {
                        fail("truth.triggers." + t.task_key, "understanding needs response_candidates");
                    }
                }
                break;
            case Category::repeated: {
                bool any = false;
                for (const auto& [k, n] : per_key) any = any || n >= 2;
                if (!any) fail("truth.triggers", "repeated needs at least two occurrences of a task");
                break;
            }
            case Category::cancel:
                if (in.silences.empty()) fail("truth.silences", "cancel needs a silence truth");
                break;
            case Category::modify:
                if (triggers == 0 || in.silences.empty()) {
                    fail("truth", "modify needs a trigger truth for the new target and a silence truth");
                }
                break;
            case Category::multi:
                if (per_key.size() < 2) fail("truth.triggers", "multi needs triggers for two or more tasks");
                break;
            case Category::R2P:
            case Category::RuP:
            case Category::RaP:
                if (triggers == 0 || answers == 0) {
                    fail("truth", to_string(in.category) + " needs both trigger and answer truths");
                }
                break;
        }
    }

    const json& j_;
    std::filesystem::path base_;
    std::string where_;
};

}  // namespace

Manifest parse_manifest(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ValidationError("manifest must be a JSON object");
    const auto format = j.value("format", "");
    if (format != kManifestFormat) {
        throw ValidationError("manifest format '" + format + "' is not " + kManifestFormat);
    }
    if (!j.contains("instances") || !j.at("instances").is_array()) {
        throw ValidationError("manifest field instances must be an array");
    }
    Manifest m;
    m.name = j.value("name", "");
    std::set<std::string> ids;
    const auto& list = j.at("instances");
    for (std::size_t i = 0; i < list.size(); ++i) {
        auto in = InstanceParser(list[i], i, base_dir).parse();
        if (!ids.insert(in.instance_id).second) {
            throw ValidationError("instance " + in.instance_id + ": duplicate instance_id");
        }
        m.instances.push_back(std::move(in));
    }
    return m;
}

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ValidationError("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    return parse_manifest(j, path.parent_path());
}

std::unique_ptr<FrameSource> make_frame_source(const EvalInstance& instance) {
    switch (instance.frames.kind) {
        case FrameSpec::Kind::synthetic:
            return std::make_unique<SyntheticFrameSource>(instance.instance_id, instance.frames.length);
        case FrameSpec::Kind::list:
            return std::make_unique<ListFrameSource>(instance.frames.refs);
        case FrameSpec::Kind::directory:
            return std::make_unique<DirectoryFrameSource>(instance.frames.directory);
    }
    throw ConfigError("unknown frame source kind");
}

}  // namespace ipi
