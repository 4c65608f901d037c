#include "ipi/scoring.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "ipi/error.hpp"
#include "ipi/responder.hpp"
#include "ipi/text.hpp"

namespace ipi {

using nlohmann::json;

std::vector<const AgentOutput*> InstanceTranscript::triggers_for(const std::string& key) const {
    std::vector<const AgentOutput*> out;
    for (const auto& o : outputs) {
        if (o.kind == OutputKind::proactive_trigger && o.target_key && *o.target_key == key) {
            out.push_back(&o);
        }
    }
    std::stable_sort(out.begin(), out.end(),
                     [](const AgentOutput* a, const AgentOutput* b) { return a->at_tick < b->at_tick; });
    return out;
}

std::string to_jsonl(const InstanceTranscript& t) {
    std::ostringstream out;
    out << json{{"type", "header"},
                {"instance_id", t.instance_id},
                {"category", to_string(t.category)},
                {"mode", t.mode},
                {"thresholds", to_json(t.thresholds)},
                {"with_reminder", t.with_reminder},
                {"stream_length", t.stream_length},
                {"evaluated_ticks", t.evaluated_ticks}}
               .dump()
        << '\n';
    for (const auto& o : t.outputs) out << json{{"type", "output"}, {"output", to_json(o)}}.dump() << '\n';
    for (const auto& [tick, d] : t.decisions) {
        out << json{{"type", "gate"}, {"tick", tick}, {"decision", to_json(d)}}.dump() << '\n';
    }
    out << json{{"type", "end"},
                {"evaluation_error",
                 t.evaluation_error ? json(*t.evaluation_error) : json(nullptr)}}
               .dump()
        << '\n';
    return out.str();
}

InstanceTranscript transcript_from_jsonl(const std::string& text) {
    InstanceTranscript t;
    bool header = false;
    bool end = false;
    std::istringstream in(text);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::trim(line).empty()) continue;
        const auto j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw ParseError("transcript line " + std::to_string(n) + " is not a JSON object");
        }
        try {
            const auto type = j.at("type").get<std::string>();
            if (type == "header") {
                t.instance_id = j.at("instance_id").get<std::string>();
                auto c = category_from(j.at("category").get<std::string>());
                if (!c) throw ParseError("unknown category");
                t.category = *c;
                t.mode = j.at("mode").get<std::string>();
                t.thresholds = thresholds_from_json(j.at("thresholds"));
                t.with_reminder = j.at("with_reminder").get<bool>();
                t.stream_length = j.at("stream_length").get<int>();
                t.evaluated_ticks = j.at("evaluated_ticks").get<std::vector<Tick>>();
                header = true;
            } else if (type == "output") {
                t.outputs.push_back(agent_output_from_json(j.at("output")));
            } else if (type == "gate") {
                t.decisions.emplace_back(j.at("tick").get<Tick>(),
                                         gate_decision_from_json(j.at("decision")));
            } else if (type == "end") {
                if (!j.at("evaluation_error").is_null()) {
                    t.evaluation_error = j.at("evaluation_error").get<std::string>();
                }
                end = true;
            } else {
                throw ParseError("unknown line type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw ParseError("transcript line " + std::to_string(n) + ": " + e.what());
        }
    }
    if (!header || !end) throw ParseError("transcript is truncated (missing header or end line)");
    return t;
}

TriggerScore score_trigger(const InstanceTranscript& t, const TriggerTruth& truth) {
    TriggerScore s;
    for (const auto* o : t.triggers_for(truth.task_key)) {
        if (o->at_tick >= truth.t_star - kEvalRadius && o->at_tick <= truth.t_star + kEvalRadius) {
            s.first = o->at_tick;
            s.output = o;
            break;
        }
    }
    s.verdict = classify_timing(s.first, truth.t_star);
    return s;
}

RepeatedScore score_repeated(const InstanceTranscript& t, const std::vector<TriggerTruth>& truths) {
    RepeatedScore s;
    if (truths.empty()) return s;
    const auto triggers = t.triggers_for(truths.front().task_key);
    std::vector<bool> used(triggers.size(), false);
    auto ordered = truths;
    std::sort(ordered.begin(), ordered.end(),
              [](const TriggerTruth& a, const TriggerTruth& b) { return a.t_star < b.t_star; });
    for (const auto& truth : ordered) {
        for (std::size_t i = 0; i < triggers.size(); ++i) {
            const auto tick = triggers[i]->at_tick;
            if (!used[i] && tick >= truth.t_star - kCorrectRadius && tick <= truth.t_star + kCorrectRadius) {
                used[i] = true;
                ++s.matched;
                break;
            }
        }
    }
    s.spurious = static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
    s.correct = s.matched == truths.size();
    return s;
}

bool match_answer(const std::string& prediction, const std::vector<std::string>& candidates) {
    if (prediction == kErrorAnswer) return false;
    const auto p = text::normalize(prediction);
    if (p.empty()) return false;
    for (const auto& c : candidates) {
        const auto n = text::normalize(c);
        if (n.empty()) continue;
        if (text::contains(p, n) || text::contains(n, p)) return true;
    }
    return false;
}

bool match_answer(const std::string& prediction, const AnswerTruth& truth) {
    return match_answer(prediction, truth.candidates);
}

std::string to_string(Verdict v) {
    switch (v) {
        case Verdict::correct: return "correct";
        case Verdict::incorrect: return "incorrect";
        case Verdict::evaluation_error: return "evaluation_error";
    }
    return "unknown";
}

InstanceVerdict score_instance(const InstanceTranscript& t, const EvalInstance& instance) {
    if (t.instance_id != instance.instance_id) {
        throw ValidationError("transcript " + t.instance_id + " scored against instance " +
                              instance.instance_id);
    }
    InstanceVerdict v;
    v.instance_id = instance.instance_id;
    v.category = instance.category;
    if (t.evaluation_error) {
        v.verdict = Verdict::evaluation_error;
        v.error = t.evaluation_error;
        return v;
    }

    std::vector<std::string> key_order;
    std::map<std::string, std::vector<TriggerTruth>> by_key;
    for (const auto& truth : instance.triggers) {
        if (!by_key.count(truth.task_key)) key_order.push_back(truth.task_key);
        by_key[truth.task_key].push_back(truth);
    }
    bool first_truth = true;
    for (const auto& key : key_order) {
        const auto& group = by_key[key];
        if (group.size() >= 2) {
            const auto r = score_repeated(t, group);
            v.spurious += r.spurious;
            v.checks.push_back({"repeated:" + key, r.correct,
                                std::to_string(r.matched) + "/" + std::to_string(group.size()) +
                                    " occurrences matched, " + std::to_string(r.spurious) + " spurious"});
            first_truth = false;
            continue;
        }
        const auto& truth = group.front();
        const auto s = score_trigger(t, truth);
        if (first_truth) {
            v.timing = s.verdict;
            v.missed = !s.first;
            first_truth = false;
        }
        v.checks.push_back({"trigger:" + key, s.verdict == TimingVerdict::correct,
                            "t*=" + std::to_string(truth.t_star) + " first=" +
                                (s.first ? std::to_string(*s.first) : std::string("none")) + " " +
                                to_string(s.verdict)});
        if (!truth.response_candidates.empty()) {
            const bool ok = s.verdict == TimingVerdict::correct && s.output && s.output->text &&
                            match_answer(*s.output->text, truth.response_candidates);
            v.checks.push_back({"response:" + key, ok,
                                s.output && s.output->text ? *s.output->text : std::string("no trigger")});
        }
    }

    for (const auto& a : instance.answers) {
        const AgentOutput* answer = nullptr;
        for (const auto& o : t.outputs) {
            if (o.kind == OutputKind::immediate_response && o.event_id && *o.event_id == a.query_event_id) {
                answer = &o;
                break;
            }
        }
        const bool ok = answer && answer->text && match_answer(*answer->text, a);
        v.checks.push_back({"answer:" + a.query_event_id, ok,
                            answer && answer->text ? *answer->text : std::string("no answer")});
    }

    for (const auto& s : instance.silences) {
        const auto from = instance.event_tick(s.from_event_id);
        std::size_t late_triggers = 0;
        for (const auto* o : t.triggers_for(s.task_key)) {
            if (o->at_tick >= from) ++late_triggers;
        }
        v.checks.push_back({"silence:" + s.task_key, late_triggers == 0,
                            std::to_string(late_triggers) + " triggers at or after t=" +
                                std::to_string(from)});
    }

    const bool all = !v.checks.empty() &&
                     std::all_of(v.checks.begin(), v.checks.end(), [](const Check& c) { return c.passed; });
    v.verdict = all ? Verdict::correct : Verdict::incorrect;
    return v;
}

json to_json(const InstanceVerdict& v) {
    json checks = json::array();
    for (const auto& c : v.checks) {
        checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    }
    json j = {{"instance_id", v.instance_id},
              {"category", to_string(v.category)},
              {"verdict", to_string(v.verdict)},
              {"missed", v.missed},
              {"spurious_triggers", v.spurious},
              {"checks", checks}};
    j["timing"] = v.timing ? json(to_string(*v.timing)) : json(nullptr);
    j["error"] = v.error ? json(*v.error) : json(nullptr);
    return j;
}

}  // namespace ipi
