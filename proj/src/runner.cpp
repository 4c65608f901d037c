#include "ipi/runner.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "ipi/error.hpp"
#include "ipi/scripted.hpp"
#include "ipi/verdict.hpp"

namespace ipi {

std::vector<Tick> evaluated_ticks(const EvalInstance& instance) {
    const Tick len = instance.stream_length();
    std::set<Tick> ticks;
    if (is_multi_turn(instance.category)) {
        Tick span = 0;
        for (const auto& e : instance.events) span = std::max(span, e.at_tick);
        for (const auto& t : instance.triggers) span = std::max(span, t.t_star);
        const Tick last = std::min(len, span + kEvalRadius);
        for (Tick t = 1; t <= last; ++t) ticks.insert(t);
    } else {
        for (const auto& truth : instance.triggers) {
            const Tick lo = std::max<Tick>(1, truth.t_star - kEvalRadius);
            const Tick hi = std::min(len, truth.t_star + kEvalRadius);
            for (Tick t = lo; t <= hi; ++t) ticks.insert(t);
        }
    }
    return {ticks.begin(), ticks.end()};
}

BackendFactory default_backend_factory(const BackendConfig& config) {
    if (config.kind == BackendConfig::Kind::http) {
        auto shared = std::make_shared<Backends>(make_http_backends(config));
        return [shared](const EvalInstance&) { return *shared; };
    }
    std::shared_ptr<const ScriptedTrace> fallback;
    if (config.trace) fallback = std::make_shared<ScriptedTrace>(load_trace(*config.trace));
    return [fallback](const EvalInstance& instance) {
        auto trace = instance.trace ? instance.trace : fallback;
        if (!trace) {
            throw ConfigError("instance " + instance.instance_id +
                              " has no scripted trace and the backend config names none");
        }
        return make_scripted_backends(trace);
    };
}

InstanceRun run_instance(const EvalInstance& instance, const RunConfig& config,
                         const BackendFactory& backends) {
    InstanceRun run;
    auto& tr = run.transcript;
    tr.instance_id = instance.instance_id;
    tr.category = instance.category;
    tr.mode = to_string(config.agent.mode);
    tr.thresholds = config.agent.thresholds;
    tr.with_reminder = config.agent.with_reminder;
    tr.stream_length = instance.stream_length();
    tr.evaluated_ticks = evaluated_ticks(instance);

    std::shared_ptr<FrameSource> inner = make_frame_source(instance);
    auto recorder = std::make_shared<RecordingFrameSource>(inner);
    Timeline timeline(recorder, instance.events, config.agent.window_capacity);
    Agent agent(config.agent, backends(instance));

    const std::set<Tick> monitored(tr.evaluated_ticks.begin(), tr.evaluated_ticks.end());
    Tick last = tr.evaluated_ticks.empty() ? 0 : tr.evaluated_ticks.back();
    for (const auto& e : instance.events) last = std::max(last, e.at_tick);
    last = std::min(last, tr.stream_length);

    try {
        for (Tick t = 1; t <= last; ++t) {
            auto step = timeline.advance(t);
            for (const auto& event : step.due) {
                tr.outputs.push_back(agent.handle_event(event, step.window));
            }
            if (monitored.count(t)) {
                auto report = agent.monitor_tick(t, step.window);
                for (auto& o : report.outputs) tr.outputs.push_back(std::move(o));
                for (auto& d : report.decisions) tr.decisions.emplace_back(t, std::move(d));
            }
            if (agent.backend_failures() > 0) {
                tr.evaluation_error = "backend unavailable at t=" + std::to_string(t);
                break;
            }
        }
    } catch (const BackendUnavailable& e) {
        tr.evaluation_error = std::string("backend unavailable: ") + e.what();
    } catch (const CoverageError& e) {
        tr.evaluation_error = std::string("trace coverage: ") + e.what();
    }
    if (tr.evaluation_error) {
        spdlog::warn("instance {} aborted: {}", instance.instance_id, *tr.evaluation_error);
    }
    run.access = {recorder->access_count(), recorder->violations(), recorder->max_index_read()};
    return run;
}

RunResult run_manifest(const Manifest& manifest, const RunConfig& config,
                       const BackendFactory& backends) {
    config.agent.thresholds.validate();
    const std::size_t n = manifest.instances.size();
    const std::size_t width = static_cast<std::size_t>(std::max(1, config.parallelism));
    std::vector<InstanceRun> runs(n);
    for (std::size_t start = 0; start < n; start += width) {
        const auto end = std::min(n, start + width);
        if (end - start == 1) {
            runs[start] = run_instance(manifest.instances[start], config, backends);
            continue;
        }
        std::vector<std::future<InstanceRun>> batch;
        for (auto i = start; i < end; ++i) {
            batch.push_back(std::async(std::launch::async, [&, i] {
                return run_instance(manifest.instances[i], config, backends);
            }));
        }
        for (auto i = start; i < end; ++i) runs[i] = batch[i - start].get();
    }

    RunResult result;
    for (auto& r : runs) {
        result.access.accesses += r.access.accesses;
        result.access.violations += r.access.violations;
        result.access.max_index_read = std::max(result.access.max_index_read, r.access.max_index_read);
        result.transcripts.push_back(std::move(r.transcript));
    }
    std::sort(result.transcripts.begin(), result.transcripts.end(),
              [](const auto& a, const auto& b) { return a.instance_id < b.instance_id; });
    result.report = rescore(result.transcripts, manifest, config.report);
    if (manifest.instances.empty()) {
        result.report.mode = to_string(config.agent.mode);
        result.report.thresholds = config.agent.thresholds;
        result.report.with_reminder = config.agent.with_reminder;
    }
    return result;
}

RunResult run_ablation(const Manifest& manifest, AblationMode mode, RunConfig config,
                       const BackendFactory& backends) {
    config.agent.mode = mode;
    return run_manifest(manifest, config, backends);
}

Report rescore(const std::vector<InstanceTranscript>& transcripts, const Manifest& manifest,
               const ReportOptions& options) {
    std::map<std::string, const InstanceTranscript*> by_id;
    for (const auto& t : transcripts) {
        if (!by_id.emplace(t.instance_id, &t).second) {
            throw ConfigError("duplicate transcript for instance " + t.instance_id);
        }
    }
    std::vector<std::string> missing;
    for (const auto& in : manifest.instances) {
        if (!by_id.count(in.instance_id)) missing.push_back(in.instance_id);
    }
    std::vector<std::string> unknown;
    std::set<std::string> ids;
    for (const auto& in : manifest.instances) ids.insert(in.instance_id);
    for (const auto& [id, t] : by_id) {
        if (!ids.count(id)) unknown.push_back(id);
    }
    if (!missing.empty() || !unknown.empty()) {
        std::ostringstream msg;
        msg << "transcripts do not match the manifest";
        if (!missing.empty()) msg << "; no transcript for " << missing.front() << " (+" << missing.size() - 1 << ")";
        if (!unknown.empty()) msg << "; unknown instance " << unknown.front() << " (+" << unknown.size() - 1 << ")";
        throw ConfigError(msg.str());
    }

    std::vector<InstanceVerdict> verdicts;
    for (const auto& in : manifest.instances) {
        const auto& t = *by_id.at(in.instance_id);
        if (t.category != in.category) {
            throw ConfigError("transcript " + t.instance_id + " has category " + to_string(t.category) +
                              ", manifest says " + to_string(in.category));
        }
        verdicts.push_back(score_instance(t, in));
    }
    Report r = aggregate(std::move(verdicts), options);
    r.manifest = manifest.name;
    if (!transcripts.empty()) {
        const auto& first = transcripts.front();
        for (const auto& t : transcripts) {
            if (t.mode != first.mode || !(t.thresholds == first.thresholds) ||
                t.with_reminder != first.with_reminder) {
                throw ConfigError("transcripts come from different run configurations");
            }
        }
        r.mode = first.mode;
        r.thresholds = first.thresholds;
        r.with_reminder = first.with_reminder;
    }
    return r;
}

void write_transcripts(const std::vector<InstanceTranscript>& transcripts,
                       const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& t : transcripts) {
        std::ofstream out(dir / (t.instance_id + ".jsonl"), std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write transcript in " + dir.string());
        out << to_jsonl(t);
    }
}

std::vector<InstanceTranscript> read_transcripts(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError("transcript directory " + dir.string() + " does not exist");
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".jsonl") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<InstanceTranscript> out;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        try {
            out.push_back(transcript_from_jsonl(buf.str()));
        } catch (const Error& e) {
            throw ConfigError(f.filename().string() + ": " + e.what());
        }
        if (out.back().instance_id + ".jsonl" != f.filename().string()) {
            throw ConfigError(f.filename().string() + " holds instance " + out.back().instance_id);
        }
    }
    return out;
}

void write_outputs(const RunResult& result, const std::filesystem::path& out) {
    std::filesystem::create_directories(out);
    {
        std::ofstream f(out / "report.json", std::ios::binary | std::ios::trunc);
        f << report_text(result.report);
    }
    {
        const auto label = "IPI-Agent (" + result.report.mode + ")";
        std::ofstream f(out / "report.txt", std::ios::binary | std::ios::trunc);
        f << render_score_table(result.report, label) << '\n'
          << render_failure_table(result.report, label);
    }
    write_transcripts(result.transcripts, out / "transcripts");
}

}  // namespace ipi
