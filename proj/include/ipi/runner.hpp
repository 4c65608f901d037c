#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ipi/agent.hpp"
#include "ipi/backends.hpp"
#include "ipi/manifest.hpp"
#include "ipi/report.hpp"
#include "ipi/scoring.hpp"

namespace ipi {

struct RunConfig {
    AgentConfig agent;
    BackendConfig backend;
    /// Instances evaluated concurrently.
    int parallelism = 1;
    ReportOptions report;
    unsigned seed = 0;
};

/// Frame accesses observed by the tripwire during one instance.
struct AccessStats {
    std::size_t accesses = 0;
    std::size_t violations = 0;
    Tick max_index_read = 0;
};

struct InstanceRun {
    InstanceTranscript transcript;
    AccessStats access;
};

/// Ticks at which monitoring runs: [t*-4, t*+4] around every trigger truth
/// (clipped to the stream), or the whole scripted span plus four seconds
/// for multi-turn categories.
std::vector<Tick> evaluated_ticks(const EvalInstance& instance);

/// Builds the backends for one instance: its scripted trace, or the shared
/// live clients.
using BackendFactory = std::function<Backends(const EvalInstance&)>;

BackendFactory default_backend_factory(const BackendConfig& config);

InstanceRun run_instance(const EvalInstance& instance, const RunConfig& config,
                         const BackendFactory& backends);

struct RunResult {
    Report report;
    std::vector<InstanceTranscript> transcripts;
    AccessStats access;
};

/// Runs every instance (up to config.parallelism at once) and scores them.
RunResult run_manifest(const Manifest& manifest, const RunConfig& config,
                       const BackendFactory& backends);

/// run_manifest with the agent switched to `mode`.
RunResult run_ablation(const Manifest& manifest, AblationMode mode, RunConfig config,
                       const BackendFactory& backends);

/// Recomputes the report from stored transcripts. Throws ConfigError when
/// the transcripts and the manifest disagree on the instance set.
Report rescore(const std::vector<InstanceTranscript>& transcripts, const Manifest& manifest,
               const ReportOptions& options);

/// <dir>/<instance_id>.jsonl, one file per instance.
void write_transcripts(const std::vector<InstanceTranscript>& transcripts,
                       const std::filesystem::path& dir);
std::vector<InstanceTranscript> read_transcripts(const std::filesystem::path& dir);

/// report.json, report.txt (both tables) and transcripts/ under `out`.
void write_outputs(const RunResult& result, const std::filesystem::path& out);

}  // namespace ipi
