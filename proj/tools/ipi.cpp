#include <csignal>
#include <fstream>
#include <iostream>

#include <pthread.h>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ipi/error.hpp"
#include "ipi/runner.hpp"
#include "ipi/scripted.hpp"
#include "ipi/server.hpp"
#include "ipi/text.hpp"

namespace {

constexpr int kExitConfig = 2;

struct CommonOptions {
    std::string backend_config;
    std::string ablation = "full";
    std::string theta_low;
    std::string theta_high;
    bool with_reminder = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--backend-config", o.backend_config, "Backend config JSON (default: scripted)");
    cmd->add_option("--ablation", o.ablation,
                    "full | no_interaction_control | no_gating | embedding_only");
    cmd->add_option("--theta-low", o.theta_low, "Suppression threshold (number or -inf)");
    cmd->add_option("--theta-high", o.theta_high, "Recovery threshold (number or inf)");
    cmd->add_flag("--with-reminder", o.with_reminder,
                  "Append a reminder instruction after every reactive interaction");
}

ipi::AgentConfig agent_config(const CommonOptions& o) {
    ipi::AgentConfig c;
    c.mode = ipi::ablation_mode_from(o.ablation);
    if (!o.theta_low.empty()) c.thresholds.theta_low = ipi::parse_threshold(o.theta_low);
    if (!o.theta_high.empty()) c.thresholds.theta_high = ipi::parse_threshold(o.theta_high);
    c.thresholds.validate();
    c.with_reminder = o.with_reminder;
    return c;
}

ipi::BackendConfig backend_config(const CommonOptions& o) {
    if (o.backend_config.empty()) return ipi::BackendConfig::scripted_default();
    if (!std::filesystem::exists(o.backend_config)) {
        throw ipi::ConfigError("backend config " + o.backend_config + " does not exist");
    }
    return ipi::BackendConfig::load(o.backend_config);
}

ipi::Manifest manifest_at(const std::string& path) {
    if (!std::filesystem::exists(path)) throw ipi::ConfigError("manifest " + path + " does not exist");
    return ipi::load_manifest(path);
}

std::vector<double> threshold_list(const std::string& csv) {
    std::vector<double> out;
    for (const auto& part : ipi::text::split(csv, ",")) {
        if (!ipi::text::trim(part).empty()) out.push_back(ipi::parse_threshold(part));
    }
    return out;
}

int run_eval(const std::string& manifest_path, const CommonOptions& common, int parallelism,
             const std::string& out, unsigned seed, bool exclude_errors) {
    const auto manifest = manifest_at(manifest_path);
    ipi::RunConfig config;
    config.agent = agent_config(common);
    config.backend = backend_config(common);
    config.parallelism = parallelism;
    config.seed = seed;
    config.report.exclude_evaluation_errors = exclude_errors;
    const auto result =
        ipi::run_manifest(manifest, config, ipi::default_backend_factory(config.backend));
    ipi::write_outputs(result, out);
    const auto label = "IPI-Agent (" + result.report.mode + ")";
    std::cout << ipi::render_score_table(result.report, label) << '\n'
              << ipi::render_failure_table(result.report, label);
    if (result.access.violations > 0) {
        spdlog::error("causality tripwire: {} frame reads beyond the current tick",
                      result.access.violations);
    }
    return 0;
}

int run_rescore(const std::string& transcripts, const std::string& manifest_path, const std::string& out,
                bool no_missed_as_late, bool exclude_errors) {
    const auto manifest = manifest_at(manifest_path);
    ipi::ReportOptions options;
    options.missed_as_late = !no_missed_as_late;
    options.exclude_evaluation_errors = exclude_errors;
    const auto report = ipi::rescore(ipi::read_transcripts(transcripts), manifest, options);
    const auto label = "IPI-Agent (" + report.mode + ")";
    if (!out.empty()) {
        std::filesystem::create_directories(out);
        std::ofstream(std::filesystem::path(out) / "report.json", std::ios::binary) << ipi::report_text(report);
        std::ofstream(std::filesystem::path(out) / "report.txt", std::ios::binary)
            << ipi::render_score_table(report, label) << '\n'
            << ipi::render_failure_table(report, label);
    }
    std::cout << ipi::render_score_table(report, label) << '\n' << ipi::render_failure_table(report, label);
    return 0;
}

int run_sweep(const std::string& traces, std::size_t synthetic, unsigned seed, const std::string& lows,
              const std::string& highs, const std::string& out) {
    std::vector<ipi::SimilarityTrace> set;
    if (!traces.empty()) {
        std::ifstream in(traces);
        if (!in) throw ipi::ConfigError("cannot open traces " + traces);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ipi::ConfigError("traces " + traces + ": " + e.what());
        }
        set = ipi::similarity_traces_from_json(j);
    } else {
        set = ipi::synthetic_similarity_traces(synthetic, seed);
    }
    std::vector<ipi::GateThresholds> grid;
    for (double lo : threshold_list(lows)) {
        for (double hi : threshold_list(highs)) grid.push_back({lo, hi});
    }
    if (grid.empty()) throw ipi::ValidationError("threshold grid is empty");
    const auto csv = ipi::sweep_csv(ipi::sweep(set, grid));
    if (out.empty()) {
        std::cout << csv;
    } else {
        std::ofstream(out, std::ios::binary) << csv;
    }
    return 0;
}

int run_serve(const std::string& listen, const CommonOptions& common, const std::string& frames_dir) {
    ipi::ServerConfig config;
    std::tie(config.host, config.port) = ipi::parse_listen(listen);
    config.session.agent = agent_config(common);
    config.frames_dir = frames_dir;
    if (!frames_dir.empty()) {
        config.session.frames.kind = ipi::SessionFrames::Kind::directory;
        config.session.frames.directory = frames_dir;
    }
    const auto backend = backend_config(common);

    ipi::SessionManager::BackendProvider provider;
    ipi::Server::HealthProbe health;
    if (backend.kind == ipi::BackendConfig::Kind::http) {
        auto shared = std::make_shared<ipi::Backends>(ipi::make_http_backends(backend));
        provider = [shared] { return *shared; };
        health = [shared] { return shared->chat->healthy() && shared->embedding->healthy(); };
    } else {
        if (!backend.trace) throw ipi::ConfigError("a scripted serve needs a trace in the backend config");
        auto trace = std::make_shared<const ipi::ScriptedTrace>(ipi::load_trace(*backend.trace));
        provider = [trace] { return ipi::make_scripted_backends(trace); };
        health = [] { return true; };
    }

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGTERM);
    sigaddset(&signals, SIGINT);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    ipi::Server server(config, provider, health);
    server.start();
    std::cout << "listening on " << config.host << ':' << server.port() << std::endl;
    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("signal {} received; draining", sig);
    server.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("ipi"));
    spdlog::set_level(spdlog::level::warn);

    CLI::App app{"Streaming proactive agent runtime and evaluation harness"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

    CommonOptions eval_opts;
    std::string manifest;
    std::string out;
    int parallelism = 1;
    unsigned seed = 0;
    bool exclude_errors = false;
    auto* eval = app.add_subcommand("eval", "Run a manifest and write report + transcripts");
    eval->add_option("--manifest", manifest, "Manifest JSON")->required();
    eval->add_option("--out", out, "Output directory")->required();
    eval->add_option("--parallelism", parallelism, "Instances evaluated concurrently")
        ->check(CLI::PositiveNumber);
    eval->add_option("--seed", seed, "Seed (recorded; scripted runs are deterministic)");
    eval->add_flag("--exclude-evaluation-errors", exclude_errors,
                   "Drop evaluation-error instances from accuracy denominators");
    add_common(eval, eval_opts);

    CommonOptions serve_opts;
    std::string listen = "127.0.0.1:8080";
    std::string frames_dir;
    auto* serve = app.add_subcommand("serve", "Serve live sessions over WebSocket");
    serve->add_option("--listen", listen, "Bind address host:port");
    serve->add_option("--frames-dir", frames_dir, "Directory served under /frames/ and used as the frame source");
    add_common(serve, serve_opts);

    std::string traces;
    std::size_t synthetic = 200;
    std::string lows = "-inf,0,0.01,0.02,0.04";
    std::string highs = "0.04,0.06,0.08,0.12,inf";
    std::string sweep_out;
    unsigned sweep_seed = 7;
    auto* sweep = app.add_subcommand("sweep", "Sweep gate thresholds over similarity traces");
    sweep->add_option("--traces", traces, "Similarity traces JSON (default: synthetic)");
    sweep->add_option("--synthetic", synthetic, "Number of synthetic traces");
    sweep->add_option("--seed", sweep_seed, "Synthetic trace seed");
    sweep->add_option("--theta-low", lows, "Comma-separated theta_low values");
    sweep->add_option("--theta-high", highs, "Comma-separated theta_high values");
    sweep->add_option("--out", sweep_out, "CSV path (default: stdout)");

    std::string transcripts;
    std::string rescore_manifest;
    std::string rescore_out;
    bool no_missed_as_late = false;
    bool rescore_exclude = false;
    auto* rescore = app.add_subcommand("rescore", "Recompute a report from stored transcripts");
    rescore->add_option("--transcripts", transcripts, "Transcript directory")->required();
    rescore->add_option("--manifest", rescore_manifest, "Manifest JSON")->required();
    rescore->add_option("--out", rescore_out, "Output directory for report.json/report.txt");
    rescore->add_flag("--no-missed-as-late", no_missed_as_late,
                      "Keep never-triggered cases out of the late column");
    rescore->add_flag("--exclude-evaluation-errors", rescore_exclude,
                      "Drop evaluation-error instances from accuracy denominators");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }
    if (verbose) spdlog::set_level(spdlog::level::info);

    try {
        if (*eval) return run_eval(manifest, eval_opts, parallelism, out, seed, exclude_errors);
        if (*serve) return run_serve(listen, serve_opts, frames_dir);
        if (*sweep) return run_sweep(traces, synthetic, sweep_seed, lows, highs, sweep_out);
        if (*rescore) {
            return run_rescore(transcripts, rescore_manifest, rescore_out, no_missed_as_late,
                               rescore_exclude);
        }
    } catch (const ipi::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ipi::ValidationError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitConfig;
    } catch (const ipi::ParseError& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
