// Prints one JSON object with real samples of every wire and file format.
#include <iostream>
#include <sstream>

#include <httplib.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ipi/runner.hpp"
#include "ipi/scripted.hpp"
#include "ipi/server.hpp"

using namespace ipi;
using nlohmann::json;

namespace {

const std::filesystem::path kData = std::filesystem::path(IPI_SOURCE_DIR) / "data";

struct Driver {
    Session& session;
    json& client;
    json& server;
    std::int64_t seq = 0;

    void send(const std::string& type, json payload) {
        json m = {{"type", type}, {"seq", ++seq}, {"payload", std::move(payload)}};
        client.push_back(m);
        for (auto& r : session.handle(m)) server.push_back(std::move(r));
    }
    void tick_to(Tick last) {
        while (session.current_tick() < last) send("tick", json::object());
    }
};

}  // namespace

int main() {
    spdlog::set_default_logger(spdlog::stderr_color_mt("dump"));
    json out;
    json& client = out["wire_client"] = json::array();
    json& server = out["wire_server"] = json::array();

    auto trace = std::make_shared<const ScriptedTrace>(load_trace(kData / "demo" / "trace.json"));
    Session live("s-dump", SessionConfig::from_json({{"mode", "no_gating"}, {"frames", {{"kind", "synthetic"}, {"length", 300}}}}),
                 make_scripted_backends(trace));
    server.push_back(live.hello());
    Driver d{live, client, server};
    d.send("tick", {{"tick", 1}});
    d.send("utterance", {{"text", "Tell me when the kettle starts boiling."}, {"event_id", "demo-1"}});
    d.tick_to(42);
    d.send("utterance", {{"text", "What is on the stove?"}, {"event_id", "demo-2"}});
    d.send("session_config", {{"theta_low", 0.01}, {"theta_high", "inf"}, {"task_id", "task-1"}});
    d.send("utterance", {{"text", "Actually, tell me when the toaster pops up instead."}, {"event_id", "demo-3"}});
    d.send("utterance", {{"text", "Cancel the kettle reminder."}, {"event_id", "unknown-event"}});
    d.send("tick", {{"tick", 999}});
    out["session_snapshot"] = live.snapshot();

    Session pushed("s-push", SessionConfig::from_json({{"frames", {{"kind", "push"}}}}),
                   make_scripted_backends(trace));
    server.push_back(pushed.hello());
    Driver p{pushed, client, server};
    p.send("frame_push", {{"source", "frame-0001.jpg"}});
    p.send("tick", json::object());

    RunConfig config;
    config.parallelism = 2;
    const auto manifest = load_manifest(kData / "scripted" / "manifest.json");
    const auto result = run_manifest(manifest, config, default_backend_factory(config.backend));
    out["report"] = to_json(result.report);
    out["transcript_lines"] = json::array();
    for (const auto& t : result.transcripts) {
        std::istringstream lines(to_jsonl(t));
        for (std::string line; std::getline(lines, line);) out["transcript_lines"].push_back(json::parse(line));
    }

    ServerConfig sc;
    sc.port = 0;
    Server srv(sc, [trace] { return make_scripted_backends(trace); }, [] { return true; });
    srv.start();
    httplib::Client http("127.0.0.1", srv.port());
    const auto res = http.Get("/healthz");
    out["healthz"] = res ? json::parse(res->body) : json(nullptr);
    srv.stop();

    std::cout << out.dump() << '\n';
    return 0;
}
