#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "ipi/error.hpp"
#include "ipi/report.hpp"
#include "ipi/runner.hpp"

using namespace ipi;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kDeltaTolerance = 1e-9;
constexpr int kDeltaFixtures = 1000;
constexpr std::size_t kMaxProposals = 8;
constexpr double kRepairMarginPoints = 10.0;
constexpr std::size_t kGateCases = 54;

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    double budget_ms;
    std::function<Outcome()> run;
};

fs::path g_data;

Manifest scripted() { return load_manifest(g_data / "scripted" / "manifest.json"); }
Manifest repair_suite() { return load_manifest(g_data / "synthetic" / "gating_repair.json"); }

RunResult run(const Manifest& m, AblationMode mode, GateThresholds th = {}, bool reminder = false) {
    RunConfig c;
    c.agent.mode = mode;
    c.agent.thresholds = th;
    c.agent.with_reminder = reminder;
    return run_manifest(m, c, default_backend_factory({}));
}

// ---------------------------------------------------------------------------

/// Reference gate written from the rule, independent of the library.
std::pair<int, std::string> gate_oracle(int raw, std::optional<double> d, double lo, double hi) {
    if (!d) return {raw, "pass_through"};
    if (raw == 1 && *d < lo) return {0, "suppressed"};
    if (raw == 0 && *d > hi) return {1, "forced"};
    return {raw, "unchanged"};
}

Outcome gate_truth_table() {
    const double eps = 1e-6;
    const std::vector<std::pair<double, double>> configs = {{0.02, 0.08}, {0.10, 0.30}, {0.05, 0.05}};
    std::size_t cases = 0, agree = 0;
    std::ostringstream bad;
    for (const auto& [lo, hi] : configs) {
        const std::vector<std::optional<double>> points = {
            std::nullopt, -1.0, lo - eps, lo, (lo + hi) / 2, hi, hi + eps, 1.0, 0.0};
        for (int raw : {0, 1}) {
            for (const auto& d : points) {
                ++cases;
                const auto got = gate(raw, d, {lo, hi});
                const auto [final, reason] = gate_oracle(raw, d, lo, hi);
                if (got.final == final && to_string(got.reason) == reason && got.raw == raw) {
                    ++agree;
                } else {
                    bad << " raw=" << raw << " d=" << (d ? std::to_string(*d) : "undef");
                }
            }
        }
    }
    std::ostringstream detail;
    detail << agree << "/" << cases << " cases agree" << bad.str();
    return {cases == kGateCases && agree == cases, detail.str()};
}

// ---------------------------------------------------------------------------

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(dim);
    double s = 0;
    for (auto& x : v) {
        x = n(rng);
        s += x * x;
    }
    for (auto& x : v) x /= std::sqrt(s);
    return v;
}

double brute_cos(const std::vector<double>& a, const std::vector<double>& b) {
    long double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<long double>(a[i]) * b[i];
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    return static_cast<double>(dot / std::sqrt(na * nb));
}

Outcome delta_max_pooling() {
    std::mt19937_64 rng(20240611);
    double worst = 0;
    int checked = 0;
    for (int k = 0; k < kDeltaFixtures; ++k) {
        const std::size_t m = 1 + rng() % kMaxProposals;
        const std::size_t dim = 2 + rng() % 31;
        ProposalSet ps;
        ps.task_id = TaskId{1};
        for (std::size_t i = 0; i < m; ++i) {
            ps.proposals.push_back("p" + std::to_string(i));
            ps.embeddings.push_back(random_unit(rng, dim));
        }
        const auto v0 = random_unit(rng, dim);
        const auto v1 = random_unit(rng, dim);
        const Tick t = 1 + static_cast<Tick>(rng() % 500);
        GateState s0{TaskId{1}, 1, std::nullopt, 0, {}};
        const auto first = delta(s0, ps, v0, t);
        if (first.delta) return {false, "fixture " + std::to_string(k) + ": delta defined without history"};
        const auto second = delta(first.state, ps, v1, t + 1);
        if (!second.delta) return {false, "fixture " + std::to_string(k) + ": delta undefined at t+1"};
        double expect = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < m; ++i) {
            expect = std::max(expect, brute_cos(ps.embeddings[i], v1) - brute_cos(ps.embeddings[i], v0));
        }
        worst = std::max(worst, std::abs(*second.delta - expect));
        ++checked;
    }
    std::ostringstream d;
    d << checked << " fixtures, max |error| = " << std::scientific << worst;
    return {worst <= kDeltaTolerance && checked == kDeltaFixtures, d.str()};
}

// ---------------------------------------------------------------------------

Outcome aggregation_fixture() {
    const auto a = render(aspect_average({4349, 2490, 1840}));
    const auto b = render(aspect_average({5464, 2352, 896}));
    return {a == "28.93" && b == "29.04", "Avg " + a + " and " + b};
}

Outcome failure_fixture() {
    const auto f = failure_report(101, 8);
    const auto e = render(f.early_pct), l = render(f.late_pct);
    return {e == "92.66" && l == "7.34", "early/late " + e + "/" + l};
}

// ---------------------------------------------------------------------------

AgentOutput trig(Tick t, const std::string& key) {
    AgentOutput o;
    o.at_tick = t;
    o.kind = OutputKind::proactive_trigger;
    o.task_id = TaskId{1};
    o.target_key = key;
    o.text = "alert";
    o.revision = 1;
    o.reason = GateReason::unchanged;
    return o;
}

InstanceTranscript tr(const std::string& id, Category c, std::vector<AgentOutput> outs) {
    InstanceTranscript t;
    t.instance_id = id;
    t.category = c;
    t.outputs = std::move(outs);
    return t;
}

Outcome scoring_protocol() {
    std::size_t checks = 0, ok = 0;
    std::ostringstream bad;
    auto expect = [&](bool cond, const std::string& what) {
        ++checks;
        if (cond) {
            ++ok;
        } else {
            bad << " " << what;
        }
    };

    EvalInstance timing;
    timing.instance_id = "p";
    timing.category = Category::timing;
    timing.frames.length = 60;
    timing.triggers = {{"k", 30, 0, {}}};
    for (int off = -4; off <= 4; ++off) {
        const auto v = score_instance(tr("p", Category::timing, {trig(30 + off, "k")}), timing);
        const auto want = off < -1 ? TimingVerdict::early : off > 1 ? TimingVerdict::late : TimingVerdict::correct;
        expect(v.timing == want && (v.verdict == Verdict::correct) == (want == TimingVerdict::correct),
               "offset" + std::to_string(off));
    }
    {
        const auto v = score_instance(tr("p", Category::timing, {}), timing);
        expect(v.timing == TimingVerdict::late && v.missed && v.verdict == Verdict::incorrect, "no-trigger");
    }

    EvalInstance rep = timing;
    rep.category = Category::repeated;
    rep.triggers = {{"k", 10, 0, {}}, {"k", 20, 1, {}}, {"k", 30, 2, {}}};
    expect(score_instance(tr("p", Category::repeated, {trig(9, "k"), trig(20, "k"), trig(31, "k")}), rep).verdict ==
               Verdict::correct,
           "repeated-all");
    expect(score_instance(tr("p", Category::repeated, {trig(9, "k"), trig(23, "k"), trig(31, "k")}), rep).verdict ==
               Verdict::incorrect,
           "repeated-one-off");
    expect(score_instance(tr("p", Category::repeated, {trig(10, "k"), trig(30, "k")}), rep).verdict ==
               Verdict::incorrect,
           "repeated-missing");

    EvalInstance rap = timing;
    rap.category = Category::RaP;
    rap.events = {{2, "watch k", "e1"}, {20, "what is it?", "q"}};
    rap.answers = {{"q", {"a red kettle"}}};
    AgentOutput ans;
    ans.at_tick = 20;
    ans.kind = OutputKind::immediate_response;
    ans.event_id = "q";
    ans.text = "It is a red kettle.";
    AgentOutput wrong = ans;
    wrong.text = "A cat.";
    expect(score_instance(tr("p", Category::RaP, {trig(30, "k"), ans}), rap).verdict == Verdict::correct,
           "rap-both");
    expect(score_instance(tr("p", Category::RaP, {trig(30, "k"), wrong}), rap).verdict == Verdict::incorrect,
           "rap-wrong-answer");
    expect(score_instance(tr("p", Category::RaP, {trig(26, "k"), ans}), rap).verdict == Verdict::incorrect,
           "rap-early");

    EvalInstance cancel = timing;
    cancel.category = Category::cancel;
    cancel.events = {{2, "watch k", "e1"}, {40, "stop", "e2"}};
    cancel.silences = {{"k", "e2"}};
    expect(score_instance(tr("p", Category::cancel, {trig(30, "k")}), cancel).verdict == Verdict::correct,
           "cancel-silent");
    expect(score_instance(tr("p", Category::cancel, {trig(30, "k"), trig(45, "k")}), cancel).verdict ==
               Verdict::incorrect,
           "cancel-leak");

    std::ostringstream d;
    d << ok << "/" << checks << " protocol checks" << bad.str();
    return {ok == checks, d.str()};
}

// ---------------------------------------------------------------------------

std::string all_jsonl(const RunResult& r) {
    std::string s;
    for (const auto& t : r.transcripts) s += to_jsonl(t);
    return s;
}

std::map<std::string, std::string> dir_bytes(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        out[fs::relative(e.path(), dir).string()] = ss.str();
    }
    return out;
}

Outcome determinism() {
    const auto m = scripted();
    std::set<Category> cats;
    for (const auto& in : m.instances) cats.insert(in.category);
    if (m.instances.size() != 30 || cats.size() != 9) {
        return {false, "bundled manifest has " + std::to_string(m.instances.size()) + " instances in " +
                           std::to_string(cats.size()) + " categories"};
    }
    const auto a = run(m, AblationMode::full);
    const auto b = run(m, AblationMode::full);
    const auto base = fs::temp_directory_path() / ("ipi-accept-" + std::to_string(std::random_device{}()));
    write_outputs(a, base / "a");
    write_outputs(b, base / "b");
    const bool files_equal = dir_bytes(base / "a") == dir_bytes(base / "b");
    auto again = rescore(read_transcripts(base / "a" / "transcripts"), m, {});
    again.manifest = a.report.manifest;
    const bool rescored = report_text(again) == report_text(a.report);
    fs::remove_all(base);
    const bool same = report_text(a.report) == report_text(b.report) && all_jsonl(a) == all_jsonl(b);
    std::ostringstream d;
    d << "30 instances, 9 categories; reports/transcripts identical=" << (same && files_equal)
      << ", rescore identical=" << rescored;
    return {same && files_equal && rescored, d.str()};
}

// ---------------------------------------------------------------------------

Outcome cancel_modify_safety() {
    const auto m = scripted();
    std::size_t cancels = 0, modifies = 0, violations = 0;
    std::ostringstream bad;
    for (auto mode : {AblationMode::full, AblationMode::no_gating, AblationMode::embedding_only}) {
        const auto r = run(m, mode);
        for (std::size_t i = 0; i < m.instances.size(); ++i) {
            const auto& in = m.instances[i];
            const InstanceTranscript* t = nullptr;
            for (const auto& x : r.transcripts) {
                if (x.instance_id == in.instance_id) t = &x;
            }
            std::set<std::string> truth_keys;
            for (const auto& tt : in.triggers) truth_keys.insert(tt.task_key);
            for (const auto& o : t->outputs) {
                if (o.kind != OutputKind::task_update || !o.event_id || !o.task_id) continue;
                const auto kind = in.trace->classifications.at(*o.event_id).at("kind").get<std::string>();
                if (kind == "management_cancel") {
                    ++cancels;
                    for (const auto& x : t->outputs) {
                        if (x.kind == OutputKind::proactive_trigger && x.task_id == o.task_id &&
                            x.at_tick >= o.at_tick) {
                            ++violations;
                            bad << " " << in.instance_id << "@" << x.at_tick;
                        }
                    }
                } else if (kind == "management_modify") {
                    ++modifies;
                    for (const auto& x : t->outputs) {
                        if (x.kind != OutputKind::proactive_trigger || x.task_id != o.task_id ||
                            x.at_tick < o.at_tick) {
                            continue;
                        }
                        if (x.revision.value_or(0) < 2 || x.target_key != o.target_key ||
                            !truth_keys.count(*x.target_key)) {
                            ++violations;
                            bad << " " << in.instance_id << "@" << x.at_tick;
                        }
                    }
                }
            }
        }
    }
    std::ostringstream d;
    d << cancels << " cancels, " << modifies << " modifications over 3 modes, " << violations << " violations"
      << bad.str();
    return {violations == 0 && cancels > 0 && modifies > 0, d.str()};
}

// ---------------------------------------------------------------------------

Outcome causality() {
    std::size_t accesses = 0, violations = 0, runs = 0;
    for (const auto& m : {scripted(), repair_suite()}) {
        for (auto mode : {AblationMode::full, AblationMode::no_interaction_control, AblationMode::no_gating,
                          AblationMode::embedding_only}) {
            const auto r = run(m, mode);
            accesses += r.access.accesses;
            violations += r.access.violations;
            ++runs;
        }
    }
    std::ostringstream d;
    d << runs << " manifest runs, " << accesses << " frame reads, " << violations << " beyond the current tick";
    return {violations == 0 && accesses > 0, d.str()};
}

// ---------------------------------------------------------------------------

std::vector<std::tuple<Tick, std::uint32_t, int>> trigger_set(const InstanceTranscript& t) {
    std::vector<std::tuple<Tick, std::uint32_t, int>> out;
    for (const auto& o : t.outputs) {
        if (o.kind == OutputKind::proactive_trigger) out.emplace_back(o.at_tick, o.task_id->value, *o.revision);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<std::tuple<Tick, std::uint32_t, int>> raw_set(const InstanceTranscript& t) {
    std::vector<std::tuple<Tick, std::uint32_t, int>> out;
    for (const auto& [tick, d] : t.decisions) {
        if (d.raw == 1) out.emplace_back(tick, d.task_id.value, d.revision);
    }
    std::sort(out.begin(), out.end());
    return out;
}

Outcome ablation_identities() {
    std::size_t instances = 0, raw_mismatch = 0, identity_mismatch = 0;
    std::ostringstream bad;
    for (const auto& m : {scripted(), repair_suite()}) {
        for (bool reminder : {false, true}) {
            const auto ng = run(m, AblationMode::no_gating, {}, reminder);
            const auto id = run(m, AblationMode::full, GateThresholds::identity(), reminder);
            for (std::size_t i = 0; i < ng.transcripts.size(); ++i) {
                ++instances;
                if (trigger_set(ng.transcripts[i]) != raw_set(ng.transcripts[i])) {
                    ++raw_mismatch;
                    bad << " raw:" << ng.transcripts[i].instance_id;
                }
                if (trigger_set(ng.transcripts[i]) != trigger_set(id.transcripts[i]) ||
                    ng.report.verdicts[i].verdict != id.report.verdicts[i].verdict) {
                    ++identity_mismatch;
                    bad << " identity:" << ng.transcripts[i].instance_id;
                }
            }
        }
    }
    std::ostringstream d;
    d << instances << " instance runs; no_gating!=raw: " << raw_mismatch
      << ", full(-inf,+inf)!=no_gating: " << identity_mismatch << bad.str();
    return {raw_mismatch == 0 && identity_mismatch == 0, d.str()};
}

// ---------------------------------------------------------------------------

double timing_accuracy(const Report& r) {
    const auto& c = r.categories.at(Category::timing);
    return c.total == 0 ? 0.0 : 100.0 * static_cast<double>(c.correct) / static_cast<double>(c.total);
}

Outcome gating_repair() {
    const auto m = repair_suite();
    const auto full = run(m, AblationMode::full);
    const auto ng = run(m, AblationMode::no_gating);
    const double a = timing_accuracy(full.report), b = timing_accuracy(ng.report);
    std::ostringstream d;
    d << std::fixed << std::setprecision(2) << "full " << a << " vs no_gating " << b << " (+" << a - b
      << " points, need >= " << kRepairMarginPoints << ")";
    return {a - b >= kRepairMarginPoints, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance suite"};
    std::string data = std::string(IPI_SOURCE_DIR) + "/data";
    app.add_option("--data", data, "Bundled data directory");
    CLI11_PARSE(app, argc, argv);
    g_data = data;
    spdlog::set_level(spdlog::level::err);

    const std::vector<Criterion> criteria = {
        {"gate truth table", 1000, gate_truth_table},
        {"delta max-pooling vs brute force", 5000, delta_max_pooling},
        {"aggregation fixture", 100, aggregation_fixture},
        {"failure-analysis fixture", 100, failure_fixture},
        {"scoring protocol fixtures", 1000, scoring_protocol},
        {"end-to-end determinism", 30000, determinism},
        {"cancellation/modification safety", 5000, cancel_modify_safety},
        {"causality tripwire", 60000, causality},
        {"ablation identities", 60000, ablation_identities},
        {"gating repair", 10000, gating_repair},
    };

    int failed = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (ms > c.budget_ms) {
            o.pass = false;
            o.detail += "; over budget";
        }
        std::ostringstream line;
        line << (o.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << o.detail << " [" << std::fixed
             << std::setprecision(1) << ms << " ms / " << c.budget_ms << " ms]";
        std::cout << line.str() << std::endl;
        if (!o.pass) ++failed;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << '\n';
    return failed == 0 ? 0 : 1;
}
