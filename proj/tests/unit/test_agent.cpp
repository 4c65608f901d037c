#include <set>

#include <gtest/gtest.h>

#include "ipi/agent.hpp"
#include "ipi/error.hpp"
#include "ipi/runner.hpp"
#include "support.hpp"

using namespace ipi;
using ipi::testing::instance;

namespace {

struct Drive {
    std::vector<AgentOutput> outputs;
    std::vector<std::pair<Tick, GateDecision>> decisions;
    std::vector<std::string> failures;
};

/// Runs events on every tick and monitoring on the runner's evaluated ticks.
struct Harness {
    const EvalInstance& in;
    Agent& agent;
    Timeline timeline;
    std::set<Tick> monitored;

    Harness(const EvalInstance& instance, Agent& a)
        : in(instance),
          agent(a),
          timeline(std::make_shared<SyntheticFrameSource>(instance.instance_id, instance.stream_length()),
                   instance.events, a.config().window_capacity) {
        const auto ticks = evaluated_ticks(instance);
        monitored.insert(ticks.begin(), ticks.end());
    }

    Drive run_to(Tick last, Agent* other = nullptr) {
        Agent& a = other ? *other : agent;
        Drive d;
        for (Tick t = timeline.current() + 1; t <= last; ++t) {
            auto step = timeline.advance(t);
            for (const auto& e : step.due) d.outputs.push_back(a.handle_event(e, step.window));
            if (!monitored.count(t)) continue;
            auto r = a.monitor_tick(t, step.window);
            for (auto& o : r.outputs) d.outputs.push_back(o);
            for (auto& x : r.decisions) d.decisions.emplace_back(t, x);
            for (auto& f : r.failures) d.failures.push_back(f);
        }
        return d;
    }
};

Drive drive(Agent& agent, const EvalInstance& in, Tick last) {
    Harness h(in, agent);
    return h.run_to(last);
}

std::vector<Tick> trigger_ticks(const Drive& d) {
    std::vector<Tick> out;
    for (const auto& o : d.outputs) {
        if (o.kind == OutputKind::proactive_trigger) out.push_back(o.at_tick);
    }
    return out;
}

AgentConfig config(AblationMode mode = AblationMode::full) {
    AgentConfig c;
    c.mode = mode;
    return c;
}

}  // namespace

TEST(Agent, ProactiveInstructionCreatesTasksWithProposals) {
    const auto& in = instance("multi-01");
    Agent agent(config(), make_scripted_backends(in.trace));
    auto d = drive(agent, in, 2);
    ASSERT_EQ(d.outputs.size(), 1u);
    const auto& o = d.outputs[0];
    EXPECT_EQ(o.kind, OutputKind::task_update);
    EXPECT_EQ(o.task_ids.size(), 2u);
    EXPECT_FALSE(o.task_id);
    EXPECT_EQ(o.event_id, "e1");
    EXPECT_TRUE(well_formed(o));
    EXPECT_EQ(agent.tasks().all().size(), 2u);
    EXPECT_EQ(agent.proposal_sets().size(), 2u);
    EXPECT_EQ(agent.proposal_sets().begin()->second.embeddings.size(), 3u);
    EXPECT_EQ(agent.tasks().get(TaskId{1}).enhanced_target, "the kettle starts boiling");
}

TEST(Agent, NoGatingSkipsEmbeddings) {
    const auto& in = instance("timing-02");
    Agent agent(config(AblationMode::no_gating), make_scripted_backends(in.trace));
    auto d = drive(agent, in, 20);
    EXPECT_TRUE(agent.proposal_sets().empty());
    for (const auto& [t, dec] : d.decisions) EXPECT_EQ(dec.reason, GateReason::pass_through);
    EXPECT_EQ(trigger_ticks(d), (std::vector<Tick>{13, 16}));
}

TEST(Agent, GateSuppressesNoiseAndKeepsOnset) {
    const auto& in = instance("timing-02");
    Agent agent(config(), make_scripted_backends(in.trace));
    auto d = drive(agent, in, 20);
    EXPECT_EQ(trigger_ticks(d), std::vector<Tick>{16});
    bool saw_suppressed = false;
    for (const auto& [t, dec] : d.decisions) {
        if (t == 13) {
            EXPECT_EQ(dec.reason, GateReason::suppressed);
            saw_suppressed = true;
        }
    }
    EXPECT_TRUE(saw_suppressed);
    const auto& task = agent.tasks().get(TaskId{1});
    ASSERT_EQ(task.trigger_log.size(), 1u);
    EXPECT_EQ(task.trigger_log[0].tick, 16);
}

TEST(Agent, EmbeddingOnlyFiresOnSimilarityJumps) {
    const auto& in = instance("timing-03");
    Agent agent(config(AblationMode::embedding_only), make_scripted_backends(in.trace));
    auto d = drive(agent, in, 20);
    EXPECT_EQ(trigger_ticks(d), std::vector<Tick>{11});
    EXPECT_EQ(d.outputs.back().reason, GateReason::forced);
}

TEST(Agent, ReactiveAnswerIsRecorded) {
    const auto& in = instance("R2P-01");
    Agent agent(config(), make_scripted_backends(in.trace));
    auto d = drive(agent, in, 3);
    ASSERT_EQ(d.outputs.size(), 1u);
    EXPECT_EQ(d.outputs[0].kind, OutputKind::immediate_response);
    EXPECT_EQ(d.outputs[0].text, "A silver kettle is on the stove.");
    const auto& turns = agent.interactions().turns();
    ASSERT_EQ(turns.size(), 2u);
    EXPECT_EQ(turns[0].speaker, Speaker::user);
    EXPECT_EQ(turns[1].kind, TurnKind::answer);
}

TEST(Agent, ReminderSwitchesTheRawTrack) {
    const auto& in = instance("RuP-01");
    auto c = config(AblationMode::no_gating);
    Agent base(c, make_scripted_backends(in.trace));
    EXPECT_TRUE(trigger_ticks(drive(base, in, 20)).empty());
    c.with_reminder = true;
    Agent reminded(c, make_scripted_backends(in.trace));
    EXPECT_EQ(trigger_ticks(drive(reminded, in, 20)), std::vector<Tick>{16});
    const auto& turns = reminded.interactions().turns();
    const auto it = std::find_if(turns.begin(), turns.end(),
                                 [](const InteractionTurn& t) { return t.kind == TurnKind::reminder; });
    ASSERT_NE(it, turns.end());
    EXPECT_EQ(it->at_tick, 8);
    EXPECT_NE(it->text.find("the kettle starts boiling"), std::string::npos);
}

TEST(Agent, CancelStopsMonitoring) {
    const auto& in = instance("cancel-02");
    Agent agent(config(), make_scripted_backends(in.trace));
    auto d = drive(agent, in, 20);
    const AgentOutput* cancel = nullptr;
    for (const auto& o : d.outputs) {
        if (o.event_id == std::optional<std::string>("e3")) cancel = &o;
    }
    ASSERT_TRUE(cancel);
    EXPECT_EQ(cancel->task_id, TaskId{2});
    for (const auto& o : d.outputs) {
        if (o.kind == OutputKind::proactive_trigger && o.task_id == TaskId{2}) EXPECT_LT(o.at_tick, 14);
    }
    EXPECT_EQ(agent.tasks().get(TaskId{2}).status, TaskStatus::cancelled);
}

TEST(Agent, ModifyBumpsRevisionAndResetsGate) {
    const auto& in = instance("modify-01");
    Agent agent(config(), make_scripted_backends(in.trace));
    auto d = drive(agent, in, 20);
    const auto& task = agent.tasks().get(TaskId{1});
    EXPECT_EQ(task.revision, 2);
    EXPECT_EQ(task.target_key, "toaster");
    EXPECT_EQ(agent.proposal_sets().at(TaskId{1}).revision, 2);
    for (const auto& [t, dec] : d.decisions) {
        if (t == 8) EXPECT_FALSE(dec.delta.has_value());
        if (t > 8) EXPECT_EQ(dec.revision, 2);
    }
    auto ticks = trigger_ticks(d);
    EXPECT_EQ(ticks, std::vector<Tick>{16});
    EXPECT_EQ(d.outputs.back().revision, 2);
    EXPECT_EQ(d.outputs.back().target_key, "toaster");
}

TEST(Agent, UnresolvableManagementIsNoAction) {
    auto trace = std::make_shared<ScriptedTrace>(*instance("cancel-01").trace);
    trace->classifications["x1"] = {{"kind", "management_cancel"}, {"task_reference", "toaster"}};
    Agent agent(config(), make_scripted_backends(trace));
    auto src = std::make_shared<SyntheticFrameSource>("x", 10);
    auto w = window_at(*src, 3);
    auto out = agent.handle_event({3, "Stop the toaster alert", "x1"}, w);
    EXPECT_EQ(out.kind, OutputKind::no_action);
    ASSERT_TRUE(out.diagnostic);
    EXPECT_NE(out.diagnostic->find("Stop the toaster alert"), std::string::npos);
    EXPECT_TRUE(well_formed(out));
    EXPECT_THROW(agent.handle_event({4, "Stop", "x1"}, w), ProtocolError);
    EXPECT_EQ(agent.backend_failures(), 0u);
}

TEST(Agent, RoutingOutageIsCountedNotThrown) {
    const auto& in = instance("timing-01");
    Agent agent(config(), ipi::testing::failing_backends(in.trace, ChatPurpose::classify));
    auto src = std::make_shared<SyntheticFrameSource>("x", 10);
    auto out = agent.handle_event(in.events[0], window_at(*src, 2));
    EXPECT_EQ(out.kind, OutputKind::no_action);
    EXPECT_EQ(agent.backend_failures(), 1u);
    EXPECT_NE(out.diagnostic->find("routing failed"), std::string::npos);
}

TEST(Agent, RawDecisionOutageIsIsolatedPerTask) {
    const auto& in = instance("multi-01");
    Agent agent(config(), ipi::testing::failing_backends(in.trace, ChatPurpose::raw_trigger));
    auto d = drive(agent, in, 9);
    EXPECT_EQ(agent.backend_failures(), 4u);
    EXPECT_EQ(d.failures.size(), 4u);
    EXPECT_EQ(d.decisions.size(), 4u);
    for (const auto& [t, dec] : d.decisions) EXPECT_EQ(dec.final, 0);
    EXPECT_EQ(agent.tasks().active_tasks(9).size(), 2u);
}

TEST(Agent, NoInteractionControlBypassesMemory) {
    auto trace = std::make_shared<ScriptedTrace>(*instance("cancel-01").trace);
    trace->answers["e2"] = "Okay.";
    Agent agent(config(AblationMode::no_interaction_control), make_scripted_backends(trace));
    auto src = std::make_shared<SyntheticFrameSource>("x", 26);
    agent.handle_event({2, "Tell me when the kettle starts boiling.", "e1"}, window_at(*src, 2));
    const auto turns = agent.interactions().size();
    auto out = agent.handle_event({14, "Stop watching the kettle.", "e2"}, window_at(*src, 14));
    EXPECT_EQ(out.kind, OutputKind::immediate_response);
    EXPECT_EQ(out.text, "Okay.");
    EXPECT_EQ(agent.tasks().get(TaskId{1}).status, TaskStatus::active);
    EXPECT_EQ(agent.interactions().size(), turns);
}

TEST(Agent, PerTaskThresholds) {
    const auto& in = instance("timing-02");
    Agent agent(config(), make_scripted_backends(in.trace));
    Harness h(in, agent);
    h.run_to(2);
    agent.set_task_thresholds(TaskId{1}, GateThresholds::identity());
    EXPECT_EQ(agent.thresholds_for(TaskId{1}), GateThresholds::identity());
    EXPECT_EQ(agent.thresholds_for(TaskId{7}), (GateThresholds{0.02, 0.08}));
    EXPECT_EQ(trigger_ticks(h.run_to(20)), (std::vector<Tick>{13, 16}));
    EXPECT_THROW(agent.set_thresholds({0.5, 0.1}), ValidationError);
}

TEST(Agent, SnapshotRestoreResumesIdentically) {
    const auto& in = instance("RaP-02");
    Agent straight(config(), make_scripted_backends(in.trace));
    const auto all = drive(straight, in, 17);

    Agent first(config(), make_scripted_backends(in.trace));
    Harness h(in, first);
    const auto part1 = h.run_to(9);
    const auto snap = first.snapshot();

    Agent second(config(), make_scripted_backends(in.trace));
    second.restore(snap);
    EXPECT_EQ(second.snapshot(), snap);
    const auto part2 = h.run_to(17, &second);
    std::vector<nlohmann::json> joined, expected;
    for (const auto& o : part1.outputs) joined.push_back(to_json(o));
    for (const auto& o : part2.outputs) joined.push_back(to_json(o));
    for (const auto& o : all.outputs) expected.push_back(to_json(o));
    EXPECT_EQ(joined, expected);
    EXPECT_EQ(part1.decisions.size() + part2.decisions.size(), all.decisions.size());

    Agent other(config(AblationMode::no_gating), make_scripted_backends(in.trace));
    EXPECT_THROW(other.restore(snap), Error);
}

TEST(Agent, ModeNames) {
    EXPECT_EQ(ablation_mode_from("no_gating"), AblationMode::no_gating);
    EXPECT_EQ(to_string(AblationMode::embedding_only), "embedding_only");
    EXPECT_THROW(ablation_mode_from("gating_off"), ConfigError);
}
