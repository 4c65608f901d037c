#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "ipi/error.hpp"
#include "ipi/gating.hpp"
#include "support.hpp"

using namespace ipi;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ProposalSet basis_set(std::size_t m, std::size_t dim) {
    ProposalSet p;
    p.task_id = TaskId{1};
    for (std::size_t i = 0; i < m; ++i) {
        Vector v(dim, 0.0);
        v[i] = 1.0;
        p.embeddings.push_back(v);
        p.proposals.push_back("p" + std::to_string(i));
    }
    return p;
}

Vector unit(std::vector<double> v) {
    double n = 0;
    for (double x : v) n += x * x;
    for (auto& x : v) x /= std::sqrt(n);
    return v;
}

}  // namespace

TEST(Gate, UndefinedDeltaPassesThrough) {
    const GateThresholds t{0.02, 0.08};
    EXPECT_EQ(gate(1, std::nullopt, t).final, 1);
    EXPECT_EQ(gate(0, std::nullopt, t).final, 0);
    EXPECT_EQ(gate(1, std::nullopt, t).reason, GateReason::pass_through);
}

TEST(Gate, BoundariesAreStrict) {
    const GateThresholds t{0.02, 0.08};
    EXPECT_EQ(gate(1, 0.02, t).reason, GateReason::unchanged);
    EXPECT_EQ(gate(1, 0.0199, t).reason, GateReason::suppressed);
    EXPECT_EQ(gate(0, 0.08, t).reason, GateReason::unchanged);
    EXPECT_EQ(gate(0, 0.0801, t).reason, GateReason::forced);
    EXPECT_EQ(gate(0, 0.0801, t).final, 1);
    EXPECT_EQ(gate(1, -0.5, t).final, 0);
}

TEST(Gate, IdentityThresholdsNeverOverride) {
    const auto id = GateThresholds::identity();
    for (double d : {-1.0, 0.0, 0.5, 1.0}) {
        EXPECT_EQ(gate(1, d, id).final, 1);
        EXPECT_EQ(gate(0, d, id).final, 0);
    }
}

TEST(Thresholds, ValidationAndParsing) {
    EXPECT_THROW((GateThresholds{0.3, 0.1}.validate()), ValidationError);
    EXPECT_THROW((GateThresholds{std::nan(""), 0.1}.validate()), ValidationError);
    EXPECT_NO_THROW((GateThresholds{0.05, 0.05}.validate()));
    EXPECT_EQ(parse_threshold("-inf"), -kInf);
    EXPECT_EQ(parse_threshold(" INF "), kInf);
    EXPECT_DOUBLE_EQ(parse_threshold("0.04"), 0.04);
    EXPECT_THROW(parse_threshold("0.04x"), ValidationError);
    EXPECT_THROW(parse_threshold(""), ValidationError);

    const auto t = thresholds_from_json(to_json(GateThresholds::identity()));
    EXPECT_EQ(t, GateThresholds::identity());
    EXPECT_THROW(thresholds_from_json({{"theta_low", 0.5}, {"theta_high", 0.1}}), ValidationError);
}

TEST(Delta, MaxOverProposalsOfOneTickIncrease) {
    auto p = basis_set(3, 4);
    GateState s{TaskId{1}, 1, std::nullopt, 0, {}};
    auto r1 = delta(s, p, unit({0.2, 0.5, 0.1, 0.8}), 5);
    EXPECT_FALSE(r1.delta);
    auto v2 = unit({0.6, 0.5, 0.1, 0.4});
    auto r2 = delta(r1.state, p, v2, 6);
    ASSERT_TRUE(r2.delta);
    double best = -kInf;
    for (std::size_t m = 0; m < 3; ++m) best = std::max(best, r2.scores[m] - r1.scores[m]);
    EXPECT_NEAR(*r2.delta, best, 1e-12);
    EXPECT_EQ(r2.state.delta_history.size(), 1u);
}

TEST(Delta, UndefinedAfterGapOrRevisionChange) {
    auto p = basis_set(2, 3);
    GateState s{TaskId{1}, 1, std::nullopt, 0, {}};
    auto r = delta(s, p, unit({1, 1, 1}), 3);
    EXPECT_FALSE(delta(r.state, p, unit({1, 2, 1}), 5).delta);
    auto p2 = p;
    p2.revision = 2;
    EXPECT_FALSE(delta(r.state, p2, unit({1, 2, 1}), 4).delta);
    EXPECT_TRUE(delta(r.state, p, unit({1, 2, 1}), 4).delta);
}

TEST(Delta, HistoryIsBounded) {
    auto p = basis_set(1, 2);
    GateState s{TaskId{1}, 1, std::nullopt, 0, {}};
    for (Tick t = 1; t <= 100; ++t) s = delta(s, p, unit({std::sin(t) + 2, 1}), t).state;
    EXPECT_EQ(s.delta_history.size(), GateState::kHistoryLimit);
    EXPECT_EQ(s.delta_history.back().first, 100);
}

TEST(Delta, StateJsonRoundTrip) {
    auto p = basis_set(2, 3);
    GateState s{TaskId{1}, 1, std::nullopt, 0, {}};
    s = delta(s, p, unit({1, 1, 1}), 3).state;
    s = delta(s, p, unit({1, 2, 1}), 4).state;
    const auto back = gate_state_from_json(to_json(s));
    EXPECT_EQ(to_json(back), to_json(s));
    EXPECT_EQ(to_json(proposal_set_from_json(to_json(p))), to_json(p));
}

TEST(Cosine, Basics) {
    EXPECT_NEAR(cosine({1, 0}, {0, 1}), 0.0, 1e-12);
    EXPECT_NEAR(cosine(unit({1, 1}), unit({2, 2})), 1.0, 1e-12);
    EXPECT_THROW(cosine({1, 0}, {1, 0, 0}), ConfigError);
}

TEST(Proposals, ParsedDedupedAndTruncated) {
    auto chat = std::make_shared<ipi::testing::FnChat>([](const ChatRequest&) {
        return std::string("Sure: [\"steam rising\", \"Steam rising!\", \"bubbles\", \"lid rattles\", \"whistle\"]");
    });
    std::size_t embeds = 0;
    auto emb = std::make_shared<ipi::testing::FnEmbed>([&](const EmbedRequest& r) {
        ++embeds;
        Vector v(4, 0.0);
        v[static_cast<std::size_t>(r.proposal_index)] = 1.0;
        return v;
    });
    ProactiveTask task;
    task.id = TaskId{1};
    task.target = "the kettle boils";
    task.target_key = "kettle";
    task.enhanced_target = "the kettle boils";
    auto set = generate_proposals(task, 3, *chat, *emb, 2);
    EXPECT_EQ(set.proposals, (std::vector<std::string>{"steam rising", "bubbles", "lid rattles"}));
    EXPECT_EQ(embeds, 3u);
}

TEST(Proposals, FallBackToTheTarget) {
    auto chat = std::make_shared<ipi::testing::FnChat>([](const ChatRequest&) { return std::string("no list"); });
    auto emb = std::make_shared<ipi::testing::FnEmbed>([](const EmbedRequest&) { return Vector{1.0, 0.0}; });
    ProactiveTask task;
    task.id = TaskId{1};
    task.target = "the kettle boils";
    task.target_key = "kettle";
    auto set = generate_proposals(task, 4, *chat, *emb, 2);
    EXPECT_EQ(set.proposals, std::vector<std::string>{"the kettle boils"});
    EXPECT_EQ(chat->calls, 2u);
}

TEST(Sweep, MatchesOracleCsv) {
    const auto traces = similarity_traces_from_json(ipi::testing::read_json(
        ipi::testing::data_dir() / "sweep" / "traces.json"));
    std::vector<GateThresholds> grid;
    for (double lo : {-kInf, 0.0, 0.01, 0.02, 0.04}) {
        for (double hi : {0.04, 0.06, 0.08, 0.12, kInf}) grid.push_back({lo, hi});
    }
    const auto csv = sweep_csv(sweep(traces, grid));
    EXPECT_EQ(csv, ipi::testing::read_text(ipi::testing::data_dir() / "sweep" / "expected.csv"));
}

TEST(Sweep, IdentityRowEqualsRawAccuracy) {
    const auto traces = synthetic_similarity_traces(50, 3);
    const auto rows = sweep(traces, {GateThresholds::identity()});
    std::size_t correct = 0;
    for (const auto& t : traces) {
        std::optional<Tick> first;
        for (std::size_t i = 0; i < t.raw.size() && !first; ++i) {
            if (t.raw[i]) first = t.first_tick + static_cast<Tick>(i);
        }
        if (first && *first >= t.t_star - 1 && *first <= t.t_star + 1) ++correct;
    }
    EXPECT_EQ(rows[0].correct, correct);
    EXPECT_EQ(rows[0].forced + rows[0].suppressed, 0u);
    EXPECT_THROW(sweep(traces, {}), ValidationError);
    EXPECT_EQ(sweep_csv(sweep(traces, {{0.02, 0.08}})),
              sweep_csv(sweep(synthetic_similarity_traces(50, 3), {{0.02, 0.08}})));
}
