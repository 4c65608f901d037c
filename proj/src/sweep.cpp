#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "ipi/error.hpp"
#include "ipi/gating.hpp"
#include "ipi/text.hpp"
#include "ipi/verdict.hpp"

namespace ipi {

using nlohmann::json;

std::string to_string(TimingVerdict v) {
    switch (v) {
        case TimingVerdict::correct: return "correct";
        case TimingVerdict::early: return "early";
        case TimingVerdict::late: return "late";
    }
    return "unknown";
}

TimingVerdict classify_timing(std::optional<Tick> first_trigger, Tick t_star) {
    if (!first_trigger) return TimingVerdict::late;
    if (*first_trigger < t_star - kCorrectRadius) return TimingVerdict::early;
    if (*first_trigger > t_star + kCorrectRadius) return TimingVerdict::late;
    return TimingVerdict::correct;
}

std::vector<SimilarityTrace> similarity_traces_from_json(const json& j) {
    const auto& list = j.is_object() ? j.at("traces") : j;
    if (!list.is_array()) throw ParseError("similarity traces must be an array");
    std::vector<SimilarityTrace> out;
    for (const auto& jt : list) {
        SimilarityTrace t;
        t.trace_id = jt.at("trace_id").get<std::string>();
        t.first_tick = jt.value("first_tick", 1);
        t.scores = jt.at("scores").get<std::vector<std::vector<double>>>();
        t.raw = jt.at("raw").get<std::vector<int>>();
        t.t_star = jt.at("t_star").get<Tick>();
        if (t.scores.size() != t.raw.size() || t.scores.empty()) {
            throw ParseError("trace " + t.trace_id + ": scores and raw must be equal-length and non-empty");
        }
        const auto m = t.scores.front().size();
        for (const auto& row : t.scores) {
            if (row.size() != m || m == 0) {
                throw ParseError("trace " + t.trace_id + ": every tick needs the same proposal count");
            }
        }
        for (int r : t.raw) {
            if (r != 0 && r != 1) throw ParseError("trace " + t.trace_id + ": raw must be 0 or 1");
        }
        out.push_back(std::move(t));
    }
    return out;
}

json to_json(const std::vector<SimilarityTrace>& traces) {
    json list = json::array();
    for (const auto& t : traces) {
        list.push_back({{"trace_id", t.trace_id},
                        {"first_tick", t.first_tick},
                        {"scores", t.scores},
                        {"raw", t.raw},
                        {"t_star", t.t_star}});
    }
    return {{"traces", list}};
}

std::vector<SimilarityTrace> synthetic_similarity_traces(std::size_t count, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> t_star_dist(5, 20);
    std::uniform_int_distribution<int> proposals_dist(1, 4);
    std::uniform_int_distribution<int> pattern_dist(0, 3);
    std::uniform_int_distribution<int> offset_dist(2, 4);
    std::uniform_real_distribution<double> base_dist(0.10, 0.30);
    std::uniform_real_distribution<double> jump_dist(0.06, 0.20);
    std::uniform_real_distribution<double> noise_dist(-0.015, 0.015);

    std::vector<SimilarityTrace> out;
    for (std::size_t n = 0; n < count; ++n) {
        SimilarityTrace t;
        t.trace_id = "synthetic-" + std::to_string(n);
        t.t_star = t_star_dist(rng);
        t.first_tick = std::max(1, t.t_star - kEvalRadius);
        const int proposals = proposals_dist(rng);
        std::vector<double> base(static_cast<std::size_t>(proposals));
        for (auto& b : base) b = base_dist(rng);
        const std::size_t jumper = static_cast<std::size_t>(rng() % static_cast<unsigned>(proposals));
        const double jump = jump_dist(rng);

        const int pattern = pattern_dist(rng);  // 0 clean, 1 early, 2 late, 3 silent
        const int offset = offset_dist(rng);
        const Tick fire_from = pattern == 0   ? t.t_star
                               : pattern == 1 ? t.t_star - offset
                               : pattern == 2 ? t.t_star + offset
                                              : t.t_star + 100;
        for (Tick tick = t.first_tick; tick <= t.t_star + kEvalRadius; ++tick) {
            std::vector<double> row;
            for (std::size_t m = 0; m < base.size(); ++m) {
                double s = base[m] + noise_dist(rng);
                if (m == jumper && tick >= t.t_star) s += jump;
                row.push_back(s);
            }
            t.scores.push_back(std::move(row));
            t.raw.push_back(tick >= fire_from ? 1 : 0);
        }
        out.push_back(std::move(t));
    }
    return out;
}

std::vector<SweepRow> sweep(const std::vector<SimilarityTrace>& traces,
                            const std::vector<GateThresholds>& grid) {
    if (grid.empty()) throw ValidationError("threshold grid is empty");
    std::vector<SweepRow> rows;
    rows.reserve(grid.size());
    for (const auto& thresholds : grid) {
        thresholds.validate();
        SweepRow row;
        row.thresholds = thresholds;
        for (const auto& trace : traces) {
            ++row.traces;
            std::optional<std::vector<double>> prev;
            std::optional<Tick> first;
            for (std::size_t i = 0; i < trace.scores.size(); ++i) {
                const auto& scores = trace.scores[i];
                std::optional<double> d;
                if (prev) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (std::size_t m = 0; m < scores.size(); ++m) {
                        best = std::max(best, scores[m] - (*prev)[m]);
                    }
                    d = best;
                }
                prev = scores;
                const auto decision = gate(trace.raw[i], d, thresholds);
                if (decision.reason == GateReason::forced) ++row.forced;
                if (decision.reason == GateReason::suppressed) ++row.suppressed;
                if (decision.final == 1 && !first) first = trace.first_tick + static_cast<Tick>(i);
            }
            switch (classify_timing(first, trace.t_star)) {
                case TimingVerdict::correct: ++row.correct; break;
                case TimingVerdict::early: ++row.early; break;
                case TimingVerdict::late: ++row.late; break;
            }
        }
        rows.push_back(row);
    }
    return rows;
}

namespace {

std::string percent(std::size_t part, std::size_t total) {
    if (total == 0) return "-";
    const long long hundredths =
        (static_cast<long long>(part) * 20000 + static_cast<long long>(total)) /
        (2 * static_cast<long long>(total));
    return text::format_hundredths(hundredths);
}

std::string threshold_cell(double v) {
    if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
    return text::format_double(v);
}

}  // namespace

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::ostringstream out;
    out << "theta_low,theta_high,correct,early,late,forced,suppressed\n";
    for (const auto& r : rows) {
        out << threshold_cell(r.thresholds.theta_low) << ','
            << threshold_cell(r.thresholds.theta_high) << ',' << percent(r.correct, r.traces) << ','
            << percent(r.early, r.traces) << ',' << percent(r.late, r.traces) << ',' << r.forced
            << ',' << r.suppressed << '\n';
    }
    return out.str();
}

}  // namespace ipi
