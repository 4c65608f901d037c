#include "ipi/report.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "ipi/text.hpp"

namespace ipi {

using nlohmann::json;

std::optional<Hundredths> percent_hundredths(std::size_t part, std::size_t total) {
    if (total == 0) return std::nullopt;
    const auto p = static_cast<Hundredths>(part);
    const auto n = static_cast<Hundredths>(total);
    return (p * 20000 + n) / (2 * n);
}

std::optional<Hundredths> aspect_average(const std::array<std::optional<Hundredths>, 3>& scores) {
    Hundredths sum = 0;
    for (const auto& s : scores) {
        if (!s) return std::nullopt;
        sum += *s;
    }
    return (2 * sum + 3) / 6;
}

std::string render(const std::optional<Hundredths>& h) {
    return h ? text::format_hundredths(*h) : "-";
}

FailureAnalysis failure_report(std::size_t early, std::size_t late, std::size_t missed) {
    FailureAnalysis f;
    f.early = early;
    f.late = late;
    f.missed = missed;
    if (early + late > 0) {
        f.early_pct = percent_hundredths(early, early + late);
        f.late_pct = 10000 - *f.early_pct;
    }
    return f;
}

FailureAnalysis failure_report(const std::vector<InstanceVerdict>& verdicts,
                               const ReportOptions& options) {
    std::size_t early = 0, late = 0, missed = 0;
    for (const auto& v : verdicts) {
        if (v.category != Category::timing || v.verdict != Verdict::incorrect || !v.timing) continue;
        if (*v.timing == TimingVerdict::early) {
            ++early;
        } else if (*v.timing == TimingVerdict::late) {
            if (v.missed) ++missed;
            if (!v.missed || options.missed_as_late) ++late;
        }
    }
    return failure_report(early, late, missed);
}

Report aggregate(std::vector<InstanceVerdict> verdicts, const ReportOptions& options) {
    std::sort(verdicts.begin(), verdicts.end(),
              [](const InstanceVerdict& a, const InstanceVerdict& b) { return a.instance_id < b.instance_id; });
    Report r;
    r.options = options;
    for (auto c : kAllCategories) r.categories[c] = {};
    for (const auto& v : verdicts) {
        auto& cs = r.categories[v.category];
        if (v.verdict == Verdict::evaluation_error) {
            ++cs.evaluation_errors;
            if (options.exclude_evaluation_errors) continue;
        }
        ++cs.total;
        if (v.verdict == Verdict::correct) ++cs.correct;
        r.spurious_triggers += v.spurious;
    }
    for (auto& [c, cs] : r.categories) cs.score = percent_hundredths(cs.correct, cs.total);
    for (auto a : {Aspect::monitoring, Aspect::management, Aspect::interleaved}) {
        std::array<std::optional<Hundredths>, 3> scores;
        std::size_t i = 0;
        for (auto c : kAllCategories) {
            if (aspect_of(c) == a) scores[i++] = r.categories[c].score;
        }
        r.aspects[a] = aspect_average(scores);
    }
    r.failures = failure_report(verdicts, options);
    r.verdicts = std::move(verdicts);
    return r;
}

namespace {

json rendered(const std::optional<Hundredths>& h) { return h ? json(render(h)) : json(nullptr); }

}  // namespace

json to_json(const Report& r) {
    json j;
    j["format"] = "ipi-report/1";
    j["manifest"] = r.manifest;
    j["mode"] = r.mode;
    j["thresholds"] = to_json(r.thresholds);
    j["with_reminder"] = r.with_reminder;
    j["options"] = {{"missed_as_late", r.options.missed_as_late},
                    {"exclude_evaluation_errors", r.options.exclude_evaluation_errors}};
    j["categories"] = json::object();
    for (const auto& [c, cs] : r.categories) {
        j["categories"][to_string(c)] = {{"correct", cs.correct},
                                         {"total", cs.total},
                                         {"evaluation_errors", cs.evaluation_errors},
                                         {"score", rendered(cs.score)}};
    }
    j["aspects"] = json::object();
    for (const auto& [a, avg] : r.aspects) j["aspects"][to_string(a)] = {{"avg", rendered(avg)}};
    j["failure_analysis"] = {{"early", r.failures.early},
                             {"late", r.failures.late},
                             {"missed", r.failures.missed},
                             {"early_pct", r.failures.early_pct ? render(r.failures.early_pct) : "n/a"},
                             {"late_pct", r.failures.late_pct ? render(r.failures.late_pct) : "n/a"}};
    j["spurious_triggers"] = r.spurious_triggers;
    j["instances"] = json::array();
    for (const auto& v : r.verdicts) j["instances"].push_back(to_json(v));
    return j;
}

std::string report_text(const Report& r) { return to_json(r).dump(2) + "\n"; }

namespace {

std::string cell(const std::string& s, int width) {
    std::ostringstream out;
    out << std::setw(width) << s;
    return out.str();
}

std::string left(const std::string& s, int width) {
    std::ostringstream out;
    out << std::left << std::setw(width) << s;
    return out.str();
}

}  // namespace

std::string render_score_table(const Report& r, const std::string& label) {
    constexpr int name_w = 28;
    constexpr int col_w = 8;
    const int group_w = 4 * col_w;
    std::ostringstream out;
    out << left("", name_w);
    for (auto a : {Aspect::monitoring, Aspect::management, Aspect::interleaved}) {
        auto title = display_name(a);
        if (static_cast<int>(title.size()) > group_w - 1) title = title.substr(0, group_w - 1);
        out << " |" << cell(title, group_w);
    }
    out << '\n' << left("Model", name_w);
    for (auto a : {Aspect::monitoring, Aspect::management, Aspect::interleaved}) {
        out << " |";
        for (auto c : kAllCategories) {
            if (aspect_of(c) == a) out << cell(column_label(c), col_w);
        }
        out << cell("Avg.", col_w);
    }
    out << '\n' << std::string(name_w + 3 * (group_w + 2), '-') << '\n';
    out << left(label, name_w);
    for (auto a : {Aspect::monitoring, Aspect::management, Aspect::interleaved}) {
        out << " |";
        for (auto c : kAllCategories) {
            if (aspect_of(c) == a) out << cell(render(r.categories.at(c).score), col_w);
        }
        out << cell(render(r.aspects.at(a)), col_w);
    }
    out << '\n';
    return out.str();
}

std::string render_failure_table(const Report& r, const std::string& label) {
    constexpr int name_w = 28;
    constexpr int col_w = 10;
    const auto& f = r.failures;
    const auto rup = render(r.categories.at(Category::RuP).score);
    std::ostringstream out;
    out << left("", name_w) << " |" << cell("Timing Error", 2 * col_w) << " |" << cell("RuP", 2 * col_w)
        << " |" << cell("", col_w) << '\n';
    out << left("Model", name_w) << " |" << cell("Early", col_w) << cell("Late", col_w) << " |"
        << cell("Base", col_w) << cell("with Ins.", col_w) << " |" << cell("Missed", col_w) << '\n';
    out << std::string(name_w + 5 * col_w + 6, '-') << '\n';
    out << left(label, name_w) << " |" << cell(f.early_pct ? render(f.early_pct) : "n/a", col_w)
        << cell(f.late_pct ? render(f.late_pct) : "n/a", col_w) << " |"
        << cell(r.with_reminder ? "-" : rup, col_w) << cell(r.with_reminder ? rup : "-", col_w) << " |"
        << cell(std::to_string(f.missed), col_w) << '\n';
    return out.str();
}

}  // namespace ipi
