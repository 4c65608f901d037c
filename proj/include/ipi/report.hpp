#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipi/gating.hpp"
#include "ipi/manifest.hpp"
#include "ipi/scoring.hpp"

namespace ipi {

struct ReportOptions {
    /// Never-triggered timing failures count as late in the failure table.
    bool missed_as_late = true;
    /// Drop evaluation-error instances from accuracy denominators.
    bool exclude_evaluation_errors = false;
};

/// Scores are carried as integer hundredths of a percent so rendering is exact.
using Hundredths = long long;

/// correct / total x 100, rounded half up to hundredths. nullopt when total is 0.
std::optional<Hundredths> percent_hundredths(std::size_t part, std::size_t total);

/// Mean of three rendered subcategory scores, rounded half up. nullopt when
/// any is missing.
std::optional<Hundredths> aspect_average(const std::array<std::optional<Hundredths>, 3>& scores);

/// "28.93", or "-" when absent.
std::string render(const std::optional<Hundredths>& h);

struct CategoryScore {
    std::size_t correct = 0;
    std::size_t total = 0;
    std::size_t evaluation_errors = 0;
    std::optional<Hundredths> score;
};

struct FailureAnalysis {
    std::size_t early = 0;
    std::size_t late = 0;
    /// Incorrect timing cases with no trigger in the interval.
    std::size_t missed = 0;
    std::optional<Hundredths> early_pct;
    std::optional<Hundredths> late_pct;
};

/// early% = early / (early + late), late% its complement; "n/a" when empty.
FailureAnalysis failure_report(std::size_t early, std::size_t late, std::size_t missed = 0);
FailureAnalysis failure_report(const std::vector<InstanceVerdict>& verdicts,
                               const ReportOptions& options);

struct Report {
    std::string manifest;
    std::string mode = "full";
    GateThresholds thresholds;
    bool with_reminder = false;
    ReportOptions options;
    std::vector<InstanceVerdict> verdicts;
    std::map<Category, CategoryScore> categories;
    std::map<Aspect, std::optional<Hundredths>> aspects;
    FailureAnalysis failures;
    std::size_t spurious_triggers = 0;
};

/// Independent of the order of `verdicts`.
Report aggregate(std::vector<InstanceVerdict> verdicts, const ReportOptions& options = {});

nlohmann::json to_json(const Report& r);
/// Deterministic serialization (sorted keys, two-space indent, trailing newline).
std::string report_text(const Report& r);

/// Score table with one group of columns per aspect.
std::string render_score_table(const Report& r, const std::string& label);
/// Early/late split among incorrect timing cases and the RuP score.
std::string render_failure_table(const Report& r, const std::string& label);

}  // namespace ipi
