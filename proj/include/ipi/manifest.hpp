#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ipi/scripted.hpp"
#include "ipi/timeline.hpp"

namespace ipi {

enum class Category { timing, understanding, repeated, cancel, modify, multi, R2P, RuP, RaP };

inline constexpr Category kAllCategories[] = {
    Category::timing, Category::understanding, Category::repeated,
    Category::cancel, Category::modify,        Category::multi,
    Category::R2P,    Category::RuP,           Category::RaP,
};

std::string to_string(Category c);
std::optional<Category> category_from(const std::string& s);

enum class Aspect { monitoring, management, interleaved };

std::string to_string(Aspect a);
std::string display_name(Aspect a);
Aspect aspect_of(Category c);
/// Table column label ("Timing", "Under.", ...).
std::string column_label(Category c);
/// Multi-turn categories replay the whole scripted event span.
bool is_multi_turn(Category c);

struct TriggerTruth {
    std::string task_key;
    Tick t_star = 0;
    int occurrence_index = 0;
    /// Understanding checks: the trigger text must match one of these.
    std::vector<std::string> response_candidates;
};

struct AnswerTruth {
    std::string query_event_id;
    std::vector<std::string> candidates;
};

/// No trigger for `task_key` at or after the tick of event `from_event_id`.
struct SilenceTruth {
    std::string task_key;
    std::string from_event_id;
};

struct FrameSpec {
    enum class Kind { synthetic, list, directory };

    Kind kind = Kind::synthetic;
    int length = 0;
    std::vector<std::string> refs;
    std::filesystem::path directory;
};

struct EvalInstance {
    std::string instance_id;
    Category category = Category::timing;
    FrameSpec frames;
    std::vector<ScheduledEvent> events;
    std::vector<TriggerTruth> triggers;
    std::vector<AnswerTruth> answers;
    std::vector<SilenceTruth> silences;
    std::shared_ptr<const ScriptedTrace> trace;

    int stream_length() const;
    Tick event_tick(const std::string& event_id) const;
};

struct Manifest {
    std::string name;
    std::vector<EvalInstance> instances;
};

inline constexpr const char* kManifestFormat = "ipi-manifest/1";
inline constexpr std::size_t kMaxCandidates = 20;

/// Validates structure and cross references; errors name the instance and
/// field. Relative trace and frame paths resolve against `base_dir`.
Manifest parse_manifest(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
Manifest load_manifest(const std::filesystem::path& path);

std::unique_ptr<FrameSource> make_frame_source(const EvalInstance& instance);

}  // namespace ipi
