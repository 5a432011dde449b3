#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "communics/content_library.hpp"
#include "communics/escalation.hpp"
#include "communics/session.hpp"

namespace communics {

// What "items created" counts.
enum class ItemsCounting { frames, all_placements };

struct SessionStats {
    std::int64_t duration_ms = 0;
    double duration_minutes = 0.0;
    int turns_taken = 0;
    int expressions_used = 0;  // insertions, not net of deletions
    int items_created = 0;
    ItemsCounting items_counting = ItemsCounting::frames;
    int frames_created = 0;
    int characters_placed = 0;
    int objects_placed = 0;
    int deletions = 0;
    SidePair<int> action_counts{};
    SidePair<double> action_share{};
    std::array<int, kMessageKindCount> mediator_messages{};
    int human_mediator_messages = 0;
    // Engine-convention sentiment of inserted expressions, index s + 1.
    SidePair<std::array<int, 3>> sentiment_histogram{};

    friend bool operator==(const SessionStats&, const SessionStats&) = default;
};

// Structural log checks only; throws CorruptLogError.
SessionStats compute_stats(std::span<const SessionEvent> log, ItemsCounting items = ItemsCounting::frames);

struct TrajectoryPoint {
    std::uint64_t seq = 0;
    std::uint64_t frame_id = 0;
    Side side = Side::a;
    double level = 0.0;

    friend bool operator==(const TrajectoryPoint&, const TrajectoryPoint&) = default;
};

// Levels recomputed from the logged sentiments with the escalation engine; two
// points (one per side) per frame creation, insertion and bubble deletion.
// The first overload uses the engine parameters recorded in the log.
std::vector<TrajectoryPoint> escalation_trajectory(std::span<const SessionEvent> log);
std::vector<TrajectoryPoint> escalation_trajectory(std::span<const SessionEvent> log, const EngineParams& params);

struct LabelCounts {
    int first = 0;
    int second = 0;
    int unannotated = 0;

    // first / (first + second); empty when nothing is annotated.
    std::optional<double> first_fraction() const;
    std::optional<double> second_fraction() const;

    friend bool operator==(const LabelCounts&, const LabelCounts&) = default;
};

struct NarrativeProfile {
    int statements = 0;          // surviving insertions
    LabelCounts dialog_narration;  // library statement_kind
    LabelCounts social_political;  // library topic
    // Shared-topic proxy: contingent iff the statement shares its topic with
    // the partner's immediately preceding surviving statement.
    LabelCounts contingent;
    LabelCounts bubble_dialog_narration;  // how the bubbles were placed

    friend bool operator==(const NarrativeProfile&, const NarrativeProfile&) = default;
};

NarrativeProfile narrative_profile(std::span<const SessionEvent> log, const Library& lib);

inline constexpr std::string_view kContingencyProxyLabel = "contingency (shared-topic proxy)";

nlohmann::json to_json(const SessionStats& s);
SessionStats session_stats_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const NarrativeProfile& p);
NarrativeProfile narrative_profile_from_json(const nlohmann::json& doc);
nlohmann::json to_json(std::span<const TrajectoryPoint> points);
std::vector<TrajectoryPoint> trajectory_from_json(const nlohmann::json& doc);

// Header + one row.
std::string stats_csv(const SessionStats& s);
std::string profile_csv(const NarrativeProfile& p);
// Columns seq,frame_id,side,level.
std::string trajectory_csv(std::span<const TrajectoryPoint> points);

// Throws Error(io_error) when the destination cannot be written.
void write_text_file(const std::string& path, std::string_view contents);

}  // namespace communics
