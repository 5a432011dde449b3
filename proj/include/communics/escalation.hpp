#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "communics/common.hpp"

namespace communics {

// Discount and normalization parameters of the escalation model.
//   gamma  - weight of each step back in story order (0 < gamma < 1)
//   lambda - strength of the context normalization (>= 0)
struct EngineParams {
    double gamma = 0.65;
    double lambda = 0.65;

    void validate() const;  // throws Error(invalid_config)
};

using SideLevel = SidePair<double>;

// Per-side intrinsic value in ENGINE convention: positive = escalating.
// Library annotations use the opposite sign (-1 escalates); the negation is
// applied exactly once, by to_engine_convention.
using Sentiment = SidePair<int>;

Sentiment to_engine_convention(SidePair<int> annotated) noexcept;

// Initial level of a new frame from the current levels of the existing frames,
// given oldest first: sum over i of level_i * gamma^(n - i). The most recent
// frame carries weight 1.
SideLevel initial_frame_escalation(std::span<const SideLevel> previous, const EngineParams& params);

// Contextual impact of inserting an expression with intrinsic value s into a
// frame at level e: s - lambda * tanh(e).
double expression_impact(int s, double e, const EngineParams& params) noexcept;

struct Insertion {
    std::uint64_t instance_id = 0;
    Sentiment sentiment{};
    SideLevel impact{};  // contribution under the current surviving context
    bool deleted = false;
};

// Escalation state of one frame. Invariant: current equals initial folded with
// the surviving insertions in order (see recompute_frame).
struct FrameEscalation {
    SideLevel initial{};
    SideLevel current{};
    std::vector<Insertion> insertions;

    static FrameEscalation starting_at(SideLevel initial) { return {initial, initial, {}}; }
};

// Append-only record of impacts a participant has experienced.
class ExposureTrack {
public:
    struct Entry {
        int turn = 0;
        double impact = 0.0;

        friend bool operator==(const Entry&, const Entry&) = default;
    };

    void append(int turn, double impact) { entries_.push_back({turn, impact}); }
    std::span<const Entry> entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    double total() const noexcept;

    friend bool operator==(const ExposureTrack&, const ExposureTrack&) = default;

private:
    std::vector<Entry> entries_;
};

using ExposureTracks = SidePair<ExposureTrack>;

// Applies one insertion to the frame and records the partner's exposure.
// Returns the per-side impact.
SideLevel apply_insertion(FrameEscalation& frame, std::uint64_t instance_id, Sentiment sentiment, Side inserting,
                          ExposureTracks& tracks, int turn, const EngineParams& params);

// Marks an insertion deleted and rebuilds current by ordered replay of the
// survivors. Exposure tracks are untouched by construction.
// Throws Error(unknown_id) or Error(already_deleted).
void apply_deletion(FrameEscalation& frame, std::uint64_t instance_id, const EngineParams& params);

// Replays surviving insertions from initial without mutating the frame.
SideLevel recompute_frame(const FrameEscalation& frame, const EngineParams& params);

// Discounted aggregate over all frames (oldest first), the most recent frame
// weighted 1. Used as the alternative story-level measure.
SideLevel discounted_story_level(std::span<const SideLevel> levels, const EngineParams& params);

}  // namespace communics
