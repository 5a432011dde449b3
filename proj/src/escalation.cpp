#include "communics/escalation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace communics {

void EngineParams::validate() const {
    if (!(gamma > 0.0 && gamma < 1.0)) {
        throw Error(ErrorCode::invalid_config, "gamma must lie in (0, 1), got " + std::to_string(gamma));
    }
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
        throw Error(ErrorCode::invalid_config, "lambda must be finite and >= 0, got " + std::to_string(lambda));
    }
}

Sentiment to_engine_convention(SidePair<int> annotated) noexcept { return {-annotated.a, -annotated.b}; }

SideLevel initial_frame_escalation(std::span<const SideLevel> previous, const EngineParams& params) {
    // Horner form: ((e1 * g + e2) * g + e3) ... equals sum e_i * g^(n-i).
    SideLevel sum{};
    for (const auto& level : previous) {
        sum.a = sum.a * params.gamma + level.a;
        sum.b = sum.b * params.gamma + level.b;
    }
    return sum;
}

double expression_impact(int s, double e, const EngineParams& params) noexcept {
    return static_cast<double>(s) - params.lambda * std::tanh(e);
}

double ExposureTrack::total() const noexcept {
    return std::accumulate(entries_.begin(), entries_.end(), 0.0,
                           [](double acc, const Entry& e) { return acc + e.impact; });
}

SideLevel apply_insertion(FrameEscalation& frame, std::uint64_t instance_id, Sentiment sentiment, Side inserting,
                          ExposureTracks& tracks, int turn, const EngineParams& params) {
    SideLevel impact{expression_impact(sentiment.a, frame.current.a, params),
                     expression_impact(sentiment.b, frame.current.b, params)};
    frame.current.a += impact.a;
    frame.current.b += impact.b;
    frame.insertions.push_back({instance_id, sentiment, impact, false});

    const Side partner = other(inserting);
    tracks[partner].append(turn, impact[partner]);
    return impact;
}

void apply_deletion(FrameEscalation& frame, std::uint64_t instance_id, const EngineParams& params) {
    auto it = std::find_if(frame.insertions.begin(), frame.insertions.end(),
                           [instance_id](const Insertion& ins) { return ins.instance_id == instance_id; });
    if (it == frame.insertions.end()) {
        throw Error(ErrorCode::unknown_id, "no insertion with instance id " + std::to_string(instance_id));
    }
    if (it->deleted) {
        throw Error(ErrorCode::already_deleted, "insertion " + std::to_string(instance_id) + " already deleted");
    }
    it->deleted = true;

    // Later insertions were modulated by the deleted one; re-derive them.
    SideLevel level = frame.initial;
    for (auto& ins : frame.insertions) {
        if (ins.deleted) continue;
        ins.impact = {expression_impact(ins.sentiment.a, level.a, params),
                      expression_impact(ins.sentiment.b, level.b, params)};
        level.a += ins.impact.a;
        level.b += ins.impact.b;
    }
    frame.current = level;
}

SideLevel recompute_frame(const FrameEscalation& frame, const EngineParams& params) {
    SideLevel level = frame.initial;
    for (const auto& ins : frame.insertions) {
        if (ins.deleted) continue;
        level.a += expression_impact(ins.sentiment.a, level.a, params);
        level.b += expression_impact(ins.sentiment.b, level.b, params);
    }
    return level;
}

SideLevel discounted_story_level(std::span<const SideLevel> levels, const EngineParams& params) {
    return initial_frame_escalation(levels, params);
}

}  // namespace communics
