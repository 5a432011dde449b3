#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "communics/common.hpp"
#include "communics/content_library.hpp"

namespace communics {

// Which side of the threshold the foster-escalation rule reacts to. `above`
// is the literal reading (two frames above threshold); `below` fires while the
// story stays flat.
enum class FosterDirection { above, below };

// Which turn window gates VIEWPOINT messages.
enum class ViewpointGate { escalation_window, deescalation_window };

struct RuleConfig {
    double foster_threshold = 0.3;
    double deescalate_threshold = 1.0;
    double asymmetry_fraction = 0.66;
    int asymmetry_min_actions = 9;
    int warmup_turns = 4;
    int escalation_window_first = 3;
    int escalation_window_last = 10;
    int deescalation_min_turn = 8;
    int resend_cooldown_turns = 2;
    int viewpoint_window = 4;
    double viewpoint_dominance = 0.75;
    FosterDirection foster_direction = FosterDirection::above;
    ViewpointGate viewpoint_gate = ViewpointGate::escalation_window;

    void validate() const;  // throws Error(invalid_config)
};

nlohmann::json to_json(const RuleConfig& cfg);
// Missing keys keep their defaults.
RuleConfig rule_config_from_json(const nlohmann::json& doc, RuleConfig base = {});

enum class Addressee { both, side_a, side_b };

std::string_view to_string(Addressee a) noexcept;
Addressee addressee_from_string(std::string_view text);
constexpr Addressee addressee_for(Side s) noexcept { return s == Side::a ? Addressee::side_a : Addressee::side_b; }

// A non-neutral dialog bubble attached to a character, from the inserting
// participant's point of view.
struct AttributedBubble {
    std::string figure;
    int sign = 0;  // +1 or -1
};

// What the rules may observe about a session. Built by the session core.
struct MediatorSnapshot {
    int turn = 1;
    int completed_turns = 0;
    bool turn_end = false;
    std::vector<double> frame_levels;  // per frame, max over the two sides
    double story_level = 0.0;
    bool escalation_observed = false;
    SidePair<int> action_counts{};
    SidePair<std::vector<AttributedBubble>> attributed;  // oldest first
};

struct KindState {
    std::optional<int> last_sent_turn;
    bool sent_this_turn = false;
    std::size_t variants_sent = 0;
    std::string last_variant;

    friend bool operator==(const KindState&, const KindState&) = default;
};

struct MediatorState {
    int turn = 1;
    std::array<KindState, kMessageKindCount> kinds{};
    int deescalation_streak = 0;
    bool escalation_observed = false;

    KindState& operator[](MessageKind k) noexcept { return kinds[static_cast<std::size_t>(k)]; }
    const KindState& operator[](MessageKind k) const noexcept { return kinds[static_cast<std::size_t>(k)]; }

    friend bool operator==(const MediatorState&, const MediatorState&) = default;
};

nlohmann::json to_json(const MediatorState& state);

struct Candidate {
    MessageKind kind = MessageKind::foster_escalation;
    Addressee addressee = Addressee::both;
    nlohmann::json trigger;  // rule inputs at fire time, for the audit log
};

struct MediatorMessage {
    MessageKind kind = MessageKind::foster_escalation;
    std::string variant_id;
    Addressee addressee = Addressee::both;
    LocalizedText text;
    nlohmann::json trigger;
};

std::optional<Candidate> check_foster_escalation(const MediatorSnapshot& snap, const RuleConfig& cfg,
                                                 const MediatorState& state);

// Streak bookkeeping for the de-escalation rule; only end-of-turn snapshots
// move it.
int advance_deescalation_streak(int streak, const MediatorSnapshot& snap, const RuleConfig& cfg) noexcept;

// Expects state.deescalation_streak already advanced for this snapshot.
std::optional<Candidate> check_initiate_deescalation(const MediatorSnapshot& snap, const RuleConfig& cfg,
                                                     const MediatorState& state);

std::optional<Candidate> check_viewpoint(const MediatorSnapshot& snap, const RuleConfig& cfg,
                                         const MediatorState& state);

std::optional<Candidate> check_balance(const MediatorSnapshot& snap, const RuleConfig& cfg,
                                       const MediatorState& state);

// true = allow
bool gate(MessageKind kind, const MediatorState& state, int current_turn, const RuleConfig& cfg) noexcept;

// Round-robin over the library's variants of `kind`; updates history.
// Throws Error(validation_error) if the library has no variant of that kind.
const MessageTemplate& select_variant(MessageKind kind, const Library& lib, KindState& history);

struct Evaluation {
    std::vector<MediatorMessage> messages;
    MediatorState state;
};

// Rule order: de-escalation, foster-escalation, viewpoint, balance. Each
// candidate passes through gate(); at most one message per kind.
Evaluation evaluate(const MediatorSnapshot& snap, const RuleConfig& cfg, MediatorState state, const Library& lib);

}  // namespace communics
