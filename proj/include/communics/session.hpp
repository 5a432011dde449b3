#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "communics/common.hpp"
#include "communics/content_library.hpp"
#include "communics/escalation.hpp"
#include "communics/mediator.hpp"

namespace communics {

inline constexpr int kSessionSchemaVersion = 1;

enum class MediationMode { automated, human };
enum class StoryLevelMode { latest_frame, discounted_aggregate };

std::string_view to_string(MediationMode m) noexcept;

struct SessionConfig {
    MediationMode mode = MediationMode::automated;
    EngineParams engine;
    RuleConfig rules;
    std::optional<int> max_turns;
    std::optional<Side> starting_side;  // unset: seeded coin
    std::uint64_t seed = 0;
    // Background valence enters the frame as an extra insertion when on.
    bool assets_contribute_escalation = false;
    StoryLevelMode story_level = StoryLevelMode::latest_frame;

    void validate() const;
};

nlohmann::json to_json(const SessionConfig& cfg);
SessionConfig session_config_from_json(const nlohmann::json& doc, SessionConfig base = {});

struct Participant {
    Side role = Side::a;
    std::string language;
    std::string alias;
};

enum class Actor { side_a, side_b, mediator, system };

constexpr Actor actor_for(Side s) noexcept { return s == Side::a ? Actor::side_a : Actor::side_b; }
std::string_view to_string(Actor a) noexcept;
Actor actor_from_string(std::string_view text);

enum class EventKind {
    session_created,
    turn_started,
    frame_created,
    character_placed,
    object_placed,
    expression_inserted,
    element_deleted,
    turn_ended,
    mediator_msg,
    human_mediator_msg,
    session_completed,
};

std::string_view to_string(EventKind k) noexcept;
EventKind event_kind_from_string(std::string_view text);

struct SessionEvent {
    std::uint64_t seq = 0;
    int turn = 1;
    Actor actor = Actor::system;
    EventKind kind = EventKind::session_created;
    nlohmann::json payload = nlohmann::json::object();
    std::int64_t timestamp_ms = 0;
};

nlohmann::json to_json(const SessionEvent& ev);
SessionEvent event_from_json(const nlohmann::json& doc);

struct Position {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Position&, const Position&) = default;
};

enum class BubbleKind { dialog, narration };

std::string_view to_string(BubbleKind k) noexcept;

struct CreateFrame {
    std::string background_id;
};

struct PlaceCharacter {
    std::uint64_t frame_id = 0;
    std::string character_id;
    std::optional<int> slot;  // first free slot when unset
    std::optional<std::string> posture;
    std::optional<std::string> facial_expression;
    Position position;
};

struct PlaceObject {
    std::uint64_t frame_id = 0;
    std::string object_id;
    Position position;
};

struct InsertExpression {
    std::uint64_t frame_id = 0;
    std::string expression_id;
    std::optional<int> slot;  // dialog bubbles speak for this character slot
    BubbleKind bubble_kind = BubbleKind::narration;
    Position position;
};

struct DeleteElement {
    std::uint64_t frame_id = 0;
    std::uint64_t element_id = 0;
};

struct EndTurn {};
struct CompleteSession {};

using Action =
    std::variant<CreateFrame, PlaceCharacter, PlaceObject, InsertExpression, DeleteElement, EndTurn, CompleteSession>;

nlohmann::json action_to_json(const Action& action);
Action action_from_json(const nlohmann::json& doc);  // throws Error(invalid_action)

struct CharacterSlot {
    std::uint64_t element_id = 0;
    std::string character_id;
    std::string posture;
    std::string facial_expression;
    Position position;
    Side placed_by = Side::a;
};

struct ObjectPlacement {
    std::uint64_t element_id = 0;
    std::string object_id;
    Position position;
    Side placed_by = Side::a;
};

struct Bubble {
    std::uint64_t element_id = 0;
    std::string expression_id;
    std::optional<int> slot;
    BubbleKind kind = BubbleKind::narration;
    Position position;
    Side inserted_by = Side::a;
};

inline constexpr int kCharacterSlots = 2;

struct Frame {
    std::uint64_t frame_id = 0;
    std::string background_id;
    Side created_by = Side::a;
    std::array<std::optional<CharacterSlot>, kCharacterSlots> characters;
    std::vector<ObjectPlacement> objects;
    std::vector<Bubble> bubbles;
    FrameEscalation escalation;
};

// Milliseconds since the Unix epoch.
using Clock = std::function<std::int64_t()>;
std::int64_t system_clock_ms();

class Session;
Session replay(std::span<const SessionEvent> log, std::shared_ptr<const Library> library);

// Event-sourced state of one storytelling session. Not thread-safe: callers
// serialize all mutating calls per session.
class Session {
public:
    static Session create(SessionConfig config, std::shared_ptr<const Library> library,
                          std::span<const Participant> participants, Clock clock = system_clock_ms);

    // Story actions (and EndTurn / CompleteSession) by a participant. Returns
    // the events emitted, mediator messages included.
    std::vector<SessionEvent> apply_action(Side actor, const Action& action);
    std::vector<SessionEvent> end_turn(Side actor);
    std::vector<SessionEvent> complete(Actor actor);
    std::vector<SessionEvent> post_human_mediator_message(const LocalizedText& text, Addressee addressee,
                                                          bool untranslated);

    const SessionConfig& config() const noexcept { return config_; }
    const Library& library() const noexcept { return *library_; }
    std::shared_ptr<const Library> library_ptr() const noexcept { return library_; }
    const Participant& participant(Side s) const noexcept { return participants_[s]; }

    int turn() const noexcept { return turn_; }
    int completed_turns() const noexcept { return completed_turns_; }
    Side active_side() const noexcept { return active_; }
    bool completed() const noexcept { return completed_; }

    const std::vector<Frame>& frames() const noexcept { return frames_; }
    const Frame* find_frame(std::uint64_t frame_id) const;
    const ExposureTracks& exposure() const noexcept { return exposure_; }
    const MediatorState& mediator_state() const noexcept { return mediator_state_; }
    bool escalation_observed() const noexcept { return escalation_observed_; }
    const SidePair<int>& action_counts() const noexcept { return action_counts_; }

    const std::vector<SessionEvent>& events() const noexcept { return events_; }
    std::uint64_t last_seq() const noexcept { return events_.empty() ? 0 : events_.back().seq; }

    // Max over sides of the story-level measure configured in story_level.
    double story_level() const;
    MediatorSnapshot mediator_snapshot(bool turn_end) const;

    void set_clock(Clock clock) { clock_ = std::move(clock); }

    // Called with every snapshot the rules would see, in both modes. Human
    // mode never evaluates rules itself; the hook lets a caller run them in
    // shadow.
    using EvaluationHook = std::function<void(const MediatorSnapshot&)>;
    void set_evaluation_hook(EvaluationHook hook) { hook_ = std::move(hook); }

private:
    Session() = default;
    friend Session replay(std::span<const SessionEvent> log, std::shared_ptr<const Library> library);

    Frame& frame_for_action(std::uint64_t frame_id);
    void guard_participant(Side actor) const;
    SessionEvent& emit(std::vector<SessionEvent>& out, Actor actor, EventKind kind, nlohmann::json payload,
                       std::int64_t ts);
    void run_mediator(std::vector<SessionEvent>& out, bool turn_end, std::int64_t ts);
    void refresh_escalation_observed();

    std::vector<SessionEvent> create_frame(Side actor, const CreateFrame& a);
    std::vector<SessionEvent> place_character(Side actor, const PlaceCharacter& a);
    std::vector<SessionEvent> place_object(Side actor, const PlaceObject& a);
    std::vector<SessionEvent> insert_expression(Side actor, const InsertExpression& a);
    std::vector<SessionEvent> delete_element(Side actor, const DeleteElement& a);
    std::vector<SessionEvent> finish(Actor actor, std::vector<SessionEvent> out, std::int64_t ts);

    SessionConfig config_;
    std::shared_ptr<const Library> library_;
    SidePair<Participant> participants_;
    Clock clock_;
    EvaluationHook hook_;

    int turn_ = 1;
    int completed_turns_ = 0;
    Side active_ = Side::a;
    bool completed_ = false;

    std::vector<Frame> frames_;
    std::uint64_t next_frame_id_ = 1;
    std::uint64_t next_element_id_ = 1;
    ExposureTracks exposure_;
    MediatorState mediator_state_;
    bool escalation_observed_ = false;
    SidePair<int> action_counts_{};
    SidePair<std::vector<AttributedBubble>> attributed_;

    std::vector<SessionEvent> events_;
};

// Rebuilds a session from its log, re-deriving every consequence and checking
// it against the logged events (levels within 1e-12, mediator decisions
// exactly). Throws CorruptLogError naming the offending seq.
Session replay(std::span<const SessionEvent> log, std::shared_ptr<const Library> library);

// Structural checks only: first event, seq continuity, monotone turns, nothing
// after completion. Throws CorruptLogError.
void check_log_structure(std::span<const SessionEvent> log);

}  // namespace communics
