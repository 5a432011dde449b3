#include "communics/session.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace communics {

using nlohmann::json;

std::string_view to_string(MediationMode m) noexcept { return m == MediationMode::automated ? "automated" : "human"; }

std::string_view to_string(Actor a) noexcept {
    switch (a) {
        case Actor::side_a: return "side_a";
        case Actor::side_b: return "side_b";
        case Actor::mediator: return "mediator";
        case Actor::system: return "system";
    }
    return "system";
}

Actor actor_from_string(std::string_view text) {
    for (auto a : {Actor::side_a, Actor::side_b, Actor::mediator, Actor::system}) {
        if (to_string(a) == text) return a;
    }
    throw Error(ErrorCode::parse_error, "unknown actor '" + std::string(text) + "'");
}

namespace {

constexpr std::array kEventKinds{EventKind::session_created,     EventKind::turn_started,   EventKind::frame_created,
                                 EventKind::character_placed,    EventKind::object_placed,  EventKind::expression_inserted,
                                 EventKind::element_deleted,     EventKind::turn_ended,     EventKind::mediator_msg,
                                 EventKind::human_mediator_msg,  EventKind::session_completed};

std::optional<Side> side_of(Actor a) {
    if (a == Actor::side_a) return Side::a;
    if (a == Actor::side_b) return Side::b;
    return std::nullopt;
}

json level_json(const SideLevel& l) { return {{"side_a", l.a}, {"side_b", l.b}}; }
json position_json(const Position& p) { return {{"x", p.x}, {"y", p.y}}; }

Position position_from(const json& doc) {
    if (doc.is_null()) return {};
    Position p{doc.at("x").get<double>(), doc.at("y").get<double>()};
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error(ErrorCode::invalid_action, "position must be finite");
    return p;
}

std::optional<int> optional_int(const json& doc, const char* key) {
    if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
    return doc[key].get<int>();
}

std::optional<std::string> optional_string(const json& doc, const char* key) {
    if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
    return doc[key].get<std::string>();
}

int sign_of(int v) { return (v > 0) - (v < 0); }

}  // namespace

std::string_view to_string(EventKind k) noexcept {
    switch (k) {
        case EventKind::session_created: return "session_created";
        case EventKind::turn_started: return "turn_started";
        case EventKind::frame_created: return "frame_created";
        case EventKind::character_placed: return "character_placed";
        case EventKind::object_placed: return "object_placed";
        case EventKind::expression_inserted: return "expression_inserted";
        case EventKind::element_deleted: return "element_deleted";
        case EventKind::turn_ended: return "turn_ended";
        case EventKind::mediator_msg: return "mediator_msg";
        case EventKind::human_mediator_msg: return "human_mediator_msg";
        case EventKind::session_completed: return "session_completed";
    }
    return "session_created";
}

EventKind event_kind_from_string(std::string_view text) {
    for (auto k : kEventKinds) {
        if (to_string(k) == text) return k;
    }
    throw Error(ErrorCode::parse_error, "unknown event kind '" + std::string(text) + "'");
}

std::string_view to_string(BubbleKind k) noexcept { return k == BubbleKind::dialog ? "dialog" : "narration"; }

std::int64_t system_clock_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------------------
// Config and wire forms
// ---------------------------------------------------------------------------

void SessionConfig::validate() const {
    engine.validate();
    rules.validate();
    if (max_turns && *max_turns < 1) throw Error(ErrorCode::invalid_config, "max_turns must be >= 1");
}

json to_json(const SessionConfig& cfg) {
    return {{"mode", to_string(cfg.mode)},
            {"engine", {{"gamma", cfg.engine.gamma}, {"lambda", cfg.engine.lambda}}},
            {"rules", to_json(cfg.rules)},
            {"max_turns", cfg.max_turns ? json(*cfg.max_turns) : json(nullptr)},
            {"starting_side", cfg.starting_side ? json(to_string(*cfg.starting_side)) : json(nullptr)},
            {"seed", cfg.seed},
            {"assets_contribute_escalation", cfg.assets_contribute_escalation},
            {"story_level",
             cfg.story_level == StoryLevelMode::latest_frame ? "latest_frame" : "discounted_aggregate"}};
}

SessionConfig session_config_from_json(const json& doc, SessionConfig cfg) {
    if (doc.is_null()) return cfg;
    if (!doc.is_object()) throw Error(ErrorCode::invalid_config, "session config must be an object");
    try {
        if (doc.contains("mode")) {
            auto m = doc["mode"].get<std::string>();
            if (m != "automated" && m != "human") throw Error(ErrorCode::invalid_config, "mode: automated|human");
            cfg.mode = m == "automated" ? MediationMode::automated : MediationMode::human;
        }
        if (doc.contains("engine")) {
            cfg.engine.gamma = doc["engine"].value("gamma", cfg.engine.gamma);
            cfg.engine.lambda = doc["engine"].value("lambda", cfg.engine.lambda);
        }
        if (doc.contains("rules")) cfg.rules = rule_config_from_json(doc["rules"], cfg.rules);
        if (doc.contains("max_turns")) cfg.max_turns = optional_int(doc, "max_turns");
        if (doc.contains("starting_side")) {
            auto s = optional_string(doc, "starting_side");
            cfg.starting_side = s ? std::optional<Side>(side_from_string(*s)) : std::nullopt;
        }
        cfg.seed = doc.value("seed", cfg.seed);
        cfg.assets_contribute_escalation = doc.value("assets_contribute_escalation", cfg.assets_contribute_escalation);
        if (doc.contains("story_level")) {
            auto s = doc["story_level"].get<std::string>();
            if (s == "latest_frame") {
                cfg.story_level = StoryLevelMode::latest_frame;
            } else if (s == "discounted_aggregate") {
                cfg.story_level = StoryLevelMode::discounted_aggregate;
            } else {
                throw Error(ErrorCode::invalid_config, "story_level: latest_frame|discounted_aggregate");
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_config, std::string("session config: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == ErrorCode::invalid_config) throw;
        throw Error(ErrorCode::invalid_config, e.what());
    }
    return cfg;
}

json to_json(const SessionEvent& ev) {
    return {{"seq", ev.seq},
            {"turn", ev.turn},
            {"actor", to_string(ev.actor)},
            {"kind", to_string(ev.kind)},
            {"payload", ev.payload},
            {"timestamp_ms", ev.timestamp_ms}};
}

SessionEvent event_from_json(const json& doc) {
    try {
        SessionEvent ev;
        ev.seq = doc.at("seq").get<std::uint64_t>();
        ev.turn = doc.at("turn").get<int>();
        ev.actor = actor_from_string(doc.at("actor").get<std::string>());
        ev.kind = event_kind_from_string(doc.at("kind").get<std::string>());
        ev.payload = doc.value("payload", json::object());
        ev.timestamp_ms = doc.at("timestamp_ms").get<std::int64_t>();
        return ev;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("malformed event record: ") + e.what());
    }
}

json action_to_json(const Action& action) {
    return std::visit(
        [](const auto& a) -> json {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, CreateFrame>) {
                return {{"kind", "create_frame"}, {"background_id", a.background_id}};
            } else if constexpr (std::is_same_v<T, PlaceCharacter>) {
                json j = {{"kind", "place_character"},
                          {"frame_id", a.frame_id},
                          {"character_id", a.character_id},
                          {"position", position_json(a.position)}};
                if (a.slot) j["slot"] = *a.slot;
                if (a.posture) j["posture"] = *a.posture;
                if (a.facial_expression) j["facial_expression"] = *a.facial_expression;
                return j;
            } else if constexpr (std::is_same_v<T, PlaceObject>) {
                return {{"kind", "place_object"},
                        {"frame_id", a.frame_id},
                        {"object_id", a.object_id},
                        {"position", position_json(a.position)}};
            } else if constexpr (std::is_same_v<T, InsertExpression>) {
                json j = {{"kind", "insert_expression"},
                          {"frame_id", a.frame_id},
                          {"expression_id", a.expression_id},
                          {"bubble_kind", to_string(a.bubble_kind)},
                          {"position", position_json(a.position)}};
                if (a.slot) j["slot"] = *a.slot;
                return j;
            } else if constexpr (std::is_same_v<T, DeleteElement>) {
                return {{"kind", "delete_element"}, {"frame_id", a.frame_id}, {"element_id", a.element_id}};
            } else if constexpr (std::is_same_v<T, EndTurn>) {
                return {{"kind", "end_turn"}};
            } else {
                return {{"kind", "complete"}};
            }
        },
        action);
}

Action action_from_json(const json& doc) {
    try {
        const auto kind = doc.at("kind").get<std::string>();
        if (kind == "create_frame") return CreateFrame{doc.at("background_id").get<std::string>()};
        if (kind == "place_character") {
            return PlaceCharacter{doc.at("frame_id").get<std::uint64_t>(),
                                  doc.at("character_id").get<std::string>(),
                                  optional_int(doc, "slot"),
                                  optional_string(doc, "posture"),
                                  optional_string(doc, "facial_expression"),
                                  position_from(doc.value("position", json()))};
        }
        if (kind == "place_object") {
            return PlaceObject{doc.at("frame_id").get<std::uint64_t>(), doc.at("object_id").get<std::string>(),
                               position_from(doc.value("position", json()))};
        }
        if (kind == "insert_expression") {
            auto bk = doc.value("bubble_kind", std::string("narration"));
            if (bk != "dialog" && bk != "narration") throw Error(ErrorCode::invalid_action, "bubble_kind: dialog|narration");
            return InsertExpression{doc.at("frame_id").get<std::uint64_t>(), doc.at("expression_id").get<std::string>(),
                                    optional_int(doc, "slot"),
                                    bk == "dialog" ? BubbleKind::dialog : BubbleKind::narration,
                                    position_from(doc.value("position", json()))};
        }
        if (kind == "delete_element") {
            return DeleteElement{doc.at("frame_id").get<std::uint64_t>(), doc.at("element_id").get<std::uint64_t>()};
        }
        if (kind == "end_turn") return EndTurn{};
        if (kind == "complete") return CompleteSession{};
        throw Error(ErrorCode::invalid_action, "unknown action kind '" + kind + "'");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_action, std::string("malformed action: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

Session Session::create(SessionConfig config, std::shared_ptr<const Library> library,
                        std::span<const Participant> participants, Clock clock) {
    config.validate();
    if (!library || !library->usable_for_sessions()) {
        throw Error(ErrorCode::empty_library, "session needs a library with backgrounds and expressions");
    }
    if (participants.size() != 2 || participants[0].role == participants[1].role) {
        throw Error(ErrorCode::invalid_config, "a session needs exactly one participant per side");
    }

    Session s;
    s.config_ = config;
    s.library_ = std::move(library);
    s.clock_ = clock ? std::move(clock) : Clock(system_clock_ms);
    for (const auto& p : participants) {
        if (p.language != s.library_->languages()[p.role]) {
            throw Error(ErrorCode::invalid_config, std::string(to_string(p.role)) + " must use language '" +
                                                       s.library_->languages()[p.role] + "'");
        }
        s.participants_[p.role] = p;
    }

    if (config.starting_side) {
        s.active_ = *config.starting_side;
    } else {
        std::mt19937_64 coin(config.seed);
        s.active_ = (coin() & 1U) ? Side::b : Side::a;
    }

    const auto ts = s.clock_();
    std::vector<SessionEvent> out;
    json participants_json = json::array();
    for (Side side : {Side::a, Side::b}) {
        const auto& p = s.participants_[side];
        participants_json.push_back({{"role", to_string(side)}, {"language", p.language}, {"alias", p.alias}});
    }
    s.emit(out, Actor::system, EventKind::session_created,
           {{"schema_version", kSessionSchemaVersion},
            {"library_checksum", s.library_->checksum()},
            {"config", to_json(config)},
            {"participants", participants_json},
            {"starting_side", to_string(s.active_)}},
           ts);
    s.emit(out, Actor::system, EventKind::turn_started, {{"turn", 1}, {"active", to_string(s.active_)}}, ts);
    return s;
}

SessionEvent& Session::emit(std::vector<SessionEvent>& out, Actor actor, EventKind kind, json payload,
                            std::int64_t ts) {
    SessionEvent ev{last_seq() + 1, turn_, actor, kind, std::move(payload), ts};
    events_.push_back(ev);
    out.push_back(std::move(ev));
    return events_.back();
}

void Session::guard_participant(Side actor) const {
    if (completed_) throw Error(ErrorCode::session_completed, "session is completed");
    if (actor != active_) {
        throw Error(ErrorCode::turn_violation,
                    std::string("it is ") + std::string(to_string(active_)) + "'s turn, not " + std::string(to_string(actor)));
    }
}

Frame& Session::frame_for_action(std::uint64_t frame_id) {
    auto it = std::find_if(frames_.begin(), frames_.end(), [&](const Frame& f) { return f.frame_id == frame_id; });
    if (it == frames_.end()) throw Error(ErrorCode::unknown_id, "unknown frame " + std::to_string(frame_id));
    return *it;
}

const Frame* Session::find_frame(std::uint64_t frame_id) const {
    auto it = std::find_if(frames_.begin(), frames_.end(), [&](const Frame& f) { return f.frame_id == frame_id; });
    return it == frames_.end() ? nullptr : &*it;
}

double Session::story_level() const {
    if (frames_.empty()) return 0.0;
    if (config_.story_level == StoryLevelMode::latest_frame) {
        const auto& cur = frames_.back().escalation.current;
        return std::max(cur.a, cur.b);
    }
    std::vector<SideLevel> levels;
    levels.reserve(frames_.size());
    for (const auto& f : frames_) levels.push_back(f.escalation.current);
    const auto agg = discounted_story_level(levels, config_.engine);
    return std::max(agg.a, agg.b);
}

MediatorSnapshot Session::mediator_snapshot(bool turn_end) const {
    MediatorSnapshot snap;
    snap.turn = turn_;
    snap.completed_turns = completed_turns_;
    snap.turn_end = turn_end;
    snap.frame_levels.reserve(frames_.size());
    for (const auto& f : frames_) {
        snap.frame_levels.push_back(std::max(f.escalation.current.a, f.escalation.current.b));
    }
    snap.story_level = story_level();
    snap.escalation_observed = escalation_observed_;
    snap.action_counts = action_counts_;
    snap.attributed = attributed_;
    return snap;
}

void Session::refresh_escalation_observed() {
    if (escalation_observed_) return;
    escalation_observed_ = std::any_of(frames_.begin(), frames_.end(), [&](const Frame& f) {
        return std::max(f.escalation.current.a, f.escalation.current.b) > config_.rules.foster_threshold;
    });
}

void Session::run_mediator(std::vector<SessionEvent>& out, bool turn_end, std::int64_t ts) {
    const auto snap = mediator_snapshot(turn_end);
    if (hook_) hook_(snap);
    if (config_.mode != MediationMode::automated) return;
    auto result = evaluate(snap, config_.rules, mediator_state_, *library_);
    mediator_state_ = std::move(result.state);
    for (auto& msg : result.messages) {
        emit(out, Actor::mediator, EventKind::mediator_msg,
             {{"kind", to_string(msg.kind)},
              {"variant_id", msg.variant_id},
              {"addressee", to_string(msg.addressee)},
              {"trigger", std::move(msg.trigger)}},
             ts);
    }
}

std::vector<SessionEvent> Session::apply_action(Side actor, const Action& action) {
    return std::visit(
        [&](const auto& a) -> std::vector<SessionEvent> {
            using T = std::decay_t<decltype(a)>;
            if constexpr (std::is_same_v<T, CreateFrame>) {
                return create_frame(actor, a);
            } else if constexpr (std::is_same_v<T, PlaceCharacter>) {
                return place_character(actor, a);
            } else if constexpr (std::is_same_v<T, PlaceObject>) {
                return place_object(actor, a);
            } else if constexpr (std::is_same_v<T, InsertExpression>) {
                return insert_expression(actor, a);
            } else if constexpr (std::is_same_v<T, DeleteElement>) {
                return delete_element(actor, a);
            } else if constexpr (std::is_same_v<T, EndTurn>) {
                return end_turn(actor);
            } else {
                return complete(actor_for(actor));
            }
        },
        action);
}

std::vector<SessionEvent> Session::create_frame(Side actor, const CreateFrame& a) {
    guard_participant(actor);
    const auto& bg = library_->background(a.background_id);
    const auto ts = clock_();

    std::vector<SideLevel> previous;
    previous.reserve(frames_.size());
    for (const auto& f : frames_) previous.push_back(f.escalation.current);

    Frame frame;
    frame.frame_id = next_frame_id_++;
    frame.background_id = bg.id;
    frame.created_by = actor;
    frame.escalation = FrameEscalation::starting_at(initial_frame_escalation(previous, config_.engine));

    json payload = {{"frame_id", frame.frame_id},
                    {"background_id", frame.background_id},
                    {"initial", level_json(frame.escalation.initial)}};
    if (config_.assets_contribute_escalation) {
        // Valence follows the library convention: negative scenery escalates.
        const int annotated = bg.valence == Valence::negative ? -1 : bg.valence == Valence::positive ? 1 : 0;
        const Sentiment s = to_engine_convention({annotated, annotated});
        apply_insertion(frame.escalation, 0, s, actor, exposure_, turn_, config_.engine);
        payload["background_sentiment"] = {{"side_a", s.a}, {"side_b", s.b}};
    }
    payload["level"] = level_json(frame.escalation.current);
    frames_.push_back(std::move(frame));
    ++action_counts_[actor];

    std::vector<SessionEvent> out;
    emit(out, actor_for(actor), EventKind::frame_created, std::move(payload), ts);
    refresh_escalation_observed();
    run_mediator(out, false, ts);
    return out;
}

std::vector<SessionEvent> Session::place_character(Side actor, const PlaceCharacter& a) {
    guard_participant(actor);
    auto& frame = frame_for_action(a.frame_id);
    const auto& ch = library_->character(a.character_id);

    int slot = 0;
    if (a.slot) {
        if (*a.slot < 0 || *a.slot >= kCharacterSlots) throw Error(ErrorCode::invalid_action, "character slot must be 0 or 1");
        if (frame.characters[*a.slot]) {
            throw Error(ErrorCode::slot_full, "slot " + std::to_string(*a.slot) + " of frame " +
                                                  std::to_string(frame.frame_id) + " is occupied");
        }
        slot = *a.slot;
    } else {
        auto free = std::find_if(frame.characters.begin(), frame.characters.end(),
                                 [](const auto& c) { return !c.has_value(); });
        if (free == frame.characters.end()) {
            throw Error(ErrorCode::slot_full, "frame " + std::to_string(frame.frame_id) + " already has two characters");
        }
        slot = static_cast<int>(free - frame.characters.begin());
    }

    const std::string posture = a.posture.value_or(ch.posture);
    const std::string facial = a.facial_expression.value_or(ch.facial_expression);
    if (!library_->has_posture(posture)) throw Error(ErrorCode::invalid_action, "unknown posture '" + posture + "'");
    if (!library_->has_facial_expression(facial)) {
        throw Error(ErrorCode::invalid_action, "unknown facial expression '" + facial + "'");
    }

    const auto ts = clock_();
    CharacterSlot placed{next_element_id_++, ch.id, posture, facial, a.position, actor};
    json payload = {{"frame_id", frame.frame_id},
                    {"element_id", placed.element_id},
                    {"character_id", placed.character_id},
                    {"slot", slot},
                    {"posture", placed.posture},
                    {"facial_expression", placed.facial_expression},
                    {"position", position_json(placed.position)}};
    frame.characters[slot] = std::move(placed);

    std::vector<SessionEvent> out;
    emit(out, actor_for(actor), EventKind::character_placed, std::move(payload), ts);
    run_mediator(out, false, ts);
    return out;
}

std::vector<SessionEvent> Session::place_object(Side actor, const PlaceObject& a) {
    guard_participant(actor);
    auto& frame = frame_for_action(a.frame_id);
    const auto& obj = library_->object(a.object_id);
    const auto ts = clock_();

    ObjectPlacement placed{next_element_id_++, obj.id, a.position, actor};
    json payload = {{"frame_id", frame.frame_id},
                    {"element_id", placed.element_id},
                    {"object_id", placed.object_id},
                    {"position", position_json(placed.position)}};
    frame.objects.push_back(std::move(placed));
    ++action_counts_[actor];

    std::vector<SessionEvent> out;
    emit(out, actor_for(actor), EventKind::object_placed, std::move(payload), ts);
    run_mediator(out, false, ts);
    return out;
}

std::vector<SessionEvent> Session::insert_expression(Side actor, const InsertExpression& a) {
    guard_participant(actor);
    auto& frame = frame_for_action(a.frame_id);
    const auto& ex = library_->expression(a.expression_id);

    std::string figure;
    if (a.bubble_kind == BubbleKind::dialog) {
        if (!a.slot || *a.slot < 0 || *a.slot >= kCharacterSlots || !frame.characters[*a.slot]) {
            throw Error(ErrorCode::invalid_action, "dialog bubbles must be attached to a placed character");
        }
        figure = library_->character(frame.characters[*a.slot]->character_id).figure;
    } else if (a.slot) {
        throw Error(ErrorCode::invalid_action, "narration bubbles are not attached to a character");
    }

    const auto ts = clock_();
    const auto element_id = next_element_id_++;
    const Sentiment s = to_engine_convention(intrinsic_values(*library_, ex.id));
    const SideLevel impact = apply_insertion(frame.escalation, element_id, s, actor, exposure_, turn_, config_.engine);

    frame.bubbles.push_back({element_id, ex.id, a.slot, a.bubble_kind, a.position, actor});
    ++action_counts_[actor];
    if (a.bubble_kind == BubbleKind::dialog && s[actor] != 0) {
        attributed_[actor].push_back({figure, sign_of(s[actor])});
    }

    json payload = {{"frame_id", frame.frame_id},
                    {"element_id", element_id},
                    {"expression_id", ex.id},
                    {"slot", a.slot ? json(*a.slot) : json(nullptr)},
                    {"bubble_kind", to_string(a.bubble_kind)},
                    {"position", position_json(a.position)},
                    {"sentiment", {{"side_a", s.a}, {"side_b", s.b}}},
                    {"impact", level_json(impact)},
                    {"level", level_json(frame.escalation.current)}};

    std::vector<SessionEvent> out;
    emit(out, actor_for(actor), EventKind::expression_inserted, std::move(payload), ts);
    refresh_escalation_observed();
    run_mediator(out, false, ts);
    return out;
}

std::vector<SessionEvent> Session::delete_element(Side actor, const DeleteElement& a) {
    guard_participant(actor);
    auto& frame = frame_for_action(a.frame_id);

    std::string element_kind;
    Side owner = actor;
    auto bubble = std::find_if(frame.bubbles.begin(), frame.bubbles.end(),
                               [&](const Bubble& b) { return b.element_id == a.element_id; });
    auto object = std::find_if(frame.objects.begin(), frame.objects.end(),
                               [&](const ObjectPlacement& o) { return o.element_id == a.element_id; });
    auto character = std::find_if(frame.characters.begin(), frame.characters.end(),
                                  [&](const auto& c) { return c && c->element_id == a.element_id; });

    if (bubble != frame.bubbles.end()) {
        element_kind = "bubble";
        owner = bubble->inserted_by;
    } else if (object != frame.objects.end()) {
        element_kind = "object";
        owner = object->placed_by;
    } else if (character != frame.characters.end()) {
        element_kind = "character";
        owner = (*character)->placed_by;
        const int slot = static_cast<int>(character - frame.characters.begin());
        const bool speaking = std::any_of(frame.bubbles.begin(), frame.bubbles.end(),
                                          [slot](const Bubble& b) { return b.slot && *b.slot == slot; });
        if (speaking) throw Error(ErrorCode::invalid_action, "character still has attached speech bubbles");
    } else {
        throw Error(ErrorCode::unknown_id, "frame " + std::to_string(frame.frame_id) + " has no element " +
                                               std::to_string(a.element_id));
    }

    const auto ts = clock_();
    if (element_kind == "bubble") {
        apply_deletion(frame.escalation, a.element_id, config_.engine);
        frame.bubbles.erase(bubble);
    } else if (element_kind == "object") {
        frame.objects.erase(object);
    } else {
        character->reset();
    }

    std::vector<SessionEvent> out;
    emit(out, actor_for(actor), EventKind::element_deleted,
         {{"frame_id", frame.frame_id},
          {"element_id", a.element_id},
          {"element", element_kind},
          {"owner", to_string(owner)},
          {"level", level_json(frame.escalation.current)}},
         ts);
    refresh_escalation_observed();
    run_mediator(out, false, ts);
    return out;
}

std::vector<SessionEvent> Session::end_turn(Side actor) {
    guard_participant(actor);
    const auto ts = clock_();
    std::vector<SessionEvent> out;
    emit(out, actor_for(actor), EventKind::turn_ended, {{"turn", turn_}, {"story_level", story_level()}}, ts);
    ++completed_turns_;
    run_mediator(out, true, ts);

    if (config_.max_turns && turn_ >= *config_.max_turns) return finish(Actor::system, std::move(out), ts);

    ++turn_;
    active_ = other(active_);
    emit(out, Actor::system, EventKind::turn_started, {{"turn", turn_}, {"active", to_string(active_)}}, ts);
    return out;
}

std::vector<SessionEvent> Session::complete(Actor actor) {
    if (completed_) throw Error(ErrorCode::session_completed, "session is already completed");
    if (auto side = side_of(actor)) guard_participant(*side);
    return finish(actor, {}, clock_());
}

std::vector<SessionEvent> Session::finish(Actor actor, std::vector<SessionEvent> out, std::int64_t ts) {
    const auto first = events_.empty() ? ts : events_.front().timestamp_ms;
    emit(out, actor, EventKind::session_completed, {{"duration_ms", ts - first}, {"turns_taken", completed_turns_}}, ts);
    completed_ = true;
    return out;
}

std::vector<SessionEvent> Session::post_human_mediator_message(const LocalizedText& text, Addressee addressee,
                                                               bool untranslated) {
    if (config_.mode != MediationMode::human) {
        throw Error(ErrorCode::mode_violation, "human mediator messages require human mediation mode");
    }
    if (completed_) throw Error(ErrorCode::session_completed, "session is completed");

    const auto& langs = library_->languages();
    json text_json = json::object();
    std::size_t present = 0;
    for (const auto& [lang, value] : text) {
        if (!langs.contains(lang)) throw Error(ErrorCode::unsupported_language, "language '" + lang + "' is not configured");
        if (value.empty()) continue;
        text_json[lang] = value;
        ++present;
    }
    if (untranslated ? present != 1 : present != 2) {
        throw Error(ErrorCode::invalid_action, untranslated ? "untranslated messages carry exactly one language"
                                                            : "message needs text in both languages");
    }

    const auto ts = clock_();
    std::vector<SessionEvent> out;
    emit(out, Actor::mediator, EventKind::human_mediator_msg,
         {{"text", text_json}, {"addressee", to_string(addressee)}, {"untranslated", untranslated}}, ts);
    return out;
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

void check_log_structure(std::span<const SessionEvent> log) {
    if (log.empty()) throw CorruptLogError(0, "log is empty: missing session_created");
    if (log.front().kind != EventKind::session_created) {
        throw CorruptLogError(log.front().seq, "log must start with session_created");
    }
    for (std::size_t i = 0; i < log.size(); ++i) {
        const std::uint64_t expected = i + 1;
        if (log[i].seq != expected) {
            throw CorruptLogError(expected, "seq gap: expected " + std::to_string(expected) + ", found " +
                                                std::to_string(log[i].seq));
        }
        if (i > 0 && log[i].turn < log[i - 1].turn) {
            throw CorruptLogError(log[i].seq, "turn index decreases at seq " + std::to_string(log[i].seq));
        }
        if (i > 0 && log[i - 1].kind == EventKind::session_completed) {
            throw CorruptLogError(log[i].seq, "event after session_completed at seq " + std::to_string(log[i].seq));
        }
    }
}

namespace {

bool json_close(const json& x, const json& y, double tol) {
    if (x.is_number() && y.is_number()) {
        if (x.is_number_float() || y.is_number_float()) return std::fabs(x.get<double>() - y.get<double>()) <= tol;
        if (x.is_number_unsigned() && y.is_number_unsigned()) return x.get<std::uint64_t>() == y.get<std::uint64_t>();
        return x.get<std::int64_t>() == y.get<std::int64_t>();
    }
    if (x.type() != y.type()) return false;
    if (x.is_object()) {
        if (x.size() != y.size()) return false;
        for (auto it = x.begin(); it != x.end(); ++it) {
            auto jt = y.find(it.key());
            if (jt == y.end() || !json_close(*it, *jt, tol)) return false;
        }
        return true;
    }
    if (x.is_array()) {
        if (x.size() != y.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (!json_close(x[i], y[i], tol)) return false;
        }
        return true;
    }
    return x == y;
}

void verify_event(const SessionEvent& logged, const SessionEvent& derived) {
    const bool same = logged.seq == derived.seq && logged.turn == derived.turn && logged.actor == derived.actor &&
                      logged.kind == derived.kind && logged.timestamp_ms == derived.timestamp_ms &&
                      json_close(logged.payload, derived.payload, 1e-12);
    if (!same) {
        throw CorruptLogError(logged.seq, "replay diverges at seq " + std::to_string(logged.seq) + ": logged " +
                                              to_json(logged).dump() + ", derived " + to_json(derived).dump());
    }
}

std::vector<SessionEvent> reexecute(Session& session, const SessionEvent& ev) {
    const auto& p = ev.payload;
    auto participant = [&]() {
        auto side = side_of(ev.actor);
        if (!side) throw CorruptLogError(ev.seq, "participant event with actor " + std::string(to_string(ev.actor)));
        return *side;
    };
    switch (ev.kind) {
        case EventKind::frame_created:
            return session.apply_action(participant(), CreateFrame{p.at("background_id").get<std::string>()});
        case EventKind::character_placed:
            return session.apply_action(
                participant(), PlaceCharacter{p.at("frame_id").get<std::uint64_t>(), p.at("character_id").get<std::string>(),
                                              p.at("slot").get<int>(), p.at("posture").get<std::string>(),
                                              p.at("facial_expression").get<std::string>(),
                                              position_from(p.at("position"))});
        case EventKind::object_placed:
            return session.apply_action(participant(),
                                        PlaceObject{p.at("frame_id").get<std::uint64_t>(),
                                                    p.at("object_id").get<std::string>(), position_from(p.at("position"))});
        case EventKind::expression_inserted:
            return session.apply_action(
                participant(),
                InsertExpression{p.at("frame_id").get<std::uint64_t>(), p.at("expression_id").get<std::string>(),
                                 optional_int(p, "slot"),
                                 p.at("bubble_kind").get<std::string>() == "dialog" ? BubbleKind::dialog
                                                                                    : BubbleKind::narration,
                                 position_from(p.at("position"))});
        case EventKind::element_deleted:
            return session.apply_action(participant(), DeleteElement{p.at("frame_id").get<std::uint64_t>(),
                                                                     p.at("element_id").get<std::uint64_t>()});
        case EventKind::turn_ended:
            return session.end_turn(participant());
        case EventKind::session_completed:
            return session.complete(ev.actor);
        case EventKind::human_mediator_msg: {
            LocalizedText text;
            for (const auto& [lang, value] : p.at("text").items()) text[lang] = value.get<std::string>();
            return session.post_human_mediator_message(text, addressee_from_string(p.at("addressee").get<std::string>()),
                                                       p.value("untranslated", false));
        }
        default:
            throw CorruptLogError(ev.seq, "seq " + std::to_string(ev.seq) + ": " + std::string(to_string(ev.kind)) +
                                              " is not a consequence of any preceding event");
    }
}

}  // namespace

Session replay(std::span<const SessionEvent> log, std::shared_ptr<const Library> library) {
    check_log_structure(log);
    if (!library) throw Error(ErrorCode::invalid_config, "replay needs a library");

    const auto& header = log.front().payload;
    SessionConfig config;
    std::vector<Participant> participants;
    try {
        if (header.at("library_checksum").get<std::string>() != library->checksum()) {
            throw CorruptLogError(1, "library checksum mismatch: log has " +
                                         header.at("library_checksum").get<std::string>() + ", library is " +
                                         library->checksum());
        }
        config = session_config_from_json(header.at("config"));
        config.starting_side = side_from_string(header.at("starting_side").get<std::string>());
        for (const auto& p : header.at("participants")) {
            participants.push_back({side_from_string(p.at("role").get<std::string>()),
                                    p.at("language").get<std::string>(), p.at("alias").get<std::string>()});
        }
    } catch (const json::exception& e) {
        throw CorruptLogError(1, std::string("malformed session_created payload: ") + e.what());
    }

    auto now = std::make_shared<std::int64_t>(log.front().timestamp_ms);
    Session session;
    try {
        session = Session::create(config, library, participants, [now] { return *now; });
    } catch (const CorruptLogError&) {
        throw;
    } catch (const Error& e) {
        throw CorruptLogError(1, std::string("session_created rejected on replay: ") + e.what());
    }

    std::size_t cursor = 0;
    auto check_batch = [&](const std::vector<SessionEvent>& derived, std::uint64_t origin) {
        for (const auto& ev : derived) {
            if (cursor >= log.size()) {
                throw CorruptLogError(origin, "log ends before the consequences of seq " + std::to_string(origin));
            }
            verify_event(log[cursor], ev);
            ++cursor;
        }
    };

    // The creation batch: session_created + turn_started. The logged
    // session_created may carry an unset starting_side in its config; compare
    // against the regenerated record with that field normalized.
    {
        auto created = session.events();
        created.front().payload["config"]["starting_side"] = header["config"]["starting_side"];
        check_batch(created, 1);
    }

    while (cursor < log.size()) {
        const auto& ev = log[cursor];
        *now = ev.timestamp_ms;
        std::vector<SessionEvent> derived;
        try {
            derived = reexecute(session, ev);
        } catch (const CorruptLogError&) {
            throw;
        } catch (const Error& e) {
            throw CorruptLogError(ev.seq, "seq " + std::to_string(ev.seq) + " rejected on replay: " + e.what());
        } catch (const json::exception& e) {
            throw CorruptLogError(ev.seq, "seq " + std::to_string(ev.seq) + " has a malformed payload: " + e.what());
        }
        check_batch(derived, ev.seq);
    }

    session.set_clock(system_clock_ms);
    return session;
}

}  // namespace communics
