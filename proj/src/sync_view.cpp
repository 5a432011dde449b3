#include "communics/sync_view.hpp"

#include <algorithm>

namespace communics {

using nlohmann::json;

std::string_view to_string(ClientRole r) noexcept {
    switch (r) {
        case ClientRole::side_a: return "side_a";
        case ClientRole::side_b: return "side_b";
        case ClientRole::human_mediator: return "human_mediator";
        case ClientRole::observer: return "observer";
    }
    return "observer";
}

ClientRole client_role_from_string(std::string_view text) {
    for (auto r : {ClientRole::side_a, ClientRole::side_b, ClientRole::human_mediator, ClientRole::observer}) {
        if (to_string(r) == text) return r;
    }
    throw Error(ErrorCode::parse_error, "unknown client role '" + std::string(text) + "'");
}

std::optional<Side> participant_side(ClientRole r) noexcept {
    if (r == ClientRole::side_a) return Side::a;
    if (r == ClientRole::side_b) return Side::b;
    return std::nullopt;
}

namespace {

json position_json(const Position& p) { return {{"x", p.x}, {"y", p.y}}; }

std::string human_text(const json& text, std::string_view language) {
    if (auto it = text.find(std::string(language)); it != text.end()) return it->get<std::string>();
    // Untranslated messages carry a single language.
    return text.empty() ? std::string() : text.begin()->get<std::string>();
}

json empty_frame(std::uint64_t frame_id, const std::string& background_id, const std::string& image,
                 std::string_view created_by) {
    return {{"frame_id", frame_id},
            {"background_id", background_id},
            {"image", image},
            {"created_by", created_by},
            {"characters", json::array({nullptr, nullptr})},
            {"objects", json::array()},
            {"bubbles", json::array()}};
}

json message_entry(const SessionEvent& ev, const Library& lib, std::string_view language) {
    if (ev.kind == EventKind::mediator_msg) {
        const auto variant = ev.payload.at("variant_id").get<std::string>();
        return {{"seq", ev.seq},
                {"turn", ev.turn},
                {"source", "automated"},
                {"kind", ev.payload.at("kind")},
                {"variant_id", variant},
                {"addressee", ev.payload.at("addressee")},
                {"text", localize(lib, variant, language)},
                {"untranslated", false}};
    }
    return {{"seq", ev.seq},
            {"turn", ev.turn},
            {"source", "human"},
            {"kind", nullptr},
            {"variant_id", nullptr},
            {"addressee", ev.payload.at("addressee")},
            {"text", human_text(ev.payload.at("text"), language)},
            {"untranslated", ev.payload.value("untranslated", false)}};
}

}  // namespace

json render_view(const Session& session, std::string_view language) {
    const auto& lib = session.library();
    json frames = json::array();
    for (const auto& f : session.frames()) {
        json frame = empty_frame(f.frame_id, f.background_id, lib.background(f.background_id).image, to_string(f.created_by));
        for (int slot = 0; slot < kCharacterSlots; ++slot) {
            const auto& c = f.characters[slot];
            if (!c) continue;
            frame["characters"][slot] = {{"element_id", c->element_id},
                                         {"character_id", c->character_id},
                                         {"posture", c->posture},
                                         {"facial_expression", c->facial_expression},
                                         {"position", position_json(c->position)},
                                         {"placed_by", to_string(c->placed_by)},
                                         {"image", lib.character(c->character_id).image}};
        }
        for (const auto& o : f.objects) {
            frame["objects"].push_back({{"element_id", o.element_id},
                                        {"object_id", o.object_id},
                                        {"position", position_json(o.position)},
                                        {"placed_by", to_string(o.placed_by)},
                                        {"image", lib.object(o.object_id).image}});
        }
        for (const auto& b : f.bubbles) {
            frame["bubbles"].push_back({{"element_id", b.element_id},
                                        {"expression_id", b.expression_id},
                                        {"text", localize(lib, b.expression_id, language)},
                                        {"slot", b.slot ? json(*b.slot) : json(nullptr)},
                                        {"bubble_kind", to_string(b.kind)},
                                        {"position", position_json(b.position)},
                                        {"inserted_by", to_string(b.inserted_by)}});
        }
        frames.push_back(std::move(frame));
    }

    json messages = json::array();
    for (const auto& ev : session.events()) {
        if (ev.kind == EventKind::mediator_msg || ev.kind == EventKind::human_mediator_msg) {
            messages.push_back(message_entry(ev, lib, language));
        }
    }

    return {{"seq", session.last_seq()},
            {"turn", session.turn()},
            {"completed_turns", session.completed_turns()},
            {"active", to_string(session.active_side())},
            {"completed", session.completed()},
            {"frames", std::move(frames)},
            {"messages", std::move(messages)}};
}

std::string_view wire_type_for(EventKind kind) noexcept {
    if (kind == EventKind::mediator_msg) return "mediator_msg";
    if (kind == EventKind::human_mediator_msg) return "human_mediator_msg";
    return "delta";
}

json render_event(const SessionEvent& ev, const Library& lib, std::string_view language) {
    json rendered = json::object();
    const auto& p = ev.payload;
    switch (ev.kind) {
        case EventKind::frame_created:
            rendered["image"] = lib.background(p.at("background_id").get<std::string>()).image;
            break;
        case EventKind::character_placed:
            rendered["image"] = lib.character(p.at("character_id").get<std::string>()).image;
            break;
        case EventKind::object_placed:
            rendered["image"] = lib.object(p.at("object_id").get<std::string>()).image;
            break;
        case EventKind::expression_inserted:
            rendered["text"] = localize(lib, p.at("expression_id").get<std::string>(), language);
            break;
        case EventKind::mediator_msg:
        case EventKind::human_mediator_msg:
            rendered["message"] = message_entry(ev, lib, language);
            break;
        default: break;
    }
    return {{"event", to_json(ev)}, {"render", std::move(rendered)}};
}

json render_telemetry(const Session& session, const json& shadow) {
    json frames = json::array();
    for (const auto& f : session.frames()) {
        const auto& e = f.escalation;
        frames.push_back({{"frame_id", f.frame_id},
                          {"initial", {{"side_a", e.initial.a}, {"side_b", e.initial.b}}},
                          {"level", {{"side_a", e.current.a}, {"side_b", e.current.b}}}});
    }
    const auto& ex = session.exposure();
    json out = {{"seq", session.last_seq()},
                {"turn", session.turn()},
                {"frames", std::move(frames)},
                {"story_level", session.story_level()},
                {"escalation_observed", session.escalation_observed()},
                {"action_counts", {{"side_a", session.action_counts().a}, {"side_b", session.action_counts().b}}},
                {"exposure_total", {{"side_a", ex.a.total()}, {"side_b", ex.b.total()}}},
                {"mediator_state", to_json(session.mediator_state())}};
    if (!shadow.is_null()) out["shadow"] = shadow;
    return out;
}

json wire_message(std::string_view type, std::string_view session_id, std::optional<std::uint64_t> seq, json payload) {
    return {{"type", type},
            {"session_id", session_id},
            {"seq", seq ? json(*seq) : json(nullptr)},
            {"payload", std::move(payload)}};
}

void ClientView::apply_snapshot(const json& view) {
    view_ = view;
    seq_ = view.at("seq").get<std::uint64_t>();
    ready_ = true;
}

ClientView::Applied ClientView::apply(const json& message) {
    const auto type = message.value("type", std::string());
    if (type != "delta" && type != "mediator_msg" && type != "human_mediator_msg") return Applied::ok;
    const auto seq = message.at("seq").get<std::uint64_t>();
    if (!ready_ || seq > seq_ + 1) return Applied::gap;
    if (seq <= seq_) return Applied::stale;
    fold(message.at("payload"));
    seq_ = seq;
    view_["seq"] = seq_;
    return Applied::ok;
}

void ClientView::fold(const json& payload) {
    const auto& ev = payload.at("event");
    const auto& p = ev.at("payload");
    const auto& render = payload.at("render");
    const auto kind = event_kind_from_string(ev.at("kind").get<std::string>());
    const auto actor = ev.at("actor").get<std::string>();

    auto frame_of = [&]() -> json& {
        const auto id = p.at("frame_id").get<std::uint64_t>();
        for (auto& f : view_["frames"]) {
            if (f["frame_id"].get<std::uint64_t>() == id) return f;
        }
        throw Error(ErrorCode::unknown_id, "delta references unknown frame " + std::to_string(id));
    };

    switch (kind) {
        case EventKind::turn_started:
            view_["turn"] = p.at("turn");
            view_["active"] = p.at("active");
            break;
        case EventKind::turn_ended:
            view_["completed_turns"] = view_["completed_turns"].get<int>() + 1;
            break;
        case EventKind::session_completed:
            view_["completed"] = true;
            break;
        case EventKind::frame_created:
            view_["frames"].push_back(empty_frame(p.at("frame_id").get<std::uint64_t>(),
                                                  p.at("background_id").get<std::string>(),
                                                  render.at("image").get<std::string>(), actor));
            break;
        case EventKind::character_placed:
            frame_of()["characters"][p.at("slot").get<int>()] = {{"element_id", p.at("element_id")},
                                                                 {"character_id", p.at("character_id")},
                                                                 {"posture", p.at("posture")},
                                                                 {"facial_expression", p.at("facial_expression")},
                                                                 {"position", p.at("position")},
                                                                 {"placed_by", actor},
                                                                 {"image", render.at("image")}};
            break;
        case EventKind::object_placed:
            frame_of()["objects"].push_back({{"element_id", p.at("element_id")},
                                             {"object_id", p.at("object_id")},
                                             {"position", p.at("position")},
                                             {"placed_by", actor},
                                             {"image", render.at("image")}});
            break;
        case EventKind::expression_inserted:
            frame_of()["bubbles"].push_back({{"element_id", p.at("element_id")},
                                             {"expression_id", p.at("expression_id")},
                                             {"text", render.at("text")},
                                             {"slot", p.at("slot")},
                                             {"bubble_kind", p.at("bubble_kind")},
                                             {"position", p.at("position")},
                                             {"inserted_by", actor}});
            break;
        case EventKind::element_deleted: {
            auto& f = frame_of();
            const auto id = p.at("element_id").get<std::uint64_t>();
            auto matches = [id](const json& e) { return !e.is_null() && e.at("element_id").get<std::uint64_t>() == id; };
            const auto element = p.at("element").get<std::string>();
            if (element == "character") {
                for (auto& c : f["characters"]) {
                    if (matches(c)) c = nullptr;
                }
            } else {
                auto& list = f[element == "bubble" ? "bubbles" : "objects"];
                for (auto it = list.begin(); it != list.end(); ++it) {
                    if (matches(*it)) {
                        list.erase(it);
                        break;
                    }
                }
            }
            break;
        }
        case EventKind::mediator_msg:
        case EventKind::human_mediator_msg:
            view_["messages"].push_back(render.at("message"));
            break;
        case EventKind::session_created:
            break;
    }
}

json strip_text(const json& view) {
    if (view.is_object()) {
        json out = json::object();
        for (auto it = view.begin(); it != view.end(); ++it) {
            if (it.key() == "text") continue;
            out[it.key()] = strip_text(*it);
        }
        return out;
    }
    if (view.is_array()) {
        json out = json::array();
        for (const auto& v : view) out.push_back(strip_text(v));
        return out;
    }
    return view;
}

}  // namespace communics
