#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "communics/session.hpp"

namespace communics {

enum class ClientRole { side_a, side_b, human_mediator, observer };

std::string_view to_string(ClientRole r) noexcept;
ClientRole client_role_from_string(std::string_view text);
std::optional<Side> participant_side(ClientRole r) noexcept;
constexpr ClientRole client_role_for(Side s) noexcept { return s == Side::a ? ClientRole::side_a : ClientRole::side_b; }

// A materialized story view:
//   {seq, turn, completed_turns, active, completed, frames[], messages[]}
// Text fields are named "text" and hold the viewer's language only.
nlohmann::json render_view(const Session& session, std::string_view language);

// Wire message type that carries an event: delta, mediator_msg or
// human_mediator_msg.
std::string_view wire_type_for(EventKind kind) noexcept;

// Payload of a delta-like message: the event plus rendered strings and
// image refs the view needs.
nlohmann::json render_event(const SessionEvent& ev, const Library& lib, std::string_view language);

// Level telemetry for mediator and observer channels.
nlohmann::json render_telemetry(const Session& session, const nlohmann::json& shadow);

nlohmann::json wire_message(std::string_view type, std::string_view session_id, std::optional<std::uint64_t> seq,
                            nlohmann::json payload);

// Client-side state: a snapshot followed by seq-ordered deltas. Shared by the
// headless clients and the sim agents.
class ClientView {
public:
    enum class Applied { ok, stale, gap };

    void apply_snapshot(const nlohmann::json& view);
    // Accepts delta / mediator_msg / human_mediator_msg messages; anything else
    // is ignored (returns ok). On a gap the view is left untouched.
    Applied apply(const nlohmann::json& message);

    bool ready() const noexcept { return ready_; }
    std::uint64_t seq() const noexcept { return seq_; }
    const nlohmann::json& view() const noexcept { return view_; }

private:
    void fold(const nlohmann::json& event);

    nlohmann::json view_;
    std::uint64_t seq_ = 0;
    bool ready_ = false;
};

// Copy of a view with every "text" field removed, for comparing structure
// across languages.
nlohmann::json strip_text(const nlohmann::json& view);

}  // namespace communics
