#include "communics/common.hpp"

namespace communics {

std::string_view to_string(Side s) noexcept { return s == Side::a ? "side_a" : "side_b"; }

Side side_from_string(std::string_view text) {
    if (text == "side_a") return Side::a;
    if (text == "side_b") return Side::b;
    throw Error(ErrorCode::parse_error, "unknown side '" + std::string(text) + "'");
}

std::string_view error_code_name(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::parse_error: return "PARSE_ERROR";
        case ErrorCode::validation_error: return "VALIDATION_ERROR";
        case ErrorCode::unknown_id: return "UNKNOWN_ID";
        case ErrorCode::unsupported_language: return "UNSUPPORTED_LANGUAGE";
        case ErrorCode::missing_translation: return "MISSING_TRANSLATION";
        case ErrorCode::invalid_config: return "INVALID_CONFIG";
        case ErrorCode::empty_library: return "EMPTY_LIBRARY";
        case ErrorCode::turn_violation: return "TURN_VIOLATION";
        case ErrorCode::slot_full: return "SLOT_FULL";
        case ErrorCode::invalid_action: return "INVALID_ACTION";
        case ErrorCode::already_deleted: return "ALREADY_DELETED";
        case ErrorCode::session_completed: return "SESSION_COMPLETED";
        case ErrorCode::corrupt_log: return "CORRUPT_LOG";
        case ErrorCode::mode_violation: return "MODE_VIOLATION";
        case ErrorCode::role_violation: return "ROLE_VIOLATION";
        case ErrorCode::bad_token: return "BAD_TOKEN";
        case ErrorCode::already_connected: return "ALREADY_CONNECTED";
        case ErrorCode::unknown_session: return "UNKNOWN_SESSION";
        case ErrorCode::io_error: return "IO_ERROR";
        case ErrorCode::transport_error: return "TRANSPORT_ERROR";
    }
    return "UNKNOWN";
}

std::optional<ErrorCode> error_code_from_name(std::string_view name) noexcept {
    for (int i = 0; i <= static_cast<int>(ErrorCode::transport_error); ++i) {
        const auto code = static_cast<ErrorCode>(i);
        if (error_code_name(code) == name) return code;
    }
    return std::nullopt;
}

}  // namespace communics
