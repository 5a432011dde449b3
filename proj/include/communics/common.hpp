#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace communics {

// The two conflict parties. Each side is bound to one language of the
// library's aligned pair.
enum class Side { a, b };

constexpr Side other(Side s) noexcept { return s == Side::a ? Side::b : Side::a; }

std::string_view to_string(Side s) noexcept;  // "side_a" / "side_b"
Side side_from_string(std::string_view text);

template <typename T>
struct SidePair {
    T a{};
    T b{};

    T& operator[](Side s) noexcept { return s == Side::a ? a : b; }
    const T& operator[](Side s) const noexcept { return s == Side::a ? a : b; }

    friend bool operator==(const SidePair&, const SidePair&) = default;
};

// language code -> display string
using LocalizedText = std::map<std::string, std::string>;

enum class ErrorCode {
    parse_error,
    validation_error,
    unknown_id,
    unsupported_language,
    missing_translation,
    invalid_config,
    empty_library,
    turn_violation,
    slot_full,
    invalid_action,
    already_deleted,
    session_completed,
    corrupt_log,
    mode_violation,
    role_violation,
    bad_token,
    already_connected,
    unknown_session,
    io_error,
    transport_error,
};

// Machine-readable wire form, e.g. "TURN_VIOLATION".
std::string_view error_code_name(ErrorCode code) noexcept;
std::optional<ErrorCode> error_code_from_name(std::string_view name) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Raised by log decoding and replay. position is the 1-based seq (or record
// index for framing errors) where the corruption was detected.
class CorruptLogError : public Error {
public:
    CorruptLogError(std::uint64_t position, const std::string& what)
        : Error(ErrorCode::corrupt_log, what), position_(position) {}

    std::uint64_t position() const noexcept { return position_; }

private:
    std::uint64_t position_;
};

}  // namespace communics
