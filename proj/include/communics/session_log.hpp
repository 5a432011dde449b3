#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "communics/session.hpp"

namespace communics {

// On-disk session log: magic, then records of
//   [u32 big-endian payload length][u32 big-endian CRC-32 of payload][payload]
// where payload is compact UTF-8 JSON. Record 0 is the header, records 1..n
// are events in seq order. See docs/session-log.md.
inline constexpr std::string_view kLogMagic = "CMXLOG1\n";

struct LogHeader {
    int schema_version = kSessionSchemaVersion;
    std::string library_checksum;
    nlohmann::json config;

    friend bool operator==(const LogHeader&, const LogHeader&) = default;
};

LogHeader header_for(const Session& session);
nlohmann::json to_json(const LogHeader& h);
LogHeader log_header_from_json(const nlohmann::json& doc);

struct SessionLog {
    LogHeader header;
    std::vector<SessionEvent> events;
};

std::string encode_record(std::string_view payload);
std::string encode_log(const LogHeader& header, std::span<const SessionEvent> events);

// Throws CorruptLogError; position is the record index (= seq for events).
// Checks framing, CRCs, the header and the event structure, not the replay.
SessionLog decode_log(std::string_view bytes);
SessionLog read_log(const std::filesystem::path& path);

// Full check: decode, header/library agreement, replay verification.
Session load_and_replay(const std::filesystem::path& path, std::shared_ptr<const Library> library);

// Append-only writer. Each append is flushed before returning; seal() makes the
// file read-only and refuses further appends.
class LogWriter {
public:
    LogWriter(std::filesystem::path path, const LogHeader& header);
    LogWriter(const LogWriter&) = delete;
    LogWriter& operator=(const LogWriter&) = delete;

    void append(const SessionEvent& ev);
    void append(std::span<const SessionEvent> events);
    void seal();

    bool sealed() const noexcept { return sealed_; }
    std::uint64_t last_seq() const noexcept { return last_seq_; }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::uint64_t last_seq_ = 0;
    bool sealed_ = false;
};

}  // namespace communics
