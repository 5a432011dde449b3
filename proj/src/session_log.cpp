#include "communics/session_log.hpp"

#include <boost/crc.hpp>

#include <sstream>

namespace communics {

using nlohmann::json;

namespace {

std::uint32_t crc32_of(std::string_view bytes) {
    boost::crc_32_type crc;
    crc.process_bytes(bytes.data(), bytes.size());
    return crc.checksum();
}

void put_u32(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>(v & 0xFF));
}

std::uint32_t get_u32(std::string_view in) {
    auto b = [&](std::size_t i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(in[i])); };
    return (b(0) << 24) | (b(1) << 16) | (b(2) << 8) | b(3);
}

}  // namespace

LogHeader header_for(const Session& session) {
    return {kSessionSchemaVersion, session.library().checksum(), to_json(session.config())};
}

json to_json(const LogHeader& h) {
    return {{"schema_version", h.schema_version}, {"library_checksum", h.library_checksum}, {"config", h.config}};
}

LogHeader log_header_from_json(const json& doc) {
    LogHeader h;
    h.schema_version = doc.at("schema_version").get<int>();
    h.library_checksum = doc.at("library_checksum").get<std::string>();
    h.config = doc.at("config");
    return h;
}

std::string encode_record(std::string_view payload) {
    std::string out;
    out.reserve(payload.size() + 8);
    put_u32(out, static_cast<std::uint32_t>(payload.size()));
    put_u32(out, crc32_of(payload));
    out.append(payload);
    return out;
}

std::string encode_log(const LogHeader& header, std::span<const SessionEvent> events) {
    std::string out(kLogMagic);
    out += encode_record(to_json(header).dump());
    for (const auto& ev : events) out += encode_record(to_json(ev).dump());
    return out;
}

SessionLog decode_log(std::string_view bytes) {
    if (bytes.substr(0, kLogMagic.size()) != kLogMagic) throw CorruptLogError(0, "not a session log (bad magic)");
    std::size_t offset = kLogMagic.size();
    SessionLog log;
    std::uint64_t index = 0;
    while (offset < bytes.size()) {
        if (bytes.size() - offset < 8) {
            throw CorruptLogError(index, "truncated record header at byte " + std::to_string(offset));
        }
        const auto length = get_u32(bytes.substr(offset, 4));
        const auto crc = get_u32(bytes.substr(offset + 4, 4));
        offset += 8;
        if (bytes.size() - offset < length) {
            throw CorruptLogError(index, "truncated record " + std::to_string(index) + " at byte " + std::to_string(offset));
        }
        const auto payload = bytes.substr(offset, length);
        if (crc32_of(payload) != crc) {
            throw CorruptLogError(index, "checksum mismatch in record " + std::to_string(index) + " at byte " +
                                             std::to_string(offset - 8));
        }
        offset += length;

        json doc;
        try {
            doc = json::parse(payload);
        } catch (const json::exception& e) {
            throw CorruptLogError(index, "record " + std::to_string(index) + " is not JSON: " + e.what());
        }
        try {
            if (index == 0) {
                log.header = log_header_from_json(doc);
            } else {
                log.events.push_back(event_from_json(doc));
            }
        } catch (const std::exception& e) {
            throw CorruptLogError(index, "record " + std::to_string(index) + ": " + e.what());
        }
        ++index;
    }
    if (index == 0) throw CorruptLogError(0, "log has no header record");
    if (log.header.schema_version != kSessionSchemaVersion) {
        throw CorruptLogError(0, "unsupported schema version " + std::to_string(log.header.schema_version));
    }
    check_log_structure(log.events);

    const auto& created = log.events.front().payload;
    if (created.value("library_checksum", std::string()) != log.header.library_checksum) {
        throw CorruptLogError(1, "header and session_created disagree on the library checksum");
    }
    return log;
}

SessionLog read_log(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot open log " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return decode_log(buffer.str());
}

Session load_and_replay(const std::filesystem::path& path, std::shared_ptr<const Library> library) {
    auto log = read_log(path);
    if (library && log.header.library_checksum != library->checksum()) {
        throw CorruptLogError(0, "library checksum mismatch: log has " + log.header.library_checksum +
                                     ", library is " + library->checksum());
    }
    return replay(log.events, std::move(library));
}

LogWriter::LogWriter(std::filesystem::path path, const LogHeader& header) : path_(std::move(path)) {
    out_.open(path_, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(ErrorCode::io_error, "cannot create log " + path_.string());
    out_ << kLogMagic << encode_record(to_json(header).dump());
    out_.flush();
    if (!out_) throw Error(ErrorCode::io_error, "write failed on " + path_.string());
}

void LogWriter::append(const SessionEvent& ev) {
    if (sealed_) throw Error(ErrorCode::session_completed, "log " + path_.string() + " is sealed");
    if (ev.seq != last_seq_ + 1) {
        throw Error(ErrorCode::io_error, "log append out of order: expected seq " + std::to_string(last_seq_ + 1) +
                                             ", got " + std::to_string(ev.seq));
    }
    out_ << encode_record(to_json(ev).dump());
    out_.flush();
    if (!out_) throw Error(ErrorCode::io_error, "write failed on " + path_.string());
    last_seq_ = ev.seq;
}

void LogWriter::append(std::span<const SessionEvent> events) {
    for (const auto& ev : events) append(ev);
}

void LogWriter::seal() {
    if (sealed_) return;
    out_.close();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::permissions(path_, fs::perms::owner_write | fs::perms::group_write | fs::perms::others_write,
                    fs::perm_options::remove, ec);
    sealed_ = true;
}

}  // namespace communics
