#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "communics/session.hpp"
#include "communics/session_log.hpp"
#include "communics/sync_view.hpp"

namespace communics {

struct ServiceConfig {
    std::filesystem::path library_path;
    std::string bind_address = "127.0.0.1";
    unsigned short port = 8080;  // 0 picks a free port
    std::optional<std::filesystem::path> log_dir;
    SessionConfig session_defaults;
    int io_threads = 2;
};

// Relative paths resolve against base_dir.
ServiceConfig service_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ServiceConfig load_service_config(const std::filesystem::path& path);

struct CreatedSession {
    std::string session_id;
    std::map<std::string, std::string> tokens;  // role name -> join token
    LanguagePair languages;
};

nlohmann::json to_json(const CreatedSession& c);

// Receives serialized wire messages for one connection. Must not block and
// must not call back into the service.
using Outbox = std::function<void(std::string)>;

// Transport-independent session host: token-based joins, localized
// snapshots and deltas, per-session command serialization, log persistence.
class SyncService {
public:
    explicit SyncService(ServiceConfig config, std::shared_ptr<const Library> library = nullptr);
    ~SyncService();
    SyncService(const SyncService&) = delete;
    SyncService& operator=(const SyncService&) = delete;

    // Request: {"config": {...overrides}, "library": optional path,
    //           "participants": {"side_a": {"alias": ...}, ...}}
    CreatedSession create_session(const nlohmann::json& request);
    std::string add_observer(const std::string& session_id);

    struct Joined {
        std::uint64_t connection_id = 0;
        ClientRole role = ClientRole::observer;
    };
    // Sends the snapshot through `out` before returning. Throws Error.
    Joined join(const std::string& session_id, const std::string& token, Outbox out,
                std::optional<std::string> language = std::nullopt);
    // One client message; replies and broadcasts go through the outboxes.
    void receive(std::uint64_t connection_id, std::string_view text);
    void disconnect(std::uint64_t connection_id);

    std::string export_log(const std::string& session_id) const;
    std::vector<SessionEvent> events(const std::string& session_id) const;
    std::vector<std::string> session_ids() const;
    std::optional<std::filesystem::path> log_path(const std::string& session_id) const;

    const ServiceConfig& config() const noexcept { return config_; }
    std::shared_ptr<const Library> default_library() const noexcept { return library_; }
    void set_clock(Clock clock);

private:
    struct Entry;
    struct ConnectionRef {
        std::shared_ptr<Entry> entry;
        ClientRole role = ClientRole::observer;
    };

    std::shared_ptr<Entry> entry(const std::string& session_id) const;
    std::shared_ptr<const Library> library_for(const nlohmann::json& request);
    void commit(Entry& e, const std::vector<SessionEvent>& events);
    void send_error(Entry& e, std::uint64_t connection_id, const Error& err, const nlohmann::json& request_id);

    ServiceConfig config_;
    std::shared_ptr<const Library> library_;
    Clock clock_ = system_clock_ms;

    mutable std::shared_mutex mutex_;
    std::unordered_map<std::string, std::shared_ptr<Entry>> sessions_;
    std::unordered_map<std::uint64_t, ConnectionRef> connections_;
    std::map<std::filesystem::path, std::shared_ptr<const Library>> libraries_;
    std::uint64_t next_connection_ = 1;
};

std::string random_hex(std::size_t bytes);

}  // namespace communics
