#include "communics/sync_service.hpp"

#include <fstream>
#include <random>
#include <sstream>

namespace communics {

using nlohmann::json;

std::string random_hex(std::size_t bytes) {
    static thread_local std::random_device rd;
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out;
    out.reserve(bytes * 2);
    for (std::size_t i = 0; i < bytes; ++i) {
        const auto b = rd() & 0xFFU;
        out.push_back(kDigits[b >> 4]);
        out.push_back(kDigits[b & 0xF]);
    }
    return out;
}

ServiceConfig service_config_from_json(const json& doc, const std::filesystem::path& base_dir) {
    auto resolve = [&](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    ServiceConfig cfg;
    try {
        cfg.library_path = resolve(doc.at("library").get<std::string>());
        cfg.bind_address = doc.value("bind_address", cfg.bind_address);
        cfg.port = doc.value("port", cfg.port);
        if (doc.contains("log_dir") && !doc["log_dir"].is_null()) cfg.log_dir = resolve(doc["log_dir"].get<std::string>());
        if (doc.contains("session_defaults")) cfg.session_defaults = session_config_from_json(doc["session_defaults"]);
        cfg.io_threads = doc.value("io_threads", cfg.io_threads);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_config, std::string("service config: ") + e.what());
    }
    if (cfg.io_threads < 1) throw Error(ErrorCode::invalid_config, "io_threads must be >= 1");
    cfg.session_defaults.validate();
    return cfg;
}

ServiceConfig load_service_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot open config " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse_error, "config " + path.string() + ": " + e.what());
    }
    return service_config_from_json(doc, path.parent_path());
}

json to_json(const CreatedSession& c) {
    return {{"session_id", c.session_id},
            {"tokens", c.tokens},
            {"languages", {{"side_a", c.languages.side_a}, {"side_b", c.languages.side_b}}}};
}

struct SyncService::Entry {
    struct Token {
        ClientRole role;
        bool used = false;
    };
    struct Connection {
        ClientRole role;
        std::string language;
        Outbox out;
    };

    std::mutex mutex;
    std::string id;
    std::optional<Session> session;
    std::unordered_map<std::string, Token> tokens;
    std::map<std::uint64_t, Connection> connections;
    std::unique_ptr<LogWriter> writer;
    std::filesystem::path log_file;

    // Human mode: rules evaluated in shadow for telemetry only.
    MediatorState shadow_state;
    json shadow_fired = json::array();

    std::string issue_token(ClientRole role) {
        auto token = random_hex(16);
        tokens.emplace(token, Token{role});
        return token;
    }

    bool role_connected(ClientRole role) const {
        for (const auto& [id, c] : connections) {
            if (c.role == role) return true;
        }
        return false;
    }

    json shadow() const {
        if (session->config().mode != MediationMode::human) return nullptr;
        return {{"state", to_json(shadow_state)}, {"fired", shadow_fired}};
    }
};

SyncService::SyncService(ServiceConfig config, std::shared_ptr<const Library> library)
    : config_(std::move(config)), library_(std::move(library)) {
    config_.session_defaults.validate();
    if (!library_) library_ = std::make_shared<const Library>(load_library(config_.library_path));
    if (!config_.library_path.empty()) libraries_[config_.library_path] = library_;
    if (config_.log_dir) std::filesystem::create_directories(*config_.log_dir);
}

SyncService::~SyncService() = default;

void SyncService::set_clock(Clock clock) {
    std::unique_lock lock(mutex_);
    clock_ = std::move(clock);
}

std::shared_ptr<const Library> SyncService::library_for(const json& request) {
    if (!request.contains("library") || request["library"].is_null()) return library_;
    std::filesystem::path path(request["library"].get<std::string>());
    std::unique_lock lock(mutex_);
    if (auto it = libraries_.find(path); it != libraries_.end()) return it->second;
    auto lib = std::make_shared<const Library>(load_library(path));
    libraries_[path] = lib;
    return lib;
}

std::shared_ptr<SyncService::Entry> SyncService::entry(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw Error(ErrorCode::unknown_session, "unknown session '" + session_id + "'");
    return it->second;
}

CreatedSession SyncService::create_session(const json& request) {
    if (!request.is_null() && !request.is_object()) throw Error(ErrorCode::invalid_config, "request must be an object");
    const json req = request.is_null() ? json::object() : request;
    auto lib = library_for(req);
    auto cfg = session_config_from_json(req.value("config", json()), config_.session_defaults);

    std::vector<Participant> participants;
    for (Side side : {Side::a, Side::b}) {
        std::string alias = side == Side::a ? "A" : "B";
        if (req.contains("participants") && req["participants"].contains(std::string(to_string(side)))) {
            alias = req["participants"][std::string(to_string(side))].value("alias", alias);
        }
        participants.push_back({side, lib->languages()[side], alias});
    }

    Clock clock;
    {
        std::shared_lock lock(mutex_);
        clock = clock_;
    }
    auto e = std::make_shared<Entry>();
    e->session = Session::create(cfg, lib, participants, clock);
    e->id = random_hex(8);

    CreatedSession created{e->id, {}, lib->languages()};
    created.tokens["side_a"] = e->issue_token(ClientRole::side_a);
    created.tokens["side_b"] = e->issue_token(ClientRole::side_b);
    if (cfg.mode == MediationMode::human) {
        created.tokens["human_mediator"] = e->issue_token(ClientRole::human_mediator);
        Entry* raw = e.get();
        e->session->set_evaluation_hook([raw](const MediatorSnapshot& snap) {
            auto result = evaluate(snap, raw->session->config().rules, raw->shadow_state, raw->session->library());
            raw->shadow_state = std::move(result.state);
            for (const auto& m : result.messages) {
                raw->shadow_fired.push_back({{"turn", snap.turn},
                                             {"kind", to_string(m.kind)},
                                             {"variant_id", m.variant_id},
                                             {"addressee", to_string(m.addressee)}});
            }
        });
    }

    if (config_.log_dir) {
        e->log_file = *config_.log_dir / (e->id + ".cmxlog");
        e->writer = std::make_unique<LogWriter>(e->log_file, header_for(*e->session));
        e->writer->append(e->session->events());
    }

    std::unique_lock lock(mutex_);
    sessions_[e->id] = e;
    return created;
}

std::string SyncService::add_observer(const std::string& session_id) {
    auto e = entry(session_id);
    std::lock_guard lock(e->mutex);
    return e->issue_token(ClientRole::observer);
}

SyncService::Joined SyncService::join(const std::string& session_id, const std::string& token, Outbox out,
                                      std::optional<std::string> language) {
    auto e = entry(session_id);
    std::lock_guard lock(e->mutex);
    auto it = e->tokens.find(token);
    if (it == e->tokens.end() || it->second.used) throw Error(ErrorCode::bad_token, "invalid or already used token");
    const ClientRole role = it->second.role;
    if (e->session->completed()) throw Error(ErrorCode::session_completed, "session is completed");
    if (role != ClientRole::observer && e->role_connected(role)) {
        throw Error(ErrorCode::already_connected, std::string(to_string(role)) + " is already connected");
    }

    const auto& langs = e->session->library().languages();
    std::string lang;
    if (auto side = participant_side(role)) {
        lang = langs[*side];
    } else {
        lang = language.value_or(langs.side_a);
        if (!langs.contains(lang)) throw Error(ErrorCode::unsupported_language, "language '" + lang + "' is not configured");
    }
    it->second.used = true;

    std::uint64_t id = 0;
    {
        std::unique_lock glock(mutex_);
        id = next_connection_++;
        connections_[id] = {e, role};
    }

    json payload = {{"role", to_string(role)},
                    {"language", lang},
                    {"resume_token", e->issue_token(role)},
                    {"view", render_view(*e->session, lang)}};
    if (!participant_side(role)) payload["telemetry"] = render_telemetry(*e->session, e->shadow());
    out(wire_message("snapshot", e->id, e->session->last_seq(), std::move(payload)).dump());
    e->connections[id] = {role, lang, std::move(out)};
    return {id, role};
}

void SyncService::disconnect(std::uint64_t connection_id) {
    std::shared_ptr<Entry> e;
    {
        std::unique_lock lock(mutex_);
        auto it = connections_.find(connection_id);
        if (it == connections_.end()) return;
        e = it->second.entry;
        connections_.erase(it);
    }
    std::lock_guard lock(e->mutex);
    e->connections.erase(connection_id);
}

void SyncService::commit(Entry& e, const std::vector<SessionEvent>& events) {
    if (e.writer) {
        e.writer->append(events);
        if (e.session->completed()) e.writer->seal();
    }
    const auto& lib = e.session->library();
    for (const auto& ev : events) {
        for (auto& [id, c] : e.connections) {
            c.out(wire_message(wire_type_for(ev.kind), e.id, ev.seq, render_event(ev, lib, c.language)).dump());
        }
    }
    if (events.empty()) return;
    std::optional<std::string> telemetry;
    for (auto& [id, c] : e.connections) {
        if (participant_side(c.role)) continue;
        if (!telemetry) {
            telemetry = wire_message("telemetry", e.id, e.session->last_seq(), render_telemetry(*e.session, e.shadow()))
                            .dump();
        }
        c.out(*telemetry);
    }
}

void SyncService::send_error(Entry& e, std::uint64_t connection_id, const Error& err, const json& request_id) {
    auto it = e.connections.find(connection_id);
    if (it == e.connections.end()) return;
    it->second.out(wire_message("error", e.id, std::nullopt,
                                {{"code", error_code_name(err.code())}, {"message", err.what()}, {"request_id", request_id}})
                       .dump());
}

void SyncService::receive(std::uint64_t connection_id, std::string_view text) {
    ConnectionRef ref;
    {
        std::shared_lock lock(mutex_);
        auto it = connections_.find(connection_id);
        if (it == connections_.end()) return;
        ref = it->second;
    }
    Entry& e = *ref.entry;
    std::lock_guard lock(e.mutex);

    json request_id = nullptr;
    try {
        json msg;
        try {
            msg = json::parse(text);
        } catch (const json::exception& ex) {
            throw Error(ErrorCode::parse_error, std::string("message is not JSON: ") + ex.what());
        }
        if (!msg.is_object()) throw Error(ErrorCode::parse_error, "message must be an object");
        const json payload = msg.value("payload", json::object());
        if (payload.is_object()) request_id = payload.value("request_id", json());
        const auto type = msg.value("type", std::string());

        std::vector<SessionEvent> events;
        if (type == "action") {
            auto side = participant_side(ref.role);
            if (!side) throw Error(ErrorCode::role_violation, "only participants submit actions");
            events = e.session->apply_action(*side, action_from_json(payload.value("action", payload)));
        } else if (type == "human_mediator_msg") {
            if (e.session->config().mode != MediationMode::human) {
                throw Error(ErrorCode::mode_violation, "session uses automated mediation");
            }
            if (ref.role != ClientRole::human_mediator) {
                throw Error(ErrorCode::role_violation, "only the human mediator sends mediator messages");
            }
            LocalizedText texts;
            for (const auto& [lang, value] : payload.at("text").items()) texts[lang] = value.get<std::string>();
            events = e.session->post_human_mediator_message(
                texts, addressee_from_string(payload.value("addressee", std::string("both"))),
                payload.value("untranslated", false));
        } else if (type == "snapshot") {
            const auto& c = e.connections.at(connection_id);
            json snap = {{"role", to_string(c.role)}, {"language", c.language}, {"view", render_view(*e.session, c.language)}};
            if (!participant_side(c.role)) snap["telemetry"] = render_telemetry(*e.session, e.shadow());
            c.out(wire_message("snapshot", e.id, e.session->last_seq(), std::move(snap)).dump());
            return;
        } else {
            throw Error(ErrorCode::parse_error, "unsupported message type '" + type + "'");
        }

        commit(e, events);
        if (auto it = e.connections.find(connection_id); it != e.connections.end()) {
            const auto first = events.empty() ? e.session->last_seq() : events.front().seq;
            it->second.out(wire_message("ack", e.id, first,
                                        {{"request_id", request_id},
                                         {"first_seq", first},
                                         {"last_seq", e.session->last_seq()}})
                               .dump());
        }
    } catch (const Error& err) {
        send_error(e, connection_id, err, request_id);
    } catch (const json::exception& ex) {
        send_error(e, connection_id, Error(ErrorCode::parse_error, ex.what()), request_id);
    }
}

std::string SyncService::export_log(const std::string& session_id) const {
    auto e = entry(session_id);
    std::lock_guard lock(e->mutex);
    return encode_log(header_for(*e->session), e->session->events());
}

std::vector<SessionEvent> SyncService::events(const std::string& session_id) const {
    auto e = entry(session_id);
    std::lock_guard lock(e->mutex);
    return e->session->events();
}

std::vector<std::string> SyncService::session_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, e] : sessions_) out.push_back(id);
    return out;
}

std::optional<std::filesystem::path> SyncService::log_path(const std::string& session_id) const {
    auto e = entry(session_id);
    if (e->log_file.empty()) return std::nullopt;
    return e->log_file;
}

}  // namespace communics
