#include "communics/sim_harness.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <sstream>
#include <thread>

#include "communics/session_analytics.hpp"
#include "communics/session_log.hpp"
#include "communics/sync_service.hpp"
#include "communics/sync_view.hpp"

namespace communics {

using nlohmann::json;

std::string_view to_string(PolicyKind k) noexcept {
    switch (k) {
        case PolicyKind::neutral: return "neutral";
        case PolicyKind::hawk: return "hawk";
        case PolicyKind::dove: return "dove";
        case PolicyKind::asymmetric_prolific: return "asymmetric_prolific";
        case PolicyKind::scripted: return "scripted";
    }
    return "neutral";
}

PolicyKind policy_kind_from_string(std::string_view text) {
    for (auto k : {PolicyKind::neutral, PolicyKind::hawk, PolicyKind::dove, PolicyKind::asymmetric_prolific,
                   PolicyKind::scripted}) {
        if (to_string(k) == text) return k;
    }
    throw Error(ErrorCode::invalid_config, "unknown policy '" + std::string(text) + "'");
}

AgentPolicy default_policy(PolicyKind kind) {
    AgentPolicy p;
    p.kind = kind;
    if (kind == PolicyKind::asymmetric_prolific) p.actions_per_turn = 6;
    return p;
}

AgentPolicy policy_from_json(const json& doc) {
    if (doc.is_string()) return default_policy(policy_kind_from_string(doc.get<std::string>()));
    try {
        auto p = default_policy(policy_kind_from_string(doc.at("kind").get<std::string>()));
        p.actions_per_turn = doc.value("actions_per_turn", p.actions_per_turn);
        p.frames_per_turn = doc.value("frames_per_turn", p.frames_per_turn);
        p.seed = doc.value("seed", p.seed);
        p.delete_rate = doc.value("delete_rate", p.delete_rate);
        p.object_rate = doc.value("object_rate", p.object_rate);
        if (doc.contains("script")) p.script = doc["script"];
        if (p.actions_per_turn < 0 || p.frames_per_turn < 0 || p.frames_per_turn > p.actions_per_turn) {
            throw Error(ErrorCode::invalid_config, "policy needs 0 <= frames_per_turn <= actions_per_turn");
        }
        if (p.kind == PolicyKind::scripted && !p.script.is_array()) {
            throw Error(ErrorCode::invalid_config, "script must be an array of turns");
        }
        return p;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_config, std::string("policy: ") + e.what());
    }
}

json to_json(const AgentPolicy& p) {
    json j = {{"kind", to_string(p.kind)},
              {"actions_per_turn", p.actions_per_turn},
              {"frames_per_turn", p.frames_per_turn},
              {"seed", p.seed},
              {"delete_rate", p.delete_rate},
              {"object_rate", p.object_rate}};
    if (p.kind == PolicyKind::scripted) j["script"] = p.script;
    return j;
}

std::vector<std::string> expression_pool(const Library& lib, PolicyKind kind, Side side) {
    std::vector<std::string> pool;
    for (const auto& ex : lib.expressions()) {
        const auto s = to_engine_convention({ex.sentiment_a, ex.sentiment_b});
        bool keep = false;
        switch (kind) {
            case PolicyKind::hawk: keep = s.a >= 0 && s.b >= 0 && s[side] > 0; break;
            case PolicyKind::dove: keep = s.a <= 0 && s.b <= 0 && s[side] < 0; break;
            default: keep = s.a == 0 && s.b == 0; break;
        }
        if (keep) pool.push_back(ex.id);
    }
    return pool;
}

Agent::Agent(Side side, AgentPolicy policy, std::uint64_t scenario_seed, std::shared_ptr<const Library> library)
    : side_(side), policy_(std::move(policy)), library_(std::move(library)) {
    std::seed_seq seq{scenario_seed, policy_.seed, static_cast<std::uint64_t>(side_ == Side::a ? 0xA : 0xB)};
    rng_.seed(seq);
    pool_ = expression_pool(*library_, policy_.kind, side_);
    if (pool_.empty() && policy_.kind != PolicyKind::scripted) {
        throw Error(ErrorCode::invalid_config, "library has no expressions suiting policy " +
                                                   std::string(to_string(policy_.kind)));
    }
}

bool Agent::chance(double p) { return p > 0.0 && static_cast<double>(rng_() % 1000000) < p * 1000000.0; }
std::size_t Agent::pick(std::size_t n) { return static_cast<std::size_t>(rng_() % n); }

json Agent::scripted(const json& view) {
    const auto turn_index = static_cast<std::size_t>(own_turns_ - 1);
    if (turn_index >= policy_.script.size() || script_step_ >= policy_.script[turn_index].size()) {
        return {{"kind", "end_turn"}};
    }
    json action = policy_.script[turn_index][script_step_++];
    if (action.contains("frame_id") && action["frame_id"] == "latest") {
        if (view.at("frames").empty()) throw Error(ErrorCode::invalid_action, "script refers to a frame before any exists");
        action["frame_id"] = view["frames"].back().at("frame_id");
    }
    return action;
}

json Agent::next_action(const json& view) {
    if (view.at("active").get<std::string>() != to_string(side_)) {
        throw Error(ErrorCode::turn_violation, "agent asked to act out of turn");
    }
    const int turn = view.at("turn").get<int>();
    if (turn != turn_seen_) {
        turn_seen_ = turn;
        ++own_turns_;
        frames_done_ = counted_done_ = characters_done_ = 0;
        script_step_ = 0;
        deleted_this_turn_ = false;
    }
    if (policy_.kind == PolicyKind::scripted) return scripted(view);

    const auto& frames = view.at("frames");
    auto position = [&] {
        return json{{"x", static_cast<double>(pick(1000)) / 1000.0}, {"y", static_cast<double>(pick(1000)) / 1000.0}};
    };
    auto create_frame = [&] {
        ++frames_done_;
        ++counted_done_;
        const auto bgs = library_->backgrounds();
        return json{{"kind", "create_frame"}, {"background_id", bgs[pick(bgs.size())].id}};
    };

    if (counted_done_ < policy_.actions_per_turn && (frames_done_ < policy_.frames_per_turn || frames.empty())) {
        return create_frame();
    }
    if (frames.empty()) return {{"kind", "end_turn"}};
    const auto& latest = frames.back();
    const auto frame_id = latest.at("frame_id");

    std::vector<int> occupied;
    bool free_slot = false;
    for (int slot = 0; slot < kCharacterSlots; ++slot) {
        if (latest["characters"][slot].is_null()) {
            free_slot = true;
        } else {
            occupied.push_back(slot);
        }
    }
    if (frames_done_ > 0 && characters_done_ < kCharacterSlots && free_slot && !library_->characters().empty()) {
        ++characters_done_;
        const auto chars = library_->characters();
        return {{"kind", "place_character"},
                {"frame_id", frame_id},
                {"character_id", chars[pick(chars.size())].id},
                {"position", position()}};
    }

    if (counted_done_ >= policy_.actions_per_turn) return {{"kind", "end_turn"}};

    if (!deleted_this_turn_ && policy_.delete_rate > 0.0) {
        std::vector<std::uint64_t> own;
        for (const auto& b : latest.at("bubbles")) {
            if (b.at("inserted_by").get<std::string>() == to_string(side_)) own.push_back(b.at("element_id").get<std::uint64_t>());
        }
        if (!own.empty() && chance(policy_.delete_rate)) {
            deleted_this_turn_ = true;
            return {{"kind", "delete_element"}, {"frame_id", frame_id}, {"element_id", own[pick(own.size())]}};
        }
    }

    ++counted_done_;
    if (chance(policy_.object_rate) && !library_->objects().empty()) {
        const auto objs = library_->objects();
        return {{"kind", "place_object"}, {"frame_id", frame_id}, {"object_id", objs[pick(objs.size())].id},
                {"position", position()}};
    }

    json action = {{"kind", "insert_expression"}, {"frame_id", frame_id}, {"expression_id", pool_[pick(pool_.size())]}};
    if (!occupied.empty() && pick(2) == 0) {
        action["bubble_kind"] = "dialog";
        action["slot"] = occupied[pick(occupied.size())];
    } else {
        action["bubble_kind"] = "narration";
    }
    action["position"] = position();
    return action;
}

bool ScenarioResult::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const ScenarioCheck& c) { return c.passed; });
}

std::vector<FiredMessage> fired_messages(std::span<const SessionEvent> log) {
    std::vector<FiredMessage> out;
    for (const auto& ev : log) {
        if (ev.kind != EventKind::mediator_msg) continue;
        out.push_back({ev.seq, ev.turn, message_kind_from_string(ev.payload.at("kind").get<std::string>()),
                       addressee_from_string(ev.payload.at("addressee").get<std::string>())});
    }
    return out;
}

json to_json(const ScenarioResult& r) {
    json fired = json::array();
    for (const auto& f : r.fired) {
        fired.push_back({{"seq", f.seq}, {"turn", f.turn}, {"kind", to_string(f.kind)}, {"addressee", to_string(f.addressee)}});
    }
    json levels = json::array();
    for (const auto& l : r.final_levels) levels.push_back({{"side_a", l.a}, {"side_b", l.b}});
    json checks = json::array();
    for (const auto& c : r.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    json out = {{"events", r.log.size()},
                {"fired", fired},
                {"final_levels", levels},
                {"checks", checks},
                {"passed", r.passed()}};
    if (!r.session_id.empty()) out["session_id"] = r.session_id;
    return out;
}

bool logs_equivalent(std::span<const SessionEvent> x, std::span<const SessionEvent> y, std::string* why) {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    if (x.size() != y.size()) return fail("lengths differ: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        json px = x[i].payload, py = y[i].payload;
        if (x[i].kind == EventKind::session_completed) {
            px.erase("duration_ms");
            py.erase("duration_ms");
        }
        if (x[i].seq != y[i].seq || x[i].turn != y[i].turn || x[i].actor != y[i].actor || x[i].kind != y[i].kind ||
            px != py) {
            return fail("first difference at seq " + std::to_string(x[i].seq) + ": " + to_json(x[i]).dump() + " vs " +
                        to_json(y[i]).dump());
        }
    }
    return true;
}

namespace {

std::vector<Participant> sim_participants(const Library& lib) {
    return {{Side::a, lib.languages().side_a, "A"}, {Side::b, lib.languages().side_b, "B"}};
}

// Deterministic stand-in for wall time in in-process runs.
Clock synthetic_clock() {
    auto t = std::make_shared<std::int64_t>(1'700'000'000'000);
    return [t] { return *t += 1500; };
}

void finish_result(ScenarioResult& r, const std::shared_ptr<const Library>& library) {
    r.fired = fired_messages(r.log);
    try {
        auto replayed = replay(r.log, library);
        r.final_levels.clear();
        for (const auto& f : replayed.frames()) r.final_levels.push_back(f.escalation.current);
        r.checks.push_back({"replay", true, "log replays and verifies"});
    } catch (const Error& e) {
        r.checks.push_back({"replay", false, e.what()});
    }
}

std::vector<SessionEvent> drive_in_process(Agent& a, Agent& b, SessionConfig config,
                                           const std::shared_ptr<const Library>& library, const ScenarioOptions& opt) {
    const auto participants = sim_participants(*library);
    auto session = Session::create(config, library, participants, synthetic_clock());
    for (std::size_t step = 0; !session.completed(); ++step) {
        if (step >= opt.max_steps) throw Error(ErrorCode::invalid_config, "scenario exceeded the step limit");
        const Side side = session.active_side();
        auto view = render_view(session, library->languages()[side]);
        Agent& agent = side == Side::a ? a : b;
        session.apply_action(side, action_from_json(agent.next_action(view)));
    }
    return session.events();
}

struct NetClient {
    std::unique_ptr<WsClient> ws;
    ClientView view;

    // Folds incoming messages until `done` holds; returns the message that
    // satisfied it (if it was an ack or error).
    json pump(const std::function<bool(const json&)>& done) {
        for (;;) {
            auto msg = ws->receive_or_throw(std::chrono::seconds(20));
            const auto type = msg.value("type", std::string());
            if (type == "snapshot") {
                view.apply_snapshot(msg.at("payload").at("view"));
            } else if (view.apply(msg) == ClientView::Applied::gap) {
                ws->send({{"type", "snapshot"}, {"payload", json::object()}});
            }
            if (done(msg)) return msg;
        }
    }
};

std::vector<SessionEvent> drive_networked(Agent& a, Agent& b, const SessionConfig& config, const Endpoint& ep,
                                          std::string& session_id) {
    auto created = http_request(ep.host, ep.port, "POST", "/sessions", json{{"config", to_json(config)}}.dump());
    if (created.status != 201) throw Error(ErrorCode::transport_error, "session creation failed: " + created.body);
    const auto info = json::parse(created.body);
    session_id = info.at("session_id").get<std::string>();

    NetClient clients[2];
    for (Side side : {Side::a, Side::b}) {
        auto& c = clients[side == Side::a ? 0 : 1];
        const auto token = info.at("tokens").at(std::string(to_string(side))).get<std::string>();
        c.ws = std::make_unique<WsClient>(ep.host, ep.port, "/sessions/" + session_id + "/ws?token=" + token);
        c.pump([](const json& m) { return m.value("type", std::string()) == "snapshot"; });
    }

    for (std::uint64_t request = 1;; ++request) {
        const auto& view = clients[0].view.view();
        if (view.at("completed").get<bool>()) break;
        const Side side = side_from_string(view.at("active").get<std::string>());
        auto& actor = clients[side == Side::a ? 0 : 1];
        auto& other = clients[side == Side::a ? 1 : 0];
        Agent& agent = side == Side::a ? a : b;

        actor.ws->send({{"type", "action"}, {"payload", {{"request_id", request}, {"action", agent.next_action(actor.view.view())}}}});
        auto reply = actor.pump([&](const json& m) {
            const auto type = m.value("type", std::string());
            return (type == "ack" || type == "error") && m.at("payload").value("request_id", json()) == json(request);
        });
        if (reply.at("type") == "error") {
            throw Error(error_code_from_name(reply["payload"].value("code", std::string())).value_or(ErrorCode::transport_error),
                        reply["payload"].value("message", std::string("action rejected")));
        }
        const auto last = reply.at("payload").at("last_seq").get<std::uint64_t>();
        if (actor.view.seq() < last) actor.pump([&](const json&) { return actor.view.seq() >= last; });
        if (other.view.seq() < last) other.pump([&](const json&) { return other.view.seq() >= last; });
    }

    auto res = http_request(ep.host, ep.port, "GET", "/sessions/" + session_id + "/log");
    if (res.status != 200) throw Error(ErrorCode::transport_error, "log export failed: " + res.body);
    return decode_log(res.body).events;
}

}  // namespace

ScenarioResult run_scenario(const AgentPolicy& pa, const AgentPolicy& pb, SessionConfig config, std::uint64_t seed,
                            std::shared_ptr<const Library> library, const ScenarioOptions& options) {
    if (!library) throw Error(ErrorCode::invalid_config, "scenario needs a library");
    config.seed = seed;
    if (!config.max_turns) config.max_turns = options.turns;
    config.validate();

    ScenarioResult result;
    {
        Agent a(Side::a, pa, seed, library), b(Side::b, pb, seed, library);
        result.log = drive_in_process(a, b, config, library, options);
    }

    if (options.transport == Transport::networked) {
        std::unique_ptr<SyncService> service;
        std::unique_ptr<HttpServer> server;
        Endpoint ep;
        if (options.endpoint) {
            ep = *options.endpoint;
        } else {
            ServiceConfig sc;
            sc.session_defaults = config;
            service = std::make_unique<SyncService>(sc, library);
            server = std::make_unique<HttpServer>(*service, "127.0.0.1", 0, 1);
            server->start();
            ep = {"127.0.0.1", server->port()};
        }
        Agent a(Side::a, pa, seed, library), b(Side::b, pb, seed, library);
        const auto reference = result.log;
        result.log = drive_networked(a, b, config, ep, result.session_id);
        std::string why;
        const bool same = logs_equivalent(reference, result.log, &why);
        result.checks.push_back({"transport_equivalence", same, same ? "networked log equals in-process log" : why});
        if (server) server->stop();
    }

    finish_result(result, library);
    return result;
}

SweepGrid sweep_grid_from_json(const json& doc) {
    SweepGrid g;
    auto reals = [&](const char* key, std::vector<double>& out) {
        if (doc.contains(key)) out = doc[key].get<std::vector<double>>();
        if (out.empty()) throw Error(ErrorCode::invalid_config, std::string("grid axis ") + key + " is empty");
    };
    try {
        reals("gamma", g.gamma);
        reals("lambda", g.lambda);
        reals("foster_threshold", g.foster_threshold);
        reals("deescalate_threshold", g.deescalate_threshold);
        if (doc.contains("seeds")) g.seeds = doc["seeds"].get<std::vector<std::uint64_t>>();
        if (g.seeds.empty()) throw Error(ErrorCode::invalid_config, "grid needs at least one seed");
        if (doc.contains("a")) g.a = policy_from_json(doc["a"]);
        if (doc.contains("b")) g.b = policy_from_json(doc["b"]);
        if (doc.contains("config")) g.base = session_config_from_json(doc["config"]);
        g.turns = doc.value("turns", g.turns);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_config, std::string("grid: ") + e.what());
    }
    return g;
}

std::vector<SweepRow> sweep(const SweepGrid& grid, std::shared_ptr<const Library> library, int parallel) {
    std::vector<SweepRow> rows;
    for (double g : grid.gamma)
        for (double l : grid.lambda)
            for (double ft : grid.foster_threshold)
                for (double dt : grid.deescalate_threshold)
                    for (auto seed : grid.seeds) rows.push_back({g, l, ft, dt, seed, {}, {}, 0.0, 0.0});

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < rows.size();) {
            try {
                auto& row = rows[i];
                SessionConfig cfg = grid.base;
                cfg.engine.gamma = row.gamma;
                cfg.engine.lambda = row.lambda;
                cfg.rules.foster_threshold = row.foster_threshold;
                cfg.rules.deescalate_threshold = row.deescalate_threshold;
                ScenarioOptions opt;
                opt.turns = grid.turns;
                auto result = run_scenario(grid.a, grid.b, cfg, row.seed, library, opt);
                for (const auto& f : result.fired) {
                    const auto k = static_cast<std::size_t>(f.kind);
                    ++row.count[k];
                    if (!row.first_turn[k]) row.first_turn[k] = f.turn;
                }
                for (const auto& pt : escalation_trajectory(result.log)) row.peak_level = std::max(row.peak_level, pt.level);
                for (const auto& ev : result.log) {
                    if (ev.kind != EventKind::frame_created) continue;
                    const auto& init = ev.payload.at("initial");
                    row.peak_initial = std::max({row.peak_initial, init.at("side_a").get<double>(),
                                                 init.at("side_b").get<double>()});
                }
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    const int n = std::max(1, parallel);
    std::vector<std::thread> threads;
    for (int i = 1; i < n; ++i) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);
    return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
    std::ostringstream out;
    out.precision(17);
    out << "gamma,lambda,foster_threshold,deescalate_threshold,seed";
    for (std::size_t k = 0; k < kMessageKindCount; ++k) {
        const auto name = to_string(static_cast<MessageKind>(k));
        out << ",first_turn_" << name << ",count_" << name;
    }
    out << ",peak_level,peak_initial\n";
    for (const auto& r : rows) {
        out << r.gamma << ',' << r.lambda << ',' << r.foster_threshold << ',' << r.deescalate_threshold << ',' << r.seed;
        for (std::size_t k = 0; k < kMessageKindCount; ++k) {
            out << ',';
            if (r.first_turn[k]) out << *r.first_turn[k];
            out << ',' << r.count[k];
        }
        out << ',' << r.peak_level << ',' << r.peak_initial << '\n';
    }
    return out.str();
}

}  // namespace communics
