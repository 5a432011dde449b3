#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <sstream>

#include <boost/multiprecision/cpp_bin_float.hpp>

namespace oracle {

using namespace communics;
using nlohmann::json;

std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(COMMUNICS_TEST_FIXTURES) / name; }

std::filesystem::path reference_library_path() {
    return std::filesystem::path(COMMUNICS_DATA_DIR) / "reference_library.json";
}

std::shared_ptr<const Library> mini_library() {
    static auto lib = std::make_shared<const Library>(load_library(fixture("mini_library.json")));
    return lib;
}

std::shared_ptr<const Library> reference_library() {
    static auto lib = std::make_shared<const Library>(load_library(reference_library_path()));
    return lib;
}

long double brute_initial(const std::vector<long double>& levels, long double gamma) {
    const std::size_t n = levels.size();
    long double sum = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
        long double w = 1.0L;
        for (std::size_t k = 0; k < n - 1 - i; ++k) w *= gamma;
        sum += levels[i] * w;
    }
    return sum;
}

double hp_impact(int s, double e, double lambda) {
    using big = boost::multiprecision::cpp_bin_float_50;
    big v = big(s) - big(lambda) * boost::multiprecision::tanh(big(e));
    return v.convert_to<double>();
}

long double fold_level(long double initial, const std::vector<int>& sentiments, long double lambda) {
    long double e = initial;
    for (int s : sentiments) e += static_cast<long double>(s) - lambda * std::tanh(e);
    return e;
}

double level_error(double logged, long double expected) {
    const long double diff = std::fabs(static_cast<long double>(logged) - expected);
    return static_cast<double>(diff / std::max(1.0L, std::fabs(expected)));
}

namespace {

const char* const kKinds[] = {"FOSTER_ESCALATION", "INITIATE_DEESCALATION", "VIEWPOINT", "BALANCE"};

int kind_index(const std::string& k) {
    for (int i = 0; i < 4; ++i)
        if (k == kKinds[i]) return i;
    return -1;
}

struct Rules {
    double foster = 0.3, deesc = 1.0, asym = 0.66;
    int asym_min = 9, warmup = 4, win_first = 3, win_last = 10, deesc_min = 8, cooldown = 2, vp_window = 4;
    double vp_dom = 0.75;
    bool foster_above = true;
    bool vp_escalation_gate = true;
};

Rules rules_from(const json& cfg) {
    Rules r;
    const json& j = cfg.contains("rules") ? cfg["rules"] : json::object();
    r.foster = j.value("foster_threshold", r.foster);
    r.deesc = j.value("deescalate_threshold", r.deesc);
    r.asym = j.value("asymmetry_fraction", r.asym);
    r.asym_min = j.value("asymmetry_min_actions", r.asym_min);
    r.warmup = j.value("warmup_turns", r.warmup);
    if (j.contains("escalation_window")) {
        r.win_first = j["escalation_window"][0].get<int>();
        r.win_last = j["escalation_window"][1].get<int>();
    }
    r.deesc_min = j.value("deescalation_min_turn", r.deesc_min);
    r.cooldown = j.value("resend_cooldown_turns", r.cooldown);
    r.vp_window = j.value("viewpoint_window", r.vp_window);
    r.vp_dom = j.value("viewpoint_dominance", r.vp_dom);
    r.foster_above = j.value("foster_direction", std::string("above")) == "above";
    r.vp_escalation_gate = j.value("viewpoint_gate", std::string("escalation")) == "escalation";
    return r;
}

struct OInsertion {
    std::uint64_t id;
    int s[2];
    bool alive = true;
};

struct OFrame {
    std::uint64_t id = 0;
    long double initial[2] = {0, 0};
    std::vector<OInsertion> ins;
    std::optional<std::string> figure[2];
    std::uint64_t character_element[2] = {0, 0};

    long double level(int side, long double lambda) const {
        std::vector<int> s;
        for (const auto& i : ins)
            if (i.alive) s.push_back(i.s[side]);
        return fold_level(initial[side], s, lambda);
    }
    long double max_level(long double lambda) const { return std::max(level(0, lambda), level(1, lambda)); }
};

int side_index(const std::string& s) { return s == "side_a" ? 0 : 1; }

}  // namespace

RuleReport replay_rules(const std::vector<SessionEvent>& log, const Library& lib) {
    RuleReport rep;
    if (log.empty()) {
        rep.mismatches.push_back("empty log");
        return rep;
    }
    const json first = to_json(log.front());
    const json& cfg = first["payload"]["config"];
    const long double gamma = cfg["engine"]["gamma"].get<double>();
    const long double lambda = cfg["engine"]["lambda"].get<double>();
    const bool automated = cfg.value("mode", std::string("automated")) == "automated";
    const bool assets = cfg.value("assets_contribute_escalation", false);
    const bool latest = cfg.value("story_level", std::string("latest_frame")) == "latest_frame";
    const Rules R = rules_from(cfg);

    std::vector<OFrame> frames;
    int counts[2] = {0, 0};
    std::vector<std::pair<std::string, int>> attributed[2];
    int completed = 0, streak = 0;
    bool observed = false;
    std::optional<int> last_sent[4];
    std::optional<int> sent_turn[4];
    std::size_t variant_count[4] = {0, 0, 0, 0};

    auto mismatch = [&](std::uint64_t seq, const std::string& what) {
        rep.mismatches.push_back("seq " + std::to_string(seq) + ": " + what);
    };
    auto check_level = [&](std::uint64_t seq, const json& logged, long double a, long double b, const char* what) {
        const double ea = level_error(logged["side_a"].get<double>(), a);
        const double eb = level_error(logged["side_b"].get<double>(), b);
        rep.max_level_error = std::max({rep.max_level_error, ea, eb});
        if (ea > 1e-12 || eb > 1e-12) mismatch(seq, std::string(what) + " differs from oracle");
    };
    auto frame_by_id = [&](std::uint64_t id) -> OFrame* {
        for (auto& f : frames)
            if (f.id == id) return &f;
        return nullptr;
    };
    auto story = [&]() -> long double {
        if (frames.empty()) return 0.0L;
        if (latest) return frames.back().max_level(lambda);
        long double best = -1e300L;
        for (int side = 0; side < 2; ++side) {
            std::vector<long double> lv;
            for (const auto& f : frames) lv.push_back(f.level(side, lambda));
            best = std::max(best, brute_initial(lv, gamma));
        }
        return best;
    };

    auto predict = [&](std::uint64_t seq, int turn, bool turn_end) {
        std::vector<PredictedMessage> out;
        for (const auto& f : frames)
            if (f.max_level(lambda) > R.foster) observed = true;
        if (turn_end) streak = story() > R.deesc ? streak + 1 : 0;

        auto allowed = [&](int k) {
            if (sent_turn[k] && *sent_turn[k] == turn) return false;
            if (last_sent[k] && turn - *last_sent[k] < R.cooldown) return false;
            const bool esc_gated = k == 0 || (k == 2 && R.vp_escalation_gate);
            const bool deesc_gated = k == 1 || (k == 2 && !R.vp_escalation_gate);
            if (esc_gated && (turn < R.win_first || turn > R.win_last)) return false;
            if (deesc_gated && turn < R.deesc_min) return false;
            return true;
        };
        auto fire = [&](int k, const std::string& addressee) {
            if (!allowed(k)) return;
            std::vector<std::string> variants;
            for (const auto& t : lib.message_templates())
                if (to_string(t.kind) == kKinds[k]) variants.push_back(t.variant_id);
            const std::string variant = variants.empty() ? "" : variants[variant_count[k] % variants.size()];
            ++variant_count[k];
            last_sent[k] = turn;
            sent_turn[k] = turn;
            out.push_back({seq, turn, kKinds[k], addressee, variant});
        };

        if (turn_end && streak >= 2 && observed) fire(1, "both");

        int above = 0;
        for (const auto& f : frames)
            if (f.max_level(lambda) > R.foster) ++above;
        if (completed > R.warmup && (R.foster_above ? above >= 2 : above < 2)) fire(0, "both");

        for (int side = 0; side < 2; ++side) {
            const auto& h = attributed[side];
            if (static_cast<int>(h.size()) < R.vp_window) continue;
            std::map<std::pair<std::string, int>, int> c;
            for (std::size_t i = h.size() - R.vp_window; i < h.size(); ++i) ++c[h[i]];
            int best = 0;
            for (const auto& [key, n] : c) best = std::max(best, n);
            if (static_cast<double>(best) / R.vp_window >= R.vp_dom) {
                fire(2, side == 0 ? "side_a" : "side_b");
                break;
            }
        }

        const int total = counts[0] + counts[1];
        if (total >= R.asym_min) {
            const int top = std::max(counts[0], counts[1]);
            if (static_cast<double>(top) / total > R.asym) fire(3, counts[0] >= counts[1] ? "side_b" : "side_a");
        }
        return out;
    };

    std::size_t i = 0;
    while (i < log.size()) {
        const json ev = to_json(log[i]);
        const std::string kind = ev["kind"];
        const std::uint64_t seq = ev["seq"];
        const int turn = ev["turn"];
        const json& p = ev["payload"];
        const std::string actor = ev["actor"];
        bool command = true;
        bool turn_end = false;

        if (kind == "frame_created") {
            OFrame f;
            f.id = p["frame_id"];
            for (int side = 0; side < 2; ++side) {
                std::vector<long double> prev;
                for (const auto& g : frames) prev.push_back(g.level(side, lambda));
                f.initial[side] = brute_initial(prev, gamma);
            }
            check_level(seq, p["initial"], f.initial[0], f.initial[1], "frame initial");
            if (assets) {
                const auto& bg = lib.background(p["background_id"].get<std::string>());
                const int annotated = bg.valence == Valence::negative ? -1 : bg.valence == Valence::positive ? 1 : 0;
                f.ins.push_back({0, {-annotated, -annotated}});
            }
            frames.push_back(f);
            check_level(seq, p["level"], frames.back().level(0, lambda), frames.back().level(1, lambda), "frame level");
            ++counts[side_index(actor)];
        } else if (kind == "character_placed") {
            auto* f = frame_by_id(p["frame_id"]);
            const int slot = p["slot"];
            f->figure[slot] = lib.character(p["character_id"].get<std::string>()).figure;
            f->character_element[slot] = p["element_id"];
        } else if (kind == "object_placed") {
            ++counts[side_index(actor)];
        } else if (kind == "expression_inserted") {
            auto* f = frame_by_id(p["frame_id"]);
            const auto& ex = lib.expression(p["expression_id"].get<std::string>());
            const int s[2] = {-ex.sentiment_a, -ex.sentiment_b};
            f->ins.push_back({p["element_id"], {s[0], s[1]}});
            check_level(seq, p["level"], f->level(0, lambda), f->level(1, lambda), "insertion level");
            const int me = side_index(actor);
            ++counts[me];
            if (p["bubble_kind"] == "dialog" && s[me] != 0) {
                attributed[me].push_back({*f->figure[p["slot"].get<int>()], s[me] > 0 ? 1 : -1});
            }
        } else if (kind == "element_deleted") {
            auto* f = frame_by_id(p["frame_id"]);
            const std::uint64_t el = p["element_id"];
            if (p["element"] == "bubble") {
                for (auto& in : f->ins)
                    if (in.id == el) in.alive = false;
            } else if (p["element"] == "character") {
                for (int slot = 0; slot < 2; ++slot)
                    if (f->character_element[slot] == el) f->figure[slot].reset();
            }
            check_level(seq, p["level"], f->level(0, lambda), f->level(1, lambda), "deletion level");
        } else if (kind == "turn_ended") {
            ++completed;
            turn_end = true;
            const long double st = story();
            if (level_error(p["story_level"].get<double>(), st) > 1e-12)
                mismatch(seq, "story level differs from oracle");
            if (static_cast<int>(rep.end_of_turn_story.size()) < turn) rep.end_of_turn_story.resize(turn, 0.0);
            rep.end_of_turn_story[turn - 1] = static_cast<double>(st);
        } else {
            command = false;
        }
        if (kind == "mediator_msg") mismatch(seq, "mediator message without a preceding command event");
        ++i;
        if (!command) continue;

        std::vector<PredictedMessage> predicted;
        if (automated) predicted = predict(seq, turn, turn_end);
        std::vector<PredictedMessage> logged;
        while (i < log.size() && log[i].kind == EventKind::mediator_msg) {
            const json m = to_json(log[i]);
            logged.push_back({seq, m["turn"].get<int>(), m["payload"]["kind"].get<std::string>(),
                              m["payload"]["addressee"].get<std::string>(),
                              m["payload"]["variant_id"].get<std::string>()});
            ++i;
        }
        if (predicted != logged) {
            std::ostringstream os;
            os << "oracle predicts " << predicted.size() << " message(s) [";
            for (const auto& m : predicted) os << ' ' << m.kind << '@' << m.turn << '/' << m.addressee << '/' << m.variant_id;
            os << " ], log has " << logged.size() << " [";
            for (const auto& m : logged) os << ' ' << m.kind << '@' << m.turn << '/' << m.addressee << '/' << m.variant_id;
            os << " ]";
            mismatch(seq, os.str());
        }
        rep.predicted.insert(rep.predicted.end(), predicted.begin(), predicted.end());
        rep.logged.insert(rep.logged.end(), logged.begin(), logged.end());
    }
    return rep;
}

std::vector<std::string> audit_gating(const std::vector<SessionEvent>& log) {
    std::vector<std::string> violations;
    std::map<std::string, int> last;
    for (const auto& e : log) {
        const json ev = to_json(e);
        if (ev["kind"] != "mediator_msg") continue;
        const std::string kind = ev["payload"]["kind"];
        const int turn = ev["turn"];
        const std::string where = kind + " at turn " + std::to_string(turn) + " (seq " + ev["seq"].dump() + ")";
        if (auto it = last.find(kind); it != last.end()) {
            if (it->second == turn) violations.push_back("duplicate " + where);
            else if (turn - it->second < 2) violations.push_back("resent within 2 turns: " + where);
        }
        if ((kind == "FOSTER_ESCALATION" || kind == "VIEWPOINT") && (turn < 3 || turn > 10))
            violations.push_back("escalation message outside turns 3-10: " + where);
        if (kind == "INITIATE_DEESCALATION" && turn < 8) violations.push_back("de-escalation before turn 8: " + where);
        last[kind] = turn;
    }
    return violations;
}

NaiveCounts naive_count(const std::vector<SessionEvent>& log) {
    NaiveCounts c;
    if (log.empty()) return c;
    for (const auto& e : log) {
        const json ev = to_json(e);
        const std::string k = ev["kind"];
        const std::string actor = ev["actor"];
        const bool counted = k == "frame_created" || k == "object_placed" || k == "expression_inserted";
        if (k == "turn_ended") ++c.turns;
        if (k == "expression_inserted") ++c.expressions;
        if (k == "frame_created") ++c.frames;
        if (k == "character_placed") ++c.characters;
        if (k == "object_placed") ++c.objects;
        if (k == "element_deleted") ++c.deletions;
        if (counted && actor == "side_a") ++c.actions_a;
        if (counted && actor == "side_b") ++c.actions_b;
        if (k == "mediator_msg") ++c.mediator[kind_index(ev["payload"]["kind"])];
        if (k == "human_mediator_msg") ++c.human;
    }
    c.duration_ms = log.back().timestamp_ms - log.front().timestamp_ms;
    return c;
}

std::vector<Participant> participants_for(const Library& lib) {
    return {{Side::a, lib.languages().side_a, "alpha"}, {Side::b, lib.languages().side_b, "beta"}};
}

Clock stepping_clock(std::int64_t start, std::int64_t step) {
    auto now = std::make_shared<std::int64_t>(start - step);
    return [now, step] { return *now += step; };
}

std::vector<SessionEvent> fuzz_session(std::shared_ptr<const Library> lib, std::uint64_t seed,
                                       const FuzzOptions& options) {
    std::mt19937_64 rng(seed * 0x9E3779B97F4A7C15ULL + 17);
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

    SessionConfig cfg;
    cfg.mode = options.mode;
    cfg.seed = seed;
    cfg.max_turns = options.max_turns;
    cfg.assets_contribute_escalation = options.assets_contribute_escalation;
    const auto parts = participants_for(*lib);
    Session session = Session::create(cfg, lib, parts, stepping_clock());

    // Per-side temperament: how often a turn ends and how hawkish the picks are.
    const double end_p[2] = {uniform(0.1, 0.5), uniform(0.1, 0.5)};
    const double hawk[2] = {uniform(0.0, 1.0), uniform(0.0, 1.0)};
    std::vector<std::string> escalating[2], all;
    for (const auto& ex : lib->expressions()) {
        all.push_back(ex.id);
        if (ex.sentiment_a < 0) escalating[0].push_back(ex.id);
        if (ex.sentiment_b < 0) escalating[1].push_back(ex.id);
    }

    while (session.events().size() < options.target_events && !session.completed()) {
        const Side me = session.active_side();
        const int mi = me == Side::a ? 0 : 1;
        const auto& frames = session.frames();
        const double r = uniform(0.0, 1.0);
        Action action;
        if (frames.empty() || r < 0.12) {
            action = CreateFrame{lib->backgrounds()[pick(lib->backgrounds().size())].id};
        } else {
            const Frame& f = frames[pick(frames.size())];
            if (r < 0.25) {
                action = PlaceCharacter{f.frame_id, lib->characters()[pick(lib->characters().size())].id, {}, {}, {},
                                        {uniform(0, 1), uniform(0, 1)}};
            } else if (r < 0.32) {
                action = PlaceObject{f.frame_id, lib->objects()[pick(lib->objects().size())].id,
                                     {uniform(0, 1), uniform(0, 1)}};
            } else if (r < 0.72) {
                const auto& pool = uniform(0, 1) < hawk[mi] && !escalating[mi].empty() ? escalating[mi] : all;
                InsertExpression ins{f.frame_id, pool[pick(pool.size())], {}, BubbleKind::narration,
                                     {uniform(0, 1), uniform(0, 1)}};
                std::vector<int> occupied;
                for (int s = 0; s < kCharacterSlots; ++s)
                    if (f.characters[s]) occupied.push_back(s);
                if (!occupied.empty() && uniform(0, 1) < 0.7) {
                    ins.bubble_kind = BubbleKind::dialog;
                    ins.slot = occupied[pick(occupied.size())];
                }
                action = ins;
            } else if (r < 0.80 && options.allow_deletes) {
                std::vector<std::uint64_t> ids;
                for (const auto& b : f.bubbles) ids.push_back(b.element_id);
                for (const auto& o : f.objects) ids.push_back(o.element_id);
                for (const auto& c : f.characters)
                    if (c) ids.push_back(c->element_id);
                if (ids.empty()) continue;
                action = DeleteElement{f.frame_id, ids[pick(ids.size())]};
            } else if (r < 0.80 + end_p[mi] * 0.2 / 0.5) {
                action = EndTurn{};
            } else {
                continue;
            }
        }
        try {
            session.apply_action(me, action);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::slot_full && e.code() != ErrorCode::invalid_action) throw;
        }
    }
    return session.events();
}

std::vector<ScriptStep> client_script(const std::vector<SessionEvent>& log) {
    std::vector<ScriptStep> out;
    for (const auto& ev : log) {
        const json e = to_json(ev);
        const auto kind = e["kind"].get<std::string>();
        const auto actor = e["actor"].get<std::string>();
        const json& p = e["payload"];
        json action;
        if (kind == "frame_created") {
            action = {{"kind", "create_frame"}, {"background_id", p["background_id"]}};
        } else if (kind == "character_placed") {
            action = {{"kind", "place_character"},     {"frame_id", p["frame_id"]},
                      {"character_id", p["character_id"]}, {"slot", p["slot"]},
                      {"posture", p["posture"]},           {"facial_expression", p["facial_expression"]},
                      {"position", p["position"]}};
        } else if (kind == "object_placed") {
            action = {{"kind", "place_object"},
                      {"frame_id", p["frame_id"]},
                      {"object_id", p["object_id"]},
                      {"position", p["position"]}};
        } else if (kind == "expression_inserted") {
            action = {{"kind", "insert_expression"},
                      {"frame_id", p["frame_id"]},
                      {"expression_id", p["expression_id"]},
                      {"bubble_kind", p["bubble_kind"]},
                      {"position", p["position"]}};
            if (!p["slot"].is_null()) action["slot"] = p["slot"];
        } else if (kind == "element_deleted") {
            action = {{"kind", "delete_element"}, {"frame_id", p["frame_id"]}, {"element_id", p["element_id"]}};
        } else if (kind == "turn_ended") {
            action = {{"kind", "end_turn"}};
        } else if (kind == "session_completed" && actor != "system") {
            action = {{"kind", "complete"}};
        } else if (kind == "human_mediator_msg") {
            out.push_back({"human_mediator", {{"type", "human_mediator_msg"}, {"payload", p}}});
            continue;
        } else {
            continue;
        }
        out.push_back({actor, {{"type", "action"}, {"payload", {{"action", action}}}}});
    }
    return out;
}

}  // namespace oracle
