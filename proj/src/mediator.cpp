#include "communics/mediator.hpp"

#include <algorithm>
#include <map>

namespace communics {

using nlohmann::json;

void RuleConfig::validate() const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::invalid_config, "rule config: " + what); };
    if (foster_threshold < 0.0 || deescalate_threshold < 0.0) fail("thresholds must be >= 0");
    if (!(asymmetry_fraction > 0.5 && asymmetry_fraction < 1.0)) fail("asymmetry_fraction must lie in (0.5, 1)");
    if (asymmetry_min_actions < 1) fail("asymmetry_min_actions must be >= 1");
    if (warmup_turns < 0) fail("warmup_turns must be >= 0");
    if (escalation_window_first > escalation_window_last) fail("escalation window bounds out of order");
    if (escalation_window_first < 1 || deescalation_min_turn < 1) fail("turn bounds start at 1");
    if (resend_cooldown_turns < 0) fail("resend_cooldown_turns must be >= 0");
    if (viewpoint_window < 1) fail("viewpoint_window must be >= 1");
    if (!(viewpoint_dominance > 0.0 && viewpoint_dominance <= 1.0)) fail("viewpoint_dominance must lie in (0, 1]");
}

json to_json(const RuleConfig& cfg) {
    return {{"foster_threshold", cfg.foster_threshold},
            {"deescalate_threshold", cfg.deescalate_threshold},
            {"asymmetry_fraction", cfg.asymmetry_fraction},
            {"asymmetry_min_actions", cfg.asymmetry_min_actions},
            {"warmup_turns", cfg.warmup_turns},
            {"escalation_window", {cfg.escalation_window_first, cfg.escalation_window_last}},
            {"deescalation_min_turn", cfg.deescalation_min_turn},
            {"resend_cooldown_turns", cfg.resend_cooldown_turns},
            {"viewpoint_window", cfg.viewpoint_window},
            {"viewpoint_dominance", cfg.viewpoint_dominance},
            {"foster_direction", cfg.foster_direction == FosterDirection::above ? "above" : "below"},
            {"viewpoint_gate",
             cfg.viewpoint_gate == ViewpointGate::escalation_window ? "escalation" : "deescalation"}};
}

RuleConfig rule_config_from_json(const json& doc, RuleConfig cfg) {
    if (doc.is_null()) return cfg;
    if (!doc.is_object()) throw Error(ErrorCode::invalid_config, "rule config must be an object");
    try {
        cfg.foster_threshold = doc.value("foster_threshold", cfg.foster_threshold);
        cfg.deescalate_threshold = doc.value("deescalate_threshold", cfg.deescalate_threshold);
        cfg.asymmetry_fraction = doc.value("asymmetry_fraction", cfg.asymmetry_fraction);
        cfg.asymmetry_min_actions = doc.value("asymmetry_min_actions", cfg.asymmetry_min_actions);
        cfg.warmup_turns = doc.value("warmup_turns", cfg.warmup_turns);
        if (doc.contains("escalation_window")) {
            const auto& w = doc["escalation_window"];
            if (!w.is_array() || w.size() != 2) throw Error(ErrorCode::invalid_config, "escalation_window must be [first, last]");
            cfg.escalation_window_first = w[0].get<int>();
            cfg.escalation_window_last = w[1].get<int>();
        }
        cfg.deescalation_min_turn = doc.value("deescalation_min_turn", cfg.deescalation_min_turn);
        cfg.resend_cooldown_turns = doc.value("resend_cooldown_turns", cfg.resend_cooldown_turns);
        cfg.viewpoint_window = doc.value("viewpoint_window", cfg.viewpoint_window);
        cfg.viewpoint_dominance = doc.value("viewpoint_dominance", cfg.viewpoint_dominance);
        if (doc.contains("foster_direction")) {
            auto d = doc["foster_direction"].get<std::string>();
            if (d != "above" && d != "below") throw Error(ErrorCode::invalid_config, "foster_direction: above|below");
            cfg.foster_direction = d == "above" ? FosterDirection::above : FosterDirection::below;
        }
        if (doc.contains("viewpoint_gate")) {
            auto g = doc["viewpoint_gate"].get<std::string>();
            if (g != "escalation" && g != "deescalation") {
                throw Error(ErrorCode::invalid_config, "viewpoint_gate: escalation|deescalation");
            }
            cfg.viewpoint_gate =
                g == "escalation" ? ViewpointGate::escalation_window : ViewpointGate::deescalation_window;
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_config, std::string("rule config: ") + e.what());
    }
    return cfg;
}

std::string_view to_string(Addressee a) noexcept {
    switch (a) {
        case Addressee::both: return "both";
        case Addressee::side_a: return "side_a";
        case Addressee::side_b: return "side_b";
    }
    return "both";
}

Addressee addressee_from_string(std::string_view text) {
    if (text == "both") return Addressee::both;
    if (text == "side_a") return Addressee::side_a;
    if (text == "side_b") return Addressee::side_b;
    throw Error(ErrorCode::parse_error, "unknown addressee '" + std::string(text) + "'");
}

json to_json(const MediatorState& state) {
    json kinds = json::object();
    for (std::size_t i = 0; i < kMessageKindCount; ++i) {
        const auto& ks = state.kinds[i];
        kinds[std::string(to_string(static_cast<MessageKind>(i)))] = {
            {"last_sent_turn", ks.last_sent_turn ? json(*ks.last_sent_turn) : json(nullptr)},
            {"sent_this_turn", ks.sent_this_turn},
            {"variants_sent", ks.variants_sent}};
    }
    return {{"turn", state.turn},
            {"kinds", kinds},
            {"deescalation_streak", state.deescalation_streak},
            {"escalation_observed", state.escalation_observed}};
}

namespace {

json base_trigger(std::string_view rule, const MediatorSnapshot& snap) {
    return {{"rule", rule},
            {"turn", snap.turn},
            {"completed_turns", snap.completed_turns},
            {"turn_end", snap.turn_end},
            {"story_level", snap.story_level},
            {"action_counts", {{"side_a", snap.action_counts.a}, {"side_b", snap.action_counts.b}}}};
}

bool is_escalation_gated(MessageKind kind, const RuleConfig& cfg) {
    return kind == MessageKind::foster_escalation ||
           (kind == MessageKind::viewpoint && cfg.viewpoint_gate == ViewpointGate::escalation_window);
}

bool is_deescalation_gated(MessageKind kind, const RuleConfig& cfg) {
    return kind == MessageKind::initiate_deescalation ||
           (kind == MessageKind::viewpoint && cfg.viewpoint_gate == ViewpointGate::deescalation_window);
}

}  // namespace

std::optional<Candidate> check_foster_escalation(const MediatorSnapshot& snap, const RuleConfig& cfg,
                                                 const MediatorState&) {
    if (snap.completed_turns <= cfg.warmup_turns) return std::nullopt;
    const auto above = std::count_if(snap.frame_levels.begin(), snap.frame_levels.end(),
                                     [&](double level) { return level > cfg.foster_threshold; });
    const bool fires = cfg.foster_direction == FosterDirection::above ? above >= 2 : above < 2;
    if (!fires) return std::nullopt;
    auto trigger = base_trigger("foster_escalation", snap);
    trigger["frames_above"] = above;
    return Candidate{MessageKind::foster_escalation, Addressee::both, std::move(trigger)};
}

int advance_deescalation_streak(int streak, const MediatorSnapshot& snap, const RuleConfig& cfg) noexcept {
    if (!snap.turn_end) return streak;
    return snap.story_level > cfg.deescalate_threshold ? streak + 1 : 0;
}

std::optional<Candidate> check_initiate_deescalation(const MediatorSnapshot& snap, const RuleConfig&,
                                                     const MediatorState& state) {
    if (!snap.turn_end || state.deescalation_streak < 2 || !state.escalation_observed) return std::nullopt;
    auto trigger = base_trigger("initiate_deescalation", snap);
    trigger["streak"] = state.deescalation_streak;
    return Candidate{MessageKind::initiate_deescalation, Addressee::both, std::move(trigger)};
}

std::optional<Candidate> check_viewpoint(const MediatorSnapshot& snap, const RuleConfig& cfg, const MediatorState&) {
    const auto window = static_cast<std::size_t>(cfg.viewpoint_window);
    for (Side side : {Side::a, Side::b}) {
        const auto& history = snap.attributed[side];
        if (history.size() < window) continue;

        std::map<std::pair<std::string, int>, int> counts;
        for (auto it = history.end() - static_cast<std::ptrdiff_t>(window); it != history.end(); ++it) {
            ++counts[{it->figure, it->sign}];
        }
        auto best = std::max_element(counts.begin(), counts.end(),
                                     [](const auto& l, const auto& r) { return l.second < r.second; });
        const double share = static_cast<double>(best->second) / static_cast<double>(window);
        if (share < cfg.viewpoint_dominance) continue;

        auto trigger = base_trigger("viewpoint", snap);
        trigger["participant"] = to_string(side);
        trigger["figure"] = best->first.first;
        trigger["sign"] = best->first.second;
        trigger["share"] = share;
        return Candidate{MessageKind::viewpoint, addressee_for(side), std::move(trigger)};
    }
    return std::nullopt;
}

std::optional<Candidate> check_balance(const MediatorSnapshot& snap, const RuleConfig& cfg, const MediatorState&) {
    const int total = snap.action_counts.a + snap.action_counts.b;
    if (total < cfg.asymmetry_min_actions) return std::nullopt;
    const Side prolific = snap.action_counts.a >= snap.action_counts.b ? Side::a : Side::b;
    const double share = static_cast<double>(snap.action_counts[prolific]) / static_cast<double>(total);
    if (!(share > cfg.asymmetry_fraction)) return std::nullopt;
    auto trigger = base_trigger("balance", snap);
    trigger["share"] = share;
    trigger["prolific"] = to_string(prolific);
    return Candidate{MessageKind::balance, addressee_for(other(prolific)), std::move(trigger)};
}

bool gate(MessageKind kind, const MediatorState& state, int current_turn, const RuleConfig& cfg) noexcept {
    const auto& ks = state[kind];
    if (ks.sent_this_turn && state.turn == current_turn) return false;
    if (ks.last_sent_turn && current_turn - *ks.last_sent_turn < cfg.resend_cooldown_turns) return false;
    if (is_escalation_gated(kind, cfg) &&
        (current_turn < cfg.escalation_window_first || current_turn > cfg.escalation_window_last)) {
        return false;
    }
    if (is_deescalation_gated(kind, cfg) && current_turn < cfg.deescalation_min_turn) return false;
    return true;
}

const MessageTemplate& select_variant(MessageKind kind, const Library& lib, KindState& history) {
    const auto variants = lib.templates_of(kind);
    if (variants.empty()) {
        throw Error(ErrorCode::validation_error, "library has no message variant of kind " + std::string(to_string(kind)));
    }
    const MessageTemplate& chosen = *variants[history.variants_sent % variants.size()];
    ++history.variants_sent;
    history.last_variant = chosen.variant_id;
    return chosen;
}

Evaluation evaluate(const MediatorSnapshot& snap, const RuleConfig& cfg, MediatorState state, const Library& lib) {
    if (snap.turn != state.turn) {
        for (auto& ks : state.kinds) ks.sent_this_turn = false;
        state.turn = snap.turn;
    }
    state.escalation_observed = state.escalation_observed || snap.escalation_observed;
    state.deescalation_streak = advance_deescalation_streak(state.deescalation_streak, snap, cfg);

    Evaluation out;
    auto emit = [&](std::optional<Candidate> candidate) {
        if (!candidate || !gate(candidate->kind, state, snap.turn, cfg)) return;
        auto& ks = state[candidate->kind];
        const auto& tpl = select_variant(candidate->kind, lib, ks);
        ks.last_sent_turn = snap.turn;
        ks.sent_this_turn = true;
        out.messages.push_back(
            {candidate->kind, tpl.variant_id, candidate->addressee, tpl.text, std::move(candidate->trigger)});
    };

    emit(check_initiate_deescalation(snap, cfg, state));
    emit(check_foster_escalation(snap, cfg, state));
    emit(check_viewpoint(snap, cfg, state));
    emit(check_balance(snap, cfg, state));

    out.state = std::move(state);
    return out;
}

}  // namespace communics
