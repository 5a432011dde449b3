#include <doctest.h>

#include "communics/mediator.hpp"
#include "oracles.hpp"

using namespace communics;

namespace {

const RuleConfig kCfg{};

MediatorSnapshot snap_at(int turn, std::vector<double> frame_levels = {}) {
    MediatorSnapshot s;
    s.turn = turn;
    s.completed_turns = turn - 1;
    s.frame_levels = std::move(frame_levels);
    s.story_level = s.frame_levels.empty() ? 0.0 : s.frame_levels.back();
    return s;
}

MediatorState sent(MessageKind k, int last_turn, int now) {
    MediatorState st;
    st.turn = now;
    st[k].last_sent_turn = last_turn;
    st[k].sent_this_turn = last_turn == now;
    return st;
}

// Streak after a run of end-of-turn story levels.
int streak_after(const std::vector<double>& levels) {
    int streak = 0;
    int turn = 1;
    for (double l : levels) {
        auto s = snap_at(turn++, {l});
        s.turn_end = true;
        streak = advance_deescalation_streak(streak, s, kCfg);
    }
    return streak;
}

}  // namespace

TEST_CASE("defaults are the published parameter values") {
    CHECK(kCfg.foster_threshold == 0.3);
    CHECK(kCfg.deescalate_threshold == 1.0);
    CHECK(kCfg.asymmetry_fraction == 0.66);
    CHECK(kCfg.asymmetry_min_actions == 9);
    CHECK(kCfg.warmup_turns == 4);
    CHECK(kCfg.escalation_window_first == 3);
    CHECK(kCfg.escalation_window_last == 10);
    CHECK(kCfg.deescalation_min_turn == 8);
    CHECK(kCfg.resend_cooldown_turns == 2);
    CHECK(kCfg.viewpoint_window == 4);
    CHECK(kCfg.viewpoint_dominance == 0.75);
}

TEST_CASE("rule config validation and json round trip") {
    CHECK_NOTHROW(kCfg.validate());
    RuleConfig bad = kCfg;
    bad.asymmetry_fraction = 0.4;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = kCfg;
    bad.escalation_window_first = 11;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = kCfg;
    bad.foster_threshold = -0.1;
    CHECK_THROWS_AS(bad.validate(), Error);

    RuleConfig custom = kCfg;
    custom.foster_threshold = 0.45;
    custom.escalation_window_last = 12;
    custom.foster_direction = FosterDirection::below;
    CHECK(to_json(rule_config_from_json(to_json(custom))) == to_json(custom));
    CHECK(rule_config_from_json(nlohmann::json{{"warmup_turns", 2}}).warmup_turns == 2);
}

TEST_CASE("foster-escalation rule") {
    MediatorState st;
    auto s = snap_at(6, {0.4, 0.35, 0.1});
    s.completed_turns = 5;
    CHECK(check_foster_escalation(s, kCfg, st).has_value());

    s.frame_levels = {0.4, 0.1};
    CHECK_FALSE(check_foster_escalation(s, kCfg, st).has_value());

    auto early = snap_at(3, {0.9, 0.9});
    early.completed_turns = 2;
    CHECK_FALSE(check_foster_escalation(early, kCfg, st).has_value());

    // Exactly at the threshold is not above it.
    s.frame_levels = {0.3, 0.3, 0.3};
    CHECK_FALSE(check_foster_escalation(s, kCfg, st).has_value());

    // Completed turns must exceed the warm-up, not equal it.
    s.frame_levels = {0.5, 0.5};
    s.completed_turns = 4;
    CHECK_FALSE(check_foster_escalation(s, kCfg, st).has_value());

    RuleConfig flat = kCfg;
    flat.foster_direction = FosterDirection::below;
    s.completed_turns = 5;
    s.frame_levels = {0.1, 0.1};
    CHECK(check_foster_escalation(s, flat, st).has_value());
}

TEST_CASE("de-escalation streak counts consecutive end-of-turn observations") {
    CHECK(streak_after({1.2, 1.1}) == 2);
    CHECK(streak_after({1.2, 0.8, 1.2}) == 1);
    CHECK(streak_after({1.0, 1.0}) == 0);

    // Mid-turn snapshots never move the streak.
    auto mid = snap_at(5, {3.0});
    CHECK(advance_deescalation_streak(1, mid, kCfg) == 1);
}

TEST_CASE("de-escalation fires at turn 10 after 1.2 then 1.1 at turns 9 and 10") {
    auto lib = oracle::mini_library();
    MediatorState st;
    st.escalation_observed = true;
    int fired_at = 0;
    const std::vector<std::pair<int, double>> levels{{8, 0.5}, {9, 1.2}, {10, 1.1}};
    for (auto [turn, level] : levels) {
        auto s = snap_at(turn, {level});
        s.turn_end = true;
        s.escalation_observed = true;
        auto r = evaluate(s, kCfg, st, *lib);
        st = r.state;
        for (const auto& m : r.messages)
            if (m.kind == MessageKind::initiate_deescalation) fired_at = turn;
    }
    CHECK(fired_at == 10);
}

TEST_CASE("de-escalation at turns 6 and 7 is suppressed by the gate") {
    auto lib = oracle::mini_library();
    MediatorState st;
    bool fired = false;
    for (auto [turn, level] : std::vector<std::pair<int, double>>{{6, 1.2}, {7, 1.1}}) {
        auto s = snap_at(turn, {level});
        s.turn_end = true;
        s.escalation_observed = true;
        auto r = evaluate(s, kCfg, st, *lib);
        st = r.state;
        for (const auto& m : r.messages) fired = fired || m.kind == MessageKind::initiate_deescalation;
    }
    CHECK(st.deescalation_streak == 2);
    CHECK_FALSE(fired);
}

TEST_CASE("de-escalation needs an observed escalation") {
    MediatorState st;
    st.deescalation_streak = 3;
    auto s = snap_at(9, {1.5});
    s.turn_end = true;
    CHECK_FALSE(check_initiate_deescalation(s, kCfg, st).has_value());
    st.escalation_observed = true;
    CHECK(check_initiate_deescalation(s, kCfg, st).has_value());
}

TEST_CASE("viewpoint rule") {
    MediatorState st;
    auto s = snap_at(5);
    SUBCASE("four negative bubbles on one character") {
        s.attributed.a = {{"x", 1}, {"x", 1}, {"x", 1}, {"x", 1}};
        auto c = check_viewpoint(s, kCfg, st);
        REQUIRE(c.has_value());
        CHECK(c->addressee == Addressee::side_a);
    }
    SUBCASE("split two and two") {
        s.attributed.a = {{"x", 1}, {"x", 1}, {"y", 1}, {"y", 1}};
        CHECK_FALSE(check_viewpoint(s, kCfg, st).has_value());
    }
    SUBCASE("mixed signs on one character") {
        s.attributed.b = {{"x", 1}, {"x", -1}, {"x", 1}, {"x", -1}};
        CHECK_FALSE(check_viewpoint(s, kCfg, st).has_value());
    }
    SUBCASE("window not filled") {
        s.attributed.a = {{"x", 1}, {"x", 1}, {"x", 1}};
        CHECK_FALSE(check_viewpoint(s, kCfg, st).has_value());
    }
    SUBCASE("three of the last four is enough; older entries are ignored") {
        s.attributed.b = {{"y", -1}, {"y", -1}, {"z", 1}, {"x", -1}, {"x", -1}, {"x", -1}};
        auto c = check_viewpoint(s, kCfg, st);
        REQUIRE(c.has_value());
        CHECK(c->addressee == Addressee::side_b);
    }
}

TEST_CASE("balance rule addresses the less prolific participant") {
    MediatorState st;
    auto s = snap_at(5);
    s.action_counts = {7, 3};
    auto c = check_balance(s, kCfg, st);
    REQUIRE(c.has_value());
    CHECK(c->addressee == Addressee::side_b);

    s.action_counts = {3, 7};
    REQUIRE(check_balance(s, kCfg, st).has_value());
    CHECK(check_balance(s, kCfg, st)->addressee == Addressee::side_a);

    s.action_counts = {6, 4};
    CHECK_FALSE(check_balance(s, kCfg, st).has_value());
    s.action_counts = {5, 5};
    CHECK_FALSE(check_balance(s, kCfg, st).has_value());
    s.action_counts = {6, 0};  // below the minimum action count
    CHECK_FALSE(check_balance(s, kCfg, st).has_value());
    s.action_counts = {6, 3};  // 0.667 > 0.66
    CHECK(check_balance(s, kCfg, st).has_value());
}

TEST_CASE("gate") {
    MediatorState fresh;
    CHECK_FALSE(gate(MessageKind::foster_escalation, fresh, 2, kCfg));
    CHECK(gate(MessageKind::foster_escalation, fresh, 3, kCfg));
    CHECK(gate(MessageKind::foster_escalation, fresh, 10, kCfg));
    CHECK_FALSE(gate(MessageKind::foster_escalation, fresh, 11, kCfg));
    CHECK_FALSE(gate(MessageKind::initiate_deescalation, fresh, 7, kCfg));
    CHECK(gate(MessageKind::initiate_deescalation, fresh, 8, kCfg));
    CHECK(gate(MessageKind::balance, fresh, 1, kCfg));

    CHECK_FALSE(gate(MessageKind::initiate_deescalation, sent(MessageKind::initiate_deescalation, 8, 9), 9, kCfg));
    CHECK(gate(MessageKind::initiate_deescalation, sent(MessageKind::initiate_deescalation, 8, 10), 10, kCfg));
    CHECK_FALSE(gate(MessageKind::balance, sent(MessageKind::balance, 4, 4), 4, kCfg));

    RuleConfig late_viewpoint = kCfg;
    late_viewpoint.viewpoint_gate = ViewpointGate::deescalation_window;
    CHECK(gate(MessageKind::viewpoint, fresh, 4, kCfg));
    CHECK_FALSE(gate(MessageKind::viewpoint, fresh, 4, late_viewpoint));
    CHECK(gate(MessageKind::viewpoint, fresh, 12, late_viewpoint));
}

TEST_CASE("variant selection is round-robin") {
    auto lib = oracle::mini_library();
    KindState h;
    CHECK(select_variant(MessageKind::initiate_deescalation, *lib, h).variant_id == "d1");
    CHECK(select_variant(MessageKind::initiate_deescalation, *lib, h).variant_id == "d1");

    KindState f;
    std::string prev;
    for (int i = 0; i < 4; ++i) {
        const auto id = select_variant(MessageKind::foster_escalation, *lib, f).variant_id;
        CHECK(id != prev);
        prev = id;
    }
    KindState again;
    for (int i = 0; i < 4; ++i) (void)select_variant(MessageKind::foster_escalation, *lib, again);
    CHECK(again == f);

    auto empty = load_library(oracle::fixture("empty_library.json"));
    KindState none;
    CHECK_THROWS_AS(select_variant(MessageKind::balance, empty, none), Error);
}

TEST_CASE("evaluate: fixed order, one message per kind, nothing on turn 1") {
    auto lib = oracle::mini_library();
    auto first = snap_at(1, {2.0, 2.0});
    first.completed_turns = 0;
    first.action_counts = {9, 0};
    first.escalation_observed = true;
    // Balance is not turn-gated, so it is the only thing that can fire at turn 1.
    auto r1 = evaluate(first, kCfg, {}, *lib);
    REQUIRE(r1.messages.size() == 1);
    CHECK(r1.messages[0].kind == MessageKind::balance);
    first.action_counts = {1, 0};
    CHECK(evaluate(first, kCfg, {}, *lib).messages.empty());

    MediatorState st;
    st.escalation_observed = true;
    st.deescalation_streak = 1;
    auto s = snap_at(9, {1.5, 1.5});
    s.completed_turns = 8;
    s.turn_end = true;
    s.action_counts = {10, 2};
    s.attributed.a = {{"x", 1}, {"x", 1}, {"x", 1}, {"x", 1}};
    auto r = evaluate(s, kCfg, st, *lib);
    REQUIRE(r.messages.size() == 4);
    CHECK(r.messages[0].kind == MessageKind::initiate_deescalation);
    CHECK(r.messages[1].kind == MessageKind::foster_escalation);
    CHECK(r.messages[2].kind == MessageKind::viewpoint);
    CHECK(r.messages[3].kind == MessageKind::balance);
    CHECK(r.messages[3].addressee == Addressee::side_b);
    CHECK(r.messages[0].text.at("en") == "How could it end?");
    CHECK(r.messages[0].text.at("de") == "Wie koennte es enden?");

    // Same turn again: everything already sent this turn.
    s.turn_end = false;
    CHECK(evaluate(s, kCfg, r.state, *lib).messages.empty());

    // Pure: same inputs, same outputs.
    auto r2 = evaluate(s, kCfg, st, *lib);
    s.turn_end = true;
    auto r3 = evaluate(s, kCfg, st, *lib);
    auto r4 = evaluate(s, kCfg, st, *lib);
    CHECK(r3.state == r4.state);
    CHECK(r3.messages.size() == r4.messages.size());
    (void)r2;
}
