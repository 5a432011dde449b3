#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <algorithm>

#include "communics/session_analytics.hpp"
#include "oracles.hpp"

using namespace communics;

namespace {

Session start(std::shared_ptr<const Library> lib, std::optional<int> max_turns = {}) {
    SessionConfig c;
    c.starting_side = Side::a;
    c.max_turns = max_turns;
    return Session::create(c, lib, oracle::participants_for(*lib), oracle::stepping_clock(1'000'000, 500));
}

void say(Session& s, const std::string& expr, std::optional<int> slot = {}) {
    const auto f = s.frames().back().frame_id;
    s.apply_action(s.active_side(), InsertExpression{f, expr, slot, slot ? BubbleKind::dialog : BubbleKind::narration, {}});
}

// 12 turns; side a makes 12 counted actions, side b 6.
std::vector<SessionEvent> twelve_turn_fixture() {
    auto s = start(oracle::mini_library(), 12);
    for (int t = 1; t <= 12; ++t) {
        const Side me = s.active_side();
        if (me == Side::a) {
            s.apply_action(me, CreateFrame{"bg_market"});
            say(s, "hello");
        } else if (t <= 6) {
            say(s, "rain");
        } else {
            s.apply_action(me, PlaceObject{s.frames().back().frame_id, "obj_cup", {}});
        }
        s.apply_action(me, PlaceCharacter{s.frames().back().frame_id, "char_ben", {}, {}, {}, {}});
        s.end_turn(me);
    }
    return s.events();
}

}  // namespace

TEST_CASE("stats on a constructed 12-turn session") {
    const auto log = twelve_turn_fixture();
    const auto st = compute_stats(log);
    CHECK(st.turns_taken == 12);
    CHECK(st.frames_created == 6);
    CHECK(st.items_created == 6);
    CHECK(st.expressions_used == 9);
    CHECK(st.objects_placed == 3);
    CHECK(st.action_counts.a == 12);
    CHECK(st.action_counts.b == 6);
    CHECK(st.action_share.a == 12.0 / 18.0);
    CHECK(st.action_share.b == 6.0 / 18.0);
    CHECK(st.action_share.a + st.action_share.b == doctest::Approx(1.0));
    CHECK(st.duration_ms == log.back().timestamp_ms - log.front().timestamp_ms);
    CHECK(st.duration_minutes == doctest::Approx(st.duration_ms / 60000.0));

    const auto all = compute_stats(log, ItemsCounting::all_placements);
    CHECK(all.items_created == 6 + 12 + 3 + 9);
}

TEST_CASE("seven of ten actions is a 0.7 share") {
    auto s = start(oracle::mini_library());
    s.apply_action(Side::a, CreateFrame{"bg_market"});
    for (int i = 0; i < 6; ++i) say(s, "rain");
    s.end_turn(Side::a);
    for (int i = 0; i < 3; ++i) say(s, "rain");
    const auto st = compute_stats(s.events());
    CHECK(st.action_counts.a == 7);
    CHECK(st.action_share.a == 0.7);
    CHECK(st.action_share.b == 0.3);
}

TEST_CASE("stats equal a naive single-pass count on fuzzed logs") {
    auto lib = oracle::mini_library();
    for (std::uint64_t seed = 1; seed <= 25; ++seed) {
        oracle::FuzzOptions opt;
        opt.target_events = 500;
        const auto log = oracle::fuzz_session(lib, seed, opt);
        const auto n = oracle::naive_count(log);
        const auto st = compute_stats(log);
        CHECK(st.turns_taken == n.turns);
        CHECK(st.expressions_used == n.expressions);
        CHECK(st.frames_created == n.frames);
        CHECK(st.characters_placed == n.characters);
        CHECK(st.objects_placed == n.objects);
        CHECK(st.deletions == n.deletions);
        CHECK(st.action_counts.a == n.actions_a);
        CHECK(st.action_counts.b == n.actions_b);
        for (int k = 0; k < 4; ++k) CHECK(st.mediator_messages[k] == n.mediator[k]);
        CHECK(st.human_mediator_messages == n.human);
        CHECK(st.duration_ms == n.duration_ms);
        // Pure and idempotent.
        CHECK(compute_stats(log) == st);
    }
}

TEST_CASE("trajectory of a log without expressions is flat zero") {
    auto s = start(oracle::mini_library());
    s.apply_action(Side::a, CreateFrame{"bg_market"});
    s.apply_action(Side::a, CreateFrame{"bg_wall"});
    const auto pts = escalation_trajectory(s.events());
    CHECK(pts.size() == 4);
    for (const auto& p : pts) CHECK(p.level == 0.0);
}

TEST_CASE("single escalating insertion is one step of height one") {
    auto s = start(oracle::mini_library());
    s.apply_action(Side::a, CreateFrame{"bg_market"});
    say(s, "our_land");  // escalates side a only
    const auto pts = escalation_trajectory(s.events());
    REQUIRE(pts.size() == 4);
    CHECK(pts[2].side == Side::a);
    CHECK(pts[2].level == 1.0);
    CHECK(pts[3].level == 0.0);
}

TEST_CASE("trajectory equals replayed levels on fuzzed logs") {
    auto lib = oracle::mini_library();
    for (std::uint64_t seed = 30; seed < 45; ++seed) {
        oracle::FuzzOptions opt;
        opt.assets_contribute_escalation = seed % 3 == 0;
        const auto log = oracle::fuzz_session(lib, seed, opt);
        const auto pts = escalation_trajectory(log);
        std::map<std::uint64_t, const SessionEvent*> by_seq;
        for (const auto& e : log) by_seq[e.seq] = &e;
        for (const auto& p : pts) {
            const auto& lvl = by_seq.at(p.seq)->payload.at("level");
            CHECK(std::fabs(p.level - lvl.at(std::string(to_string(p.side))).get<double>()) <= 1e-12);
        }
        auto replayed = replay(log, lib);
        std::map<std::uint64_t, SideLevel> last;
        for (const auto& p : pts) (p.side == Side::a ? last[p.frame_id].a : last[p.frame_id].b) = p.level;
        for (const auto& f : replayed.frames()) {
            CHECK(std::fabs(last.at(f.frame_id).a - f.escalation.current.a) <= 1e-12);
            CHECK(std::fabs(last.at(f.frame_id).b - f.escalation.current.b) <= 1e-12);
        }
        // Oracle fold independent of the engine.
        const auto rules = oracle::replay_rules(log, *lib);
        CHECK(rules.max_level_error <= 1e-12);
    }
}

TEST_CASE("narrative profile on a hand-tabulated session") {
    auto s = start(oracle::mini_library());
    s.apply_action(Side::a, CreateFrame{"bg_market"});
    s.apply_action(Side::a, PlaceCharacter{1, "char_anna", 0, {}, {}, {}});
    say(s, "hello", 0);
    s.end_turn(Side::a);
    say(s, "go_away");
    say(s, "thanks");
    s.apply_action(Side::b, DeleteElement{1, s.frames()[0].bubbles.back().element_id});
    s.end_turn(Side::b);
    say(s, "our_land");
    s.end_turn(Side::a);
    say(s, "untagged");
    s.end_turn(Side::b);
    say(s, "rain");
    s.end_turn(Side::a);
    say(s, "lets_talk");

    const auto p = narrative_profile(s.events(), *oracle::mini_library());
    CHECK(p.statements == 6);
    CHECK(p.dialog_narration == LabelCounts{3, 2, 1});
    CHECK(p.social_political == LabelCounts{2, 3, 1});
    CHECK(p.contingent == LabelCounts{1, 2, 3});
    CHECK(p.bubble_dialog_narration == LabelCounts{1, 5, 0});
    CHECK(*p.dialog_narration.first_fraction() == 0.6);
    CHECK(*p.social_political.second_fraction() == 0.6);
    CHECK(*p.contingent.first_fraction() == doctest::Approx(1.0 / 3.0));

    const auto doc = to_json(p);
    CHECK(doc.dump().find(std::string(kContingencyProxyLabel)) != std::string::npos);
    CHECK(narrative_profile_from_json(doc) == p);
}

TEST_CASE("all dialog statements give a dialog fraction of one; untagged libraries are flagged") {
    auto s = start(oracle::mini_library());
    s.apply_action(Side::a, CreateFrame{"bg_market"});
    say(s, "hello");
    say(s, "thanks");
    const auto p = narrative_profile(s.events(), *oracle::mini_library());
    CHECK(*p.dialog_narration.first_fraction() == 1.0);

    std::ifstream in(oracle::fixture("mini_library.json"));
    auto doc = nlohmann::json::parse(in);
    for (auto& e : doc["expressions"]) {
        e.erase("topic");
        e.erase("statement_kind");
    }
    auto bare = Library::from_json(doc);
    const auto q = narrative_profile(s.events(), bare);
    CHECK(q.dialog_narration.unannotated == 2);
    CHECK_FALSE(q.dialog_narration.first_fraction().has_value());
    CHECK_FALSE(q.social_political.first_fraction().has_value());
    CHECK(to_json(q)["statement_kind"]["dialog_fraction"].is_null());
}

TEST_CASE("export formats") {
    const auto log = twelve_turn_fixture();
    const auto st = compute_stats(log);
    CHECK(session_stats_from_json(to_json(st)) == st);

    const auto csv = stats_csv(st);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);

    const auto pts = escalation_trajectory(log);
    CHECK(trajectory_from_json(to_json(pts)) == pts);
    const auto tcsv = trajectory_csv(pts);
    CHECK(tcsv.rfind("seq,frame_id,side,level\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(tcsv.begin(), tcsv.end(), '\n')) == pts.size() + 1);

    // Levels survive the CSV text exactly.
    std::istringstream rows(tcsv);
    std::string line;
    std::getline(rows, line);
    for (const auto& p : pts) {
        std::getline(rows, line);
        CHECK(std::stod(line.substr(line.rfind(',') + 1)) == p.level);
    }

    CHECK_THROWS_AS(write_text_file("/nonexistent-dir/x.csv", tcsv), Error);
}

TEST_CASE("analytics reject corrupt logs") {
    auto log = twelve_turn_fixture();
    log.erase(log.begin() + 5);
    CHECK_THROWS_AS(compute_stats(log), CorruptLogError);
    CHECK_THROWS_AS(escalation_trajectory(log), CorruptLogError);
    CHECK_THROWS_AS(narrative_profile(log, *oracle::mini_library()), CorruptLogError);
}
