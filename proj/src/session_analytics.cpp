#include "communics/session_analytics.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace communics {

using nlohmann::json;

namespace {

std::optional<Side> participant_side(Actor a) {
    if (a == Actor::side_a) return Side::a;
    if (a == Actor::side_b) return Side::b;
    return std::nullopt;
}

// Round-trippable decimal rendering for CSV cells.
std::string number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string optional_number(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

json label_json(const LabelCounts& c, const char* first, const char* second) {
    auto f = c.first_fraction();
    auto s = c.second_fraction();
    return {{first, c.first},
            {second, c.second},
            {"unannotated", c.unannotated},
            {std::string(first) + "_fraction", f ? json(*f) : json(nullptr)},
            {std::string(second) + "_fraction", s ? json(*s) : json(nullptr)}};
}

LabelCounts label_from_json(const json& doc, const char* first, const char* second) {
    return {doc.at(first).get<int>(), doc.at(second).get<int>(), doc.at("unannotated").get<int>()};
}

}  // namespace

std::optional<double> LabelCounts::first_fraction() const {
    const int total = first + second;
    if (total == 0) return std::nullopt;
    return static_cast<double>(first) / total;
}

std::optional<double> LabelCounts::second_fraction() const {
    const int total = first + second;
    if (total == 0) return std::nullopt;
    return static_cast<double>(second) / total;
}

SessionStats compute_stats(std::span<const SessionEvent> log, ItemsCounting items) {
    check_log_structure(log);
    SessionStats st;
    st.items_counting = items;
    st.duration_ms = log.back().timestamp_ms - log.front().timestamp_ms;
    st.duration_minutes = static_cast<double>(st.duration_ms) / 60000.0;

    for (const auto& ev : log) {
        const auto side = participant_side(ev.actor);
        switch (ev.kind) {
            case EventKind::turn_ended: ++st.turns_taken; break;
            case EventKind::frame_created:
                ++st.frames_created;
                if (side) ++st.action_counts[*side];
                break;
            case EventKind::character_placed: ++st.characters_placed; break;
            case EventKind::object_placed:
                ++st.objects_placed;
                if (side) ++st.action_counts[*side];
                break;
            case EventKind::expression_inserted: {
                ++st.expressions_used;
                if (side) ++st.action_counts[*side];
                const auto& s = ev.payload.at("sentiment");
                ++st.sentiment_histogram.a[s.at("side_a").get<int>() + 1];
                ++st.sentiment_histogram.b[s.at("side_b").get<int>() + 1];
                break;
            }
            case EventKind::element_deleted: ++st.deletions; break;
            case EventKind::mediator_msg:
                ++st.mediator_messages[static_cast<std::size_t>(
                    message_kind_from_string(ev.payload.at("kind").get<std::string>()))];
                break;
            case EventKind::human_mediator_msg: ++st.human_mediator_messages; break;
            default: break;
        }
    }
    st.items_created = items == ItemsCounting::frames
                           ? st.frames_created
                           : st.frames_created + st.characters_placed + st.objects_placed + st.expressions_used;
    const int total = st.action_counts.a + st.action_counts.b;
    if (total > 0) {
        st.action_share.a = static_cast<double>(st.action_counts.a) / total;
        st.action_share.b = static_cast<double>(st.action_counts.b) / total;
    }
    return st;
}

std::vector<TrajectoryPoint> escalation_trajectory(std::span<const SessionEvent> log) {
    check_log_structure(log);
    EngineParams params;
    const auto& cfg = log.front().payload.at("config");
    if (cfg.contains("engine")) {
        params.gamma = cfg["engine"].value("gamma", params.gamma);
        params.lambda = cfg["engine"].value("lambda", params.lambda);
    }
    return escalation_trajectory(log, params);
}

std::vector<TrajectoryPoint> escalation_trajectory(std::span<const SessionEvent> log, const EngineParams& params) {
    check_log_structure(log);
    params.validate();

    std::vector<std::uint64_t> order;
    std::map<std::uint64_t, FrameEscalation> frames;
    ExposureTracks unused;
    std::vector<TrajectoryPoint> points;

    auto push = [&](std::uint64_t seq, std::uint64_t frame_id) {
        const auto& cur = frames.at(frame_id).current;
        points.push_back({seq, frame_id, Side::a, cur.a});
        points.push_back({seq, frame_id, Side::b, cur.b});
    };
    auto sentiment = [](const json& s) { return Sentiment{s.at("side_a").get<int>(), s.at("side_b").get<int>()}; };
    auto frame_of = [&](const SessionEvent& ev) -> FrameEscalation& {
        auto it = frames.find(ev.payload.at("frame_id").get<std::uint64_t>());
        if (it == frames.end()) throw CorruptLogError(ev.seq, "event references an unknown frame");
        return it->second;
    };

    for (const auto& ev : log) {
        const auto inserting = participant_side(ev.actor).value_or(Side::a);
        switch (ev.kind) {
            case EventKind::frame_created: {
                std::vector<SideLevel> previous;
                for (auto id : order) previous.push_back(frames.at(id).current);
                auto fe = FrameEscalation::starting_at(initial_frame_escalation(previous, params));
                if (ev.payload.contains("background_sentiment")) {
                    apply_insertion(fe, 0, sentiment(ev.payload["background_sentiment"]), inserting, unused, ev.turn,
                                    params);
                }
                const auto id = ev.payload.at("frame_id").get<std::uint64_t>();
                order.push_back(id);
                frames[id] = std::move(fe);
                push(ev.seq, id);
                break;
            }
            case EventKind::expression_inserted: {
                auto& fe = frame_of(ev);
                apply_insertion(fe, ev.payload.at("element_id").get<std::uint64_t>(),
                                sentiment(ev.payload.at("sentiment")), inserting, unused, ev.turn, params);
                push(ev.seq, ev.payload["frame_id"].get<std::uint64_t>());
                break;
            }
            case EventKind::element_deleted: {
                if (ev.payload.value("element", std::string()) != "bubble") break;
                auto& fe = frame_of(ev);
                try {
                    apply_deletion(fe, ev.payload.at("element_id").get<std::uint64_t>(), params);
                } catch (const Error& e) {
                    throw CorruptLogError(ev.seq, e.what());
                }
                push(ev.seq, ev.payload["frame_id"].get<std::uint64_t>());
                break;
            }
            default: break;
        }
    }
    return points;
}

NarrativeProfile narrative_profile(std::span<const SessionEvent> log, const Library& lib) {
    check_log_structure(log);

    struct Statement {
        std::uint64_t element_id;
        Side side;
        const Expression* expr;
        BubbleKind bubble;
    };
    std::vector<Statement> statements;
    for (const auto& ev : log) {
        if (ev.kind == EventKind::expression_inserted) {
            const auto side = participant_side(ev.actor);
            if (!side) throw CorruptLogError(ev.seq, "insertion without a participant actor");
            const auto* expr = lib.find_expression(ev.payload.at("expression_id").get<std::string>());
            if (!expr) throw CorruptLogError(ev.seq, "expression not in library");
            statements.push_back({ev.payload.at("element_id").get<std::uint64_t>(), *side, expr,
                                  ev.payload.value("bubble_kind", std::string()) == "dialog" ? BubbleKind::dialog
                                                                                             : BubbleKind::narration});
        } else if (ev.kind == EventKind::element_deleted && ev.payload.value("element", std::string()) == "bubble") {
            const auto id = ev.payload.at("element_id").get<std::uint64_t>();
            std::erase_if(statements, [id](const Statement& s) { return s.element_id == id; });
        }
    }

    NarrativeProfile p;
    p.statements = static_cast<int>(statements.size());
    for (std::size_t i = 0; i < statements.size(); ++i) {
        const auto& st = statements[i];
        if (!st.expr->statement_kind) {
            ++p.dialog_narration.unannotated;
        } else if (*st.expr->statement_kind == StatementKind::dialog) {
            ++p.dialog_narration.first;
        } else {
            ++p.dialog_narration.second;
        }
        if (!st.expr->topic) {
            ++p.social_political.unannotated;
        } else if (*st.expr->topic == TopicTag::social) {
            ++p.social_political.first;
        } else {
            ++p.social_political.second;
        }
        if (st.bubble == BubbleKind::dialog) {
            ++p.bubble_dialog_narration.first;
        } else {
            ++p.bubble_dialog_narration.second;
        }

        const Statement* prev = nullptr;
        for (std::size_t j = i; j-- > 0;) {
            if (statements[j].side != st.side) {
                prev = &statements[j];
                break;
            }
        }
        if (!prev || !prev->expr->topic || !st.expr->topic) {
            ++p.contingent.unannotated;
        } else if (*prev->expr->topic == *st.expr->topic) {
            ++p.contingent.first;
        } else {
            ++p.contingent.second;
        }
    }
    return p;
}

json to_json(const SessionStats& s) {
    json kinds = json::object();
    for (std::size_t k = 0; k < kMessageKindCount; ++k) {
        kinds[std::string(to_string(static_cast<MessageKind>(k)))] = s.mediator_messages[k];
    }
    auto hist = [](const std::array<int, 3>& h) { return json{{"-1", h[0]}, {"0", h[1]}, {"1", h[2]}}; };
    return {{"duration_ms", s.duration_ms},
            {"duration_minutes", s.duration_minutes},
            {"turns_taken", s.turns_taken},
            {"expressions_used", s.expressions_used},
            {"items_created", s.items_created},
            {"items_counting", s.items_counting == ItemsCounting::frames ? "frames" : "all_placements"},
            {"frames_created", s.frames_created},
            {"characters_placed", s.characters_placed},
            {"objects_placed", s.objects_placed},
            {"deletions", s.deletions},
            {"action_counts", {{"side_a", s.action_counts.a}, {"side_b", s.action_counts.b}}},
            {"action_share", {{"side_a", s.action_share.a}, {"side_b", s.action_share.b}}},
            {"mediator_messages", kinds},
            {"human_mediator_messages", s.human_mediator_messages},
            {"sentiment_histogram", {{"side_a", hist(s.sentiment_histogram.a)}, {"side_b", hist(s.sentiment_histogram.b)}}}};
}

SessionStats session_stats_from_json(const json& doc) {
    SessionStats s;
    s.duration_ms = doc.at("duration_ms").get<std::int64_t>();
    s.duration_minutes = doc.at("duration_minutes").get<double>();
    s.turns_taken = doc.at("turns_taken").get<int>();
    s.expressions_used = doc.at("expressions_used").get<int>();
    s.items_created = doc.at("items_created").get<int>();
    s.items_counting = doc.at("items_counting").get<std::string>() == "frames" ? ItemsCounting::frames
                                                                               : ItemsCounting::all_placements;
    s.frames_created = doc.at("frames_created").get<int>();
    s.characters_placed = doc.at("characters_placed").get<int>();
    s.objects_placed = doc.at("objects_placed").get<int>();
    s.deletions = doc.at("deletions").get<int>();
    s.action_counts = {doc["action_counts"].at("side_a").get<int>(), doc["action_counts"].at("side_b").get<int>()};
    s.action_share = {doc["action_share"].at("side_a").get<double>(), doc["action_share"].at("side_b").get<double>()};
    for (std::size_t k = 0; k < kMessageKindCount; ++k) {
        s.mediator_messages[k] = doc.at("mediator_messages").at(std::string(to_string(static_cast<MessageKind>(k)))).get<int>();
    }
    s.human_mediator_messages = doc.at("human_mediator_messages").get<int>();
    auto hist = [](const json& h) {
        return std::array<int, 3>{h.at("-1").get<int>(), h.at("0").get<int>(), h.at("1").get<int>()};
    };
    s.sentiment_histogram = {hist(doc["sentiment_histogram"].at("side_a")), hist(doc["sentiment_histogram"].at("side_b"))};
    return s;
}

json to_json(const NarrativeProfile& p) {
    return {{"statements", p.statements},
            {"statement_kind", label_json(p.dialog_narration, "dialog", "narration")},
            {"topic", label_json(p.social_political, "social", "political")},
            {"contingency", label_json(p.contingent, "contingent", "non_contingent")},
            {"contingency_method", kContingencyProxyLabel},
            {"bubble_kind", label_json(p.bubble_dialog_narration, "dialog", "narration")}};
}

NarrativeProfile narrative_profile_from_json(const json& doc) {
    NarrativeProfile p;
    p.statements = doc.at("statements").get<int>();
    p.dialog_narration = label_from_json(doc.at("statement_kind"), "dialog", "narration");
    p.social_political = label_from_json(doc.at("topic"), "social", "political");
    p.contingent = label_from_json(doc.at("contingency"), "contingent", "non_contingent");
    p.bubble_dialog_narration = label_from_json(doc.at("bubble_kind"), "dialog", "narration");
    return p;
}

json to_json(std::span<const TrajectoryPoint> points) {
    json out = json::array();
    for (const auto& pt : points) {
        out.push_back({{"seq", pt.seq}, {"frame_id", pt.frame_id}, {"side", to_string(pt.side)}, {"level", pt.level}});
    }
    return out;
}

std::vector<TrajectoryPoint> trajectory_from_json(const json& doc) {
    std::vector<TrajectoryPoint> out;
    for (const auto& row : doc) {
        out.push_back({row.at("seq").get<std::uint64_t>(), row.at("frame_id").get<std::uint64_t>(),
                       side_from_string(row.at("side").get<std::string>()), row.at("level").get<double>()});
    }
    return out;
}

std::string stats_csv(const SessionStats& s) {
    std::ostringstream out;
    out << "duration_ms,duration_minutes,turns_taken,expressions_used,items_created,frames_created,"
           "characters_placed,objects_placed,deletions,actions_side_a,actions_side_b,share_side_a,share_side_b";
    for (std::size_t k = 0; k < kMessageKindCount; ++k) out << ",msg_" << to_string(static_cast<MessageKind>(k));
    out << ",human_mediator_messages\n";
    out << s.duration_ms << ',' << number(s.duration_minutes) << ',' << s.turns_taken << ',' << s.expressions_used
        << ',' << s.items_created << ',' << s.frames_created << ',' << s.characters_placed << ',' << s.objects_placed
        << ',' << s.deletions << ',' << s.action_counts.a << ',' << s.action_counts.b << ','
        << number(s.action_share.a) << ',' << number(s.action_share.b);
    for (int n : s.mediator_messages) out << ',' << n;
    out << ',' << s.human_mediator_messages << '\n';
    return out.str();
}

std::string profile_csv(const NarrativeProfile& p) {
    std::ostringstream out;
    out << "statements,dialog,narration,kind_unannotated,dialog_fraction,social,political,topic_unannotated,"
           "social_fraction,contingent_proxy,non_contingent_proxy,contingency_undetermined,contingent_proxy_fraction\n";
    out << p.statements << ',' << p.dialog_narration.first << ',' << p.dialog_narration.second << ','
        << p.dialog_narration.unannotated << ',' << optional_number(p.dialog_narration.first_fraction()) << ','
        << p.social_political.first << ',' << p.social_political.second << ',' << p.social_political.unannotated
        << ',' << optional_number(p.social_political.first_fraction()) << ',' << p.contingent.first << ','
        << p.contingent.second << ',' << p.contingent.unannotated << ','
        << optional_number(p.contingent.first_fraction()) << '\n';
    return out.str();
}

std::string trajectory_csv(std::span<const TrajectoryPoint> points) {
    std::ostringstream out;
    out << "seq,frame_id,side,level\n";
    for (const auto& pt : points) {
        out << pt.seq << ',' << pt.frame_id << ',' << to_string(pt.side) << ',' << number(pt.level) << '\n';
    }
    return out.str();
}

void write_text_file(const std::string& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + path);
    out << contents;
    out.flush();
    if (!out) throw Error(ErrorCode::io_error, "write failed on " + path);
}

}  // namespace communics
