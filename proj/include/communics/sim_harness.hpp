#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "communics/net.hpp"
#include "communics/session.hpp"

namespace communics {

enum class PolicyKind { neutral, hawk, dove, asymmetric_prolific, scripted };

std::string_view to_string(PolicyKind k) noexcept;
PolicyKind policy_kind_from_string(std::string_view text);

struct AgentPolicy {
    PolicyKind kind = PolicyKind::neutral;
    // Counted actions per turn: frames + objects + expressions.
    int actions_per_turn = 2;
    int frames_per_turn = 1;
    std::uint64_t seed = 0;  // mixed with the scenario seed
    double delete_rate = 0.0;
    double object_rate = 0.0;
    // Scripted: one array of wire actions per own turn. "frame_id": "latest"
    // refers to the newest frame.
    nlohmann::json script = nlohmann::json::array();
};

// Defaults per kind; asymmetric_prolific acts three times as often.
AgentPolicy default_policy(PolicyKind kind);
AgentPolicy policy_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const AgentPolicy& p);

// Decides one action at a time from a localized view (see render_view).
class Agent {
public:
    Agent(Side side, AgentPolicy policy, std::uint64_t scenario_seed, std::shared_ptr<const Library> library);

    // Wire-form action for the current view; the view must show this side
    // as active.
    nlohmann::json next_action(const nlohmann::json& view);

    Side side() const noexcept { return side_; }
    const std::vector<std::string>& pool() const noexcept { return pool_; }

private:
    bool chance(double p);
    std::size_t pick(std::size_t n);
    nlohmann::json scripted(const nlohmann::json& view);

    Side side_;
    AgentPolicy policy_;
    std::shared_ptr<const Library> library_;
    std::mt19937_64 rng_;
    std::vector<std::string> pool_;

    int turn_seen_ = 0;
    int own_turns_ = 0;
    int frames_done_ = 0;
    int counted_done_ = 0;
    int characters_done_ = 0;
    std::size_t script_step_ = 0;
    bool deleted_this_turn_ = false;
};

// Expression ids whose engine-convention sentiments suit the policy.
std::vector<std::string> expression_pool(const Library& lib, PolicyKind kind, Side side);

enum class Transport { in_process, networked };

struct ScenarioOptions {
    Transport transport = Transport::in_process;
    // Networked: server to use; a loopback server is started when unset.
    std::optional<Endpoint> endpoint;
    int turns = 12;  // applied when the config has no max_turns
    std::size_t max_steps = 100000;
};

struct FiredMessage {
    std::uint64_t seq = 0;
    int turn = 0;
    MessageKind kind = MessageKind::foster_escalation;
    Addressee addressee = Addressee::both;

    friend bool operator==(const FiredMessage&, const FiredMessage&) = default;
};

struct ScenarioCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ScenarioResult {
    std::vector<SessionEvent> log;
    std::vector<FiredMessage> fired;
    std::vector<SideLevel> final_levels;  // per frame
    std::vector<ScenarioCheck> checks;
    std::string session_id;  // networked runs

    bool passed() const;
};

nlohmann::json to_json(const ScenarioResult& r);
std::vector<FiredMessage> fired_messages(std::span<const SessionEvent> log);

ScenarioResult run_scenario(const AgentPolicy& a, const AgentPolicy& b, SessionConfig config, std::uint64_t seed,
                            std::shared_ptr<const Library> library, const ScenarioOptions& options = {});

// Equal except for timestamps and the duration derived from them.
bool logs_equivalent(std::span<const SessionEvent> x, std::span<const SessionEvent> y, std::string* why = nullptr);

struct SweepGrid {
    std::vector<double> gamma{0.65};
    std::vector<double> lambda{0.65};
    std::vector<double> foster_threshold{0.3};
    std::vector<double> deescalate_threshold{1.0};
    std::vector<std::uint64_t> seeds{1};
    AgentPolicy a = default_policy(PolicyKind::hawk);
    AgentPolicy b = default_policy(PolicyKind::hawk);
    SessionConfig base;
    int turns = 12;
};

SweepGrid sweep_grid_from_json(const nlohmann::json& doc);

struct SweepRow {
    double gamma = 0, lambda = 0, foster_threshold = 0, deescalate_threshold = 0;
    std::uint64_t seed = 0;
    std::array<std::optional<int>, kMessageKindCount> first_turn{};
    std::array<int, kMessageKindCount> count{};
    double peak_level = 0.0;
    double peak_initial = 0.0;
};

std::vector<SweepRow> sweep(const SweepGrid& grid, std::shared_ptr<const Library> library, int parallel = 1);
std::string sweep_csv(std::span<const SweepRow> rows);

}  // namespace communics
