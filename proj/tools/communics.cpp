#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>

#include <boost/asio/io_context.hpp>
#include <boost/asio/signal_set.hpp>

#include "communics/content_library.hpp"
#include "communics/net.hpp"
#include "communics/session_analytics.hpp"
#include "communics/session_log.hpp"
#include "communics/sim_harness.hpp"
#include "communics/sync_service.hpp"

#ifndef COMMUNICS_DEFAULT_LIBRARY
#define COMMUNICS_DEFAULT_LIBRARY "data/reference_library.json"
#endif

using namespace communics;
using nlohmann::json;

namespace {

void emit(const std::string& out, const std::string& text) {
    if (out.empty() || out == "-") {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') std::cout << '\n';
    } else {
        write_text_file(out, text);
    }
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse_error, path + ": " + e.what());
    }
}

AgentPolicy policy_arg(const std::string& value) {
    if (value.size() > 5 && value.ends_with(".json")) return policy_from_json(read_json_file(value));
    return default_policy(policy_kind_from_string(value));
}

std::shared_ptr<const Library> library_arg(const std::string& path) {
    return std::make_shared<const Library>(load_library(path));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Collaborative storytelling service with an automated conflict mediator"};
    app.require_subcommand(1);

    // library
    auto* lib_cmd = app.add_subcommand("library", "Inspect content libraries");
    lib_cmd->require_subcommand(1);
    std::string lib_file;
    bool lenient = false;
    auto* lib_validate = lib_cmd->add_subcommand("validate", "Validate a library file (exit 0 iff valid)");
    lib_validate->add_option("file", lib_file, "Library JSON file")->required();
    lib_validate->add_flag("--lenient", lenient, "Report missing translations as warnings");
    std::string asset_root;
    lib_validate->add_option("--asset-root", asset_root, "Check that relative image paths exist under this directory");
    auto* lib_stats = lib_cmd->add_subcommand("stats", "Asset counts and sentiment histogram per side");
    lib_stats->add_option("file", lib_file, "Library JSON file")->required();

    // analytics
    auto* an_cmd = app.add_subcommand("analytics", "Measures computed from session logs");
    an_cmd->require_subcommand(1);
    std::string log_file, an_library, out_file;
    bool csv = false, all_placements = false;
    std::optional<double> gamma, lambda;
    auto* an_stats = an_cmd->add_subcommand("stats", "Session statistics");
    an_stats->add_option("log", log_file, "Session log file")->required();
    an_stats->add_flag("--csv", csv, "Single-row CSV instead of JSON");
    an_stats->add_flag("--all-placements", all_placements, "Count every placement as an item, not only frames");
    an_stats->add_option("--library", an_library, "Verify the log by replay against this library");
    an_stats->add_option("--out", out_file, "Output file (default stdout)");
    auto* an_traj = an_cmd->add_subcommand("trajectory", "Per-side escalation levels over the log");
    an_traj->add_option("log", log_file, "Session log file")->required();
    an_traj->add_flag("--csv", csv, "CSV with columns seq,frame_id,side,level");
    an_traj->add_option("--gamma", gamma, "Override the logged discount factor");
    an_traj->add_option("--lambda", lambda, "Override the logged context weight");
    an_traj->add_option("--out", out_file, "Output file (default stdout)");
    auto* an_profile = an_cmd->add_subcommand("profile", "Statement kind, topic and contingency proportions");
    an_profile->add_option("log", log_file, "Session log file")->required();
    an_profile->add_option("--library", an_library, "Library with statement annotations")->required();
    an_profile->add_flag("--csv", csv, "Single-row CSV instead of JSON");
    an_profile->add_option("--out", out_file, "Output file (default stdout)");

    // sim
    auto* sim_cmd = app.add_subcommand("sim", "Scripted-agent sessions");
    sim_cmd->require_subcommand(1);
    std::string pol_a = "neutral", pol_b = "neutral", sim_config, sim_library = COMMUNICS_DEFAULT_LIBRARY;
    std::string networked, log_out, result_out, traj_out, grid_file;
    std::uint64_t seed = 1;
    int turns = 12, parallel = 1;
    auto* sim_run = sim_cmd->add_subcommand("run", "Run one scenario");
    sim_run->add_option("--a", pol_a, "Policy for side a (name or JSON file)");
    sim_run->add_option("--b", pol_b, "Policy for side b (name or JSON file)");
    sim_run->add_option("--seed", seed, "Scenario seed");
    sim_run->add_option("--config", sim_config, "Session config JSON");
    sim_run->add_option("--library", sim_library, "Library file");
    sim_run->add_option("--turns", turns, "Turns when the config sets no max_turns");
    sim_run->add_option("--networked", networked, "Run over the wire against this server (http://host:port); "
                                                  "'loopback' starts a local one");
    sim_run->add_option("--log", log_out, "Write the session log here");
    sim_run->add_option("--result", result_out, "Write the scenario result JSON here (default stdout)");
    sim_run->add_option("--trajectory", traj_out, "Write the trajectory CSV here");
    auto* sim_sweep = sim_cmd->add_subcommand("sweep", "Run a parameter grid");
    sim_sweep->add_option("--grid", grid_file, "Grid JSON file")->required();
    sim_sweep->add_option("--library", sim_library, "Library file");
    sim_sweep->add_option("--parallel", parallel, "Concurrent scenarios")->check(CLI::PositiveNumber);
    sim_sweep->add_option("--out", out_file, "CSV output (default stdout)");

    // serve
    std::string serve_config;
    auto* serve = app.add_subcommand("serve", "Run the HTTP/WebSocket service");
    serve->add_option("--config", serve_config, "Service config JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*lib_validate) {
            LoadOptions opt;
            opt.allow_missing_translations = lenient;
            if (!asset_root.empty()) opt.asset_root = asset_root;
            try {
                auto lib = load_library(lib_file, opt);
                for (const auto& w : lib.warnings()) std::cerr << "warning: " << w << '\n';
                std::cout << "valid: " << lib.expressions().size() << " expressions, checksum " << lib.checksum() << '\n';
                return 0;
            } catch (const Error& e) {
                std::cerr << error_code_name(e.code()) << ": " << e.what() << '\n';
                return 1;
            }
        }
        if (*lib_stats) {
            auto lib = load_library(lib_file);
            std::cout << to_json(library_stats(lib)).dump(2) << '\n';
            return 0;
        }

        if (*an_stats) {
            auto log = read_log(log_file);
            if (!an_library.empty()) replay(log.events, library_arg(an_library));
            auto st = compute_stats(log.events, all_placements ? ItemsCounting::all_placements : ItemsCounting::frames);
            emit(out_file, csv ? stats_csv(st) : to_json(st).dump(2));
            return 0;
        }
        if (*an_traj) {
            auto log = read_log(log_file);
            std::vector<TrajectoryPoint> pts;
            if (gamma || lambda) {
                EngineParams p;
                const auto& eng = log.header.config.value("engine", json::object());
                p.gamma = gamma.value_or(eng.value("gamma", p.gamma));
                p.lambda = lambda.value_or(eng.value("lambda", p.lambda));
                pts = escalation_trajectory(log.events, p);
            } else {
                pts = escalation_trajectory(log.events);
            }
            emit(out_file, csv ? trajectory_csv(pts) : to_json(pts).dump(2));
            return 0;
        }
        if (*an_profile) {
            auto log = read_log(log_file);
            auto lib = load_library(an_library);
            auto p = narrative_profile(log.events, lib);
            emit(out_file, csv ? profile_csv(p) : to_json(p).dump(2));
            return 0;
        }

        if (*sim_run) {
            auto lib = library_arg(sim_library);
            SessionConfig cfg = sim_config.empty() ? SessionConfig{} : session_config_from_json(read_json_file(sim_config));
            ScenarioOptions opt;
            opt.turns = turns;
            if (!networked.empty()) {
                opt.transport = Transport::networked;
                if (networked != "loopback") opt.endpoint = parse_endpoint(networked);
            }
            auto result = run_scenario(policy_arg(pol_a), policy_arg(pol_b), cfg, seed, lib, opt);
            if (!log_out.empty()) {
                LogHeader header = log_header_from_json(
                    {{"schema_version", kSessionSchemaVersion},
                     {"library_checksum", lib->checksum()},
                     {"config", result.log.front().payload.at("config")}});
                write_text_file(log_out, encode_log(header, result.log));
            }
            if (!traj_out.empty()) write_text_file(traj_out, trajectory_csv(escalation_trajectory(result.log)));
            emit(result_out, to_json(result).dump(2));
            return result.passed() ? 0 : 2;
        }
        if (*sim_sweep) {
            auto grid = sweep_grid_from_json(read_json_file(grid_file));
            auto rows = sweep(grid, library_arg(sim_library), parallel);
            emit(out_file, sweep_csv(rows));
            return 0;
        }

        if (*serve) {
            auto cfg = load_service_config(serve_config);
            SyncService service(cfg);
            HttpServer server(service, cfg.bind_address, cfg.port, cfg.io_threads);
            server.start();
            std::cerr << "listening on " << cfg.bind_address << ':' << server.port() << '\n';
            boost::asio::io_context signals_ctx;
            boost::asio::signal_set signals(signals_ctx, SIGINT, SIGTERM);
            signals.async_wait([&](const boost::system::error_code&, int) { server.stop(); });
            signals_ctx.run();
            server.wait();
            return 0;
        }
    } catch (const CorruptLogError& e) {
        std::cerr << "CORRUPT_LOG at " << e.position() << ": " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << error_code_name(e.code()) << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
