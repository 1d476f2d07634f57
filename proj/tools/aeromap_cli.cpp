#include "aeromap/errors.hpp"
#include "aeromap/mission.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

namespace {

void print_outcome(const aeromap::MissionOutcome& o) {
    std::printf("status: %s\n", aeromap::to_string(o.status));
    std::printf("sim_time_s: %.9g\n", o.sim_time_s);
    std::printf("nodes: %d\n", o.nodes);
    std::printf("loop_closures: %d\n", o.loop_closures);
    std::printf("views_visited: %d\n", o.views_visited);
    std::printf("coverage_fraction: %.9g\n", o.coverage_fraction);
    if (o.reloc_error_m > 0.0)
        std::printf("reloc_error_m: %.9g\n", o.reloc_error_m);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"aeromap: deterministic aerial LiDAR mapping simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir, session_dir, mission_dir, scene_path;
    std::string format = "ply";
    std::uint64_t seed = 0;
    bool seed_set = false;

    CLI::App* run = app.add_subcommand("run", "Fly a mission from a config");
    run->add_option("--config", config_path, "Mission config JSON")
        ->required();
    run->add_option("--out", out_dir, "Output directory")->required();
    run->add_option("--seed", seed, "Override the config's master seed")
        ->each([&](const std::string&) { seed_set = true; });

    CLI::App* resume =
        app.add_subcommand("resume", "Continue an interrupted mission");
    resume->add_option("--session", session_dir, "Saved session directory")
        ->required();
    resume->add_option("--out", out_dir,
                       "Output directory (defaults to the session's parent)");
    resume->add_option("--seed", seed, "Override the resumed flight seed")
        ->each([&](const std::string&) { seed_set = true; });

    CLI::App* eval_cmd =
        app.add_subcommand("eval", "Recompute metrics for a mission");
    eval_cmd->add_option("--mission", mission_dir, "Mission output directory")
        ->required();
    eval_cmd->add_option("--scene", scene_path, "Ground-truth scene JSON")
        ->required();

    CLI::App* export_cmd =
        app.add_subcommand("export", "Re-emit the map in another format");
    export_cmd
        ->add_option("--mission", mission_dir, "Mission output directory")
        ->required();
    export_cmd->add_option("--format", format, "ply or csv");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            aeromap::MissionConfig cfg =
                aeromap::load_mission_config(config_path);
            cfg.output_dir = out_dir;
            if (seed_set) cfg.seed = seed;
            const auto outcome = aeromap::run_mission(cfg);
            print_outcome(outcome);
            return static_cast<int>(outcome.status);
        }
        if (resume->parsed()) {
            std::string target = out_dir;
            if (target.empty()) {
                // Default next to the session: the mission directory that
                // contains it.
                target = session_dir + "/..";
            }
            const auto outcome = aeromap::resume_mission(
                session_dir, target, seed, seed_set);
            print_outcome(outcome);
            return static_cast<int>(outcome.status);
        }
        if (eval_cmd->parsed()) {
            const auto report =
                aeromap::evaluate_mission(mission_dir, scene_path);
            std::printf("coverage_fraction: %.9g\n",
                        report.coverage.fraction);
            std::printf("accuracy_mean_m: %.9g\n",
                        report.accuracy.mean_error_m);
            std::printf("travel_distance_m: %.9g\n",
                        report.stats.travel_distance_m);
            std::printf("mission_time_s: %.9g\n",
                        report.stats.mission_time_s);
            std::printf("trajectory_rmse_m: %.9g\n",
                        report.trajectory_rmse_m);
            return 0;
        }
        if (export_cmd->parsed()) {
            aeromap::export_mission(mission_dir, format);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 10;
    }
    return 0;
}
