#pragma once

#include "aeromap/control.hpp"
#include "aeromap/evaluation.hpp"
#include "aeromap/lidar.hpp"
#include "aeromap/planner.hpp"
#include "aeromap/pose_graph.hpp"
#include "aeromap/scan_context.hpp"
#include "aeromap/see.hpp"

#include <cstdint>
#include <string>

namespace aeromap {

/// Odometry corruption settings; the platform's DriftModel is built from
/// these with a seed derived from the master seed.
struct DriftConfig {
    double translation_bias_sigma_m_per_m = 0.0;
    double yaw_bias_sigma_rad_per_m = 0.0;
    double translation_white_sigma_m = 0.0;
    double yaw_white_sigma_rad = 0.0;
};

struct MissionConfig {
    std::string scene_path;
    std::uint64_t seed = 0;
    double battery_s = 900.0;
    std::string output_dir;

    SensorModel sensor;
    DriftConfig drift;
    SubmapConfig submap;
    IcpConfig icp;
    PoseGraphConfig graph;
    LoopClosureConfig loop_closure;
    ScanContextConfig scan_context;
    SeeConfig see;
    PlanConfig plan;
    ControlConfig control;

    // Runner-level knobs (not part of any module config).
    std::size_t node_cloud_target_points = 8000;
    std::size_t icp_source_target_points = 4000;
    double see_integration_voxel_m = 0.25;
    double grid_voxel_m = 0.5;
    int relocalization_scan_budget = 50;
};

/// Parses the JSON mission config. Relative paths resolve against the
/// config file's directory. Unknown keys anywhere raise ValidationError;
/// omitted keys keep the defaults above.
MissionConfig load_mission_config(const std::string& path);
void save_mission_config(const MissionConfig& cfg, const std::string& path);

enum class MissionStatus {
    Complete = 0,
    CompleteWithWarnings = 1,
    Resumable = 2,
    RelocalizationTimeout = 3,
};

const char* to_string(MissionStatus status);

struct MissionOutcome {
    MissionStatus status = MissionStatus::Complete;
    double sim_time_s = 0.0;
    int nodes = 0;
    int loop_closures = 0;
    int views_visited = 0;
    double coverage_fraction = 0.0;  // vs. the scene surface sampling
    double reloc_error_m = 0.0;      // resumed flights: est-vs-true position
};

/// Flies the full autonomous mapping loop in simulation and writes map.ply,
/// trajectory.csv, metrics.txt, mission.log and session/ into the output
/// directory. Returns Resumable when the battery empties first.
MissionOutcome run_mission(const MissionConfig& cfg);

/// Continues a Resumable session: loads the graph, descriptors and
/// exploration state from <session_dir>, starts a new flight, relocalizes
/// against the existing map, then resumes the mapping loop. Artifacts are
/// written to output_dir (which may equal the original). A session whose
/// exploration already finished returns Complete immediately.
MissionOutcome resume_mission(const std::string& session_dir,
                              const std::string& output_dir,
                              std::uint64_t seed_override = 0,
                              bool has_seed_override = false);

struct EvaluationReport {
    CoverageReport coverage;
    AccuracyReport accuracy;
    MissionStats stats;
    double trajectory_rmse_m = 0.0;
    std::size_t map_points = 0;
    std::size_t reference_points = 0;
};

/// Recomputes metrics for a finished mission directory against the scene's
/// ground-truth surface sampling and rewrites metrics.txt there.
EvaluationReport evaluate_mission(const std::string& mission_dir,
                                  const std::string& scene_path,
                                  double coverage_threshold_m = 0.10);

/// Re-emits the mission map in another format: "ply" writes an ASCII
/// map_export.ply, "csv" writes map_export.csv (one x,y,z row per point).
void export_mission(const std::string& mission_dir,
                    const std::string& format);

}  // namespace aeromap
