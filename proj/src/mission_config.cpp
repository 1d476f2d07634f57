#include "aeromap/mission.hpp"

#include "aeromap/errors.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <set>

namespace aeromap {
namespace {

using nlohmann::json;

/// Rejects keys outside the allowed set so typos fail loudly instead of
/// silently falling back to defaults.
void check_keys(const json& obj, const std::string& section,
                const std::set<std::string>& allowed) {
    if (!obj.is_object())
        throw ValidationError("config: '" + section + "' must be an object");
    for (const auto& item : obj.items()) {
        if (!allowed.count(item.key()))
            throw ValidationError("config: unknown key '" + item.key() +
                                  "' in " + section);
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

MissionConfig load_mission_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open: " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("config: invalid JSON: " + std::string(e.what()));
    }

    check_keys(doc, "root",
               {"format_version", "scene", "seed", "battery_s", "output_dir",
                "sensor", "drift", "submap", "icp", "graph", "loop_closure",
                "scan_context", "see", "plan", "control", "runner"});
    if (!doc.contains("format_version") ||
        doc.at("format_version").get<int>() != 1)
        throw FormatVersionMismatch("config: format_version must be 1");
    if (!doc.contains("scene"))
        throw ValidationError("config: missing 'scene'");

    MissionConfig cfg;
    const auto base = std::filesystem::path(path).parent_path();
    const std::string scene = doc.at("scene").get<std::string>();
    cfg.scene_path = std::filesystem::path(scene).is_absolute()
                         ? scene
                         : (base / scene).string();
    read(doc, "seed", cfg.seed);
    read(doc, "battery_s", cfg.battery_s);
    read(doc, "output_dir", cfg.output_dir);

    if (doc.contains("sensor")) {
        const auto& s = doc.at("sensor");
        check_keys(s, "sensor",
                   {"horizontal_fov_deg", "vertical_fov_deg",
                    "horizontal_resolution", "vertical_resolution",
                    "max_range_m", "range_noise_sigma_m", "scan_rate_hz"});
        read(s, "horizontal_fov_deg", cfg.sensor.horizontal_fov_deg);
        read(s, "vertical_fov_deg", cfg.sensor.vertical_fov_deg);
        read(s, "horizontal_resolution", cfg.sensor.horizontal_resolution);
        read(s, "vertical_resolution", cfg.sensor.vertical_resolution);
        read(s, "max_range_m", cfg.sensor.max_range_m);
        read(s, "range_noise_sigma_m", cfg.sensor.range_noise_sigma_m);
        read(s, "scan_rate_hz", cfg.sensor.scan_rate_hz);
    }
    if (doc.contains("drift")) {
        const auto& s = doc.at("drift");
        check_keys(s, "drift",
                   {"translation_bias_sigma_m_per_m",
                    "yaw_bias_sigma_rad_per_m", "translation_white_sigma_m",
                    "yaw_white_sigma_rad"});
        read(s, "translation_bias_sigma_m_per_m",
             cfg.drift.translation_bias_sigma_m_per_m);
        read(s, "yaw_bias_sigma_rad_per_m",
             cfg.drift.yaw_bias_sigma_rad_per_m);
        read(s, "translation_white_sigma_m",
             cfg.drift.translation_white_sigma_m);
        read(s, "yaw_white_sigma_rad", cfg.drift.yaw_white_sigma_rad);
    }
    if (doc.contains("submap")) {
        const auto& s = doc.at("submap");
        check_keys(s, "submap",
                   {"inclusion_radius_m", "dense_radius_m",
                    "dense_separation_m", "sparse_separation_m",
                    "target_points"});
        read(s, "inclusion_radius_m", cfg.submap.inclusion_radius_m);
        read(s, "dense_radius_m", cfg.submap.dense_radius_m);
        read(s, "dense_separation_m", cfg.submap.dense_separation_m);
        read(s, "sparse_separation_m", cfg.submap.sparse_separation_m);
        read(s, "target_points", cfg.submap.target_points);
    }
    if (doc.contains("icp")) {
        const auto& s = doc.at("icp");
        check_keys(s, "icp",
                   {"max_iterations", "translation_convergence_m",
                    "rotation_convergence_rad", "max_correspondence_dist_m",
                    "min_inliers"});
        read(s, "max_iterations", cfg.icp.max_iterations);
        read(s, "translation_convergence_m",
             cfg.icp.translation_convergence_m);
        read(s, "rotation_convergence_rad",
             cfg.icp.rotation_convergence_rad);
        read(s, "max_correspondence_dist_m",
             cfg.icp.max_correspondence_dist_m);
        read(s, "min_inliers", cfg.icp.min_inliers);
    }
    if (doc.contains("graph")) {
        const auto& s = doc.at("graph");
        check_keys(s, "graph",
                   {"node_interval_m", "odometry_weight",
                    "loop_closure_weight", "relocalization_weight"});
        read(s, "node_interval_m", cfg.graph.node_interval_m);
        read(s, "odometry_weight", cfg.graph.odometry_weight);
        read(s, "loop_closure_weight", cfg.graph.loop_closure_weight);
        read(s, "relocalization_weight", cfg.graph.relocalization_weight);
    }
    if (doc.contains("loop_closure")) {
        const auto& s = doc.at("loop_closure");
        check_keys(s, "loop_closure",
                   {"detection_radius_m", "min_inliers", "exclusion_window"});
        read(s, "detection_radius_m", cfg.loop_closure.detection_radius_m);
        read(s, "min_inliers", cfg.loop_closure.min_inliers);
        read(s, "exclusion_window", cfg.loop_closure.exclusion_window);
    }
    if (doc.contains("scan_context")) {
        const auto& s = doc.at("scan_context");
        check_keys(s, "scan_context",
                   {"rings", "sectors", "max_radius_m", "accept_threshold",
                    "shortlist_size"});
        read(s, "rings", cfg.scan_context.rings);
        read(s, "sectors", cfg.scan_context.sectors);
        read(s, "max_radius_m", cfg.scan_context.max_radius_m);
        read(s, "accept_threshold", cfg.scan_context.accept_threshold);
        read(s, "shortlist_size", cfg.scan_context.shortlist_size);
    }
    if (doc.contains("see")) {
        const auto& s = doc.at("see");
        check_keys(s, "see",
                   {"resolution_radius_m", "target_density_pts_m3",
                    "view_distance_m", "max_attempts", "eigenvalue_ratio",
                    "use_distribution_check", "min_view_height_m"});
        read(s, "resolution_radius_m", cfg.see.resolution_radius_m);
        read(s, "target_density_pts_m3", cfg.see.target_density_pts_m3);
        read(s, "view_distance_m", cfg.see.view_distance_m);
        read(s, "max_attempts", cfg.see.max_attempts);
        read(s, "eigenvalue_ratio", cfg.see.eigenvalue_ratio);
        read(s, "use_distribution_check", cfg.see.use_distribution_check);
        read(s, "min_view_height_m", cfg.see.min_view_height_m);
    }
    if (doc.contains("plan")) {
        const auto& s = doc.at("plan");
        check_keys(s, "plan",
                   {"budget_s", "max_waypoint_m", "clearance_m",
                    "batch_size"});
        read(s, "budget_s", cfg.plan.budget_s);
        read(s, "max_waypoint_m", cfg.plan.max_waypoint_m);
        read(s, "clearance_m", cfg.plan.clearance_m);
        read(s, "batch_size", cfg.plan.batch_size);
    }
    if (doc.contains("control")) {
        const auto& s = doc.at("control");
        check_keys(s, "control",
                   {"max_velocity_mps", "acceleration_mps2",
                    "command_rate_hz", "arrival_tolerance_m",
                    "yaw_rate_cap_radps", "yaw_gain"});
        read(s, "max_velocity_mps", cfg.control.max_velocity_mps);
        read(s, "acceleration_mps2", cfg.control.acceleration_mps2);
        read(s, "command_rate_hz", cfg.control.command_rate_hz);
        read(s, "arrival_tolerance_m", cfg.control.arrival_tolerance_m);
        read(s, "yaw_rate_cap_radps", cfg.control.yaw_rate_cap_radps);
        read(s, "yaw_gain", cfg.control.yaw_gain);
    }
    if (doc.contains("runner")) {
        const auto& s = doc.at("runner");
        check_keys(s, "runner",
                   {"node_cloud_target_points", "icp_source_target_points",
                    "see_integration_voxel_m", "grid_voxel_m",
                    "relocalization_scan_budget"});
        read(s, "node_cloud_target_points", cfg.node_cloud_target_points);
        read(s, "icp_source_target_points", cfg.icp_source_target_points);
        read(s, "see_integration_voxel_m", cfg.see_integration_voxel_m);
        read(s, "grid_voxel_m", cfg.grid_voxel_m);
        read(s, "relocalization_scan_budget",
             cfg.relocalization_scan_budget);
    }

    if (cfg.battery_s <= 0.0)
        throw ValidationError("config: battery_s must be positive");
    if (cfg.plan.budget_s <= 0.0 || cfg.plan.max_waypoint_m <= 0.0)
        throw ValidationError("config: plan budget and waypoint distance must be positive");
    if (cfg.control.max_velocity_mps <= 0.0 ||
        cfg.control.acceleration_mps2 <= 0.0)
        throw ValidationError("config: control limits must be positive");
    return cfg;
}

void save_mission_config(const MissionConfig& cfg, const std::string& path) {
    json doc;
    doc["format_version"] = 1;
    doc["scene"] = cfg.scene_path;
    doc["seed"] = cfg.seed;
    doc["battery_s"] = cfg.battery_s;
    if (!cfg.output_dir.empty()) doc["output_dir"] = cfg.output_dir;
    doc["sensor"] = {
        {"horizontal_fov_deg", cfg.sensor.horizontal_fov_deg},
        {"vertical_fov_deg", cfg.sensor.vertical_fov_deg},
        {"horizontal_resolution", cfg.sensor.horizontal_resolution},
        {"vertical_resolution", cfg.sensor.vertical_resolution},
        {"max_range_m", cfg.sensor.max_range_m},
        {"range_noise_sigma_m", cfg.sensor.range_noise_sigma_m},
        {"scan_rate_hz", cfg.sensor.scan_rate_hz}};
    doc["drift"] = {
        {"translation_bias_sigma_m_per_m",
         cfg.drift.translation_bias_sigma_m_per_m},
        {"yaw_bias_sigma_rad_per_m", cfg.drift.yaw_bias_sigma_rad_per_m},
        {"translation_white_sigma_m", cfg.drift.translation_white_sigma_m},
        {"yaw_white_sigma_rad", cfg.drift.yaw_white_sigma_rad}};
    doc["submap"] = {
        {"inclusion_radius_m", cfg.submap.inclusion_radius_m},
        {"dense_radius_m", cfg.submap.dense_radius_m},
        {"dense_separation_m", cfg.submap.dense_separation_m},
        {"sparse_separation_m", cfg.submap.sparse_separation_m},
        {"target_points", cfg.submap.target_points}};
    doc["icp"] = {
        {"max_iterations", cfg.icp.max_iterations},
        {"translation_convergence_m", cfg.icp.translation_convergence_m},
        {"rotation_convergence_rad", cfg.icp.rotation_convergence_rad},
        {"max_correspondence_dist_m", cfg.icp.max_correspondence_dist_m},
        {"min_inliers", cfg.icp.min_inliers}};
    doc["graph"] = {
        {"node_interval_m", cfg.graph.node_interval_m},
        {"odometry_weight", cfg.graph.odometry_weight},
        {"loop_closure_weight", cfg.graph.loop_closure_weight},
        {"relocalization_weight", cfg.graph.relocalization_weight}};
    doc["loop_closure"] = {
        {"detection_radius_m", cfg.loop_closure.detection_radius_m},
        {"min_inliers", cfg.loop_closure.min_inliers},
        {"exclusion_window", cfg.loop_closure.exclusion_window}};
    doc["scan_context"] = {
        {"rings", cfg.scan_context.rings},
        {"sectors", cfg.scan_context.sectors},
        {"max_radius_m", cfg.scan_context.max_radius_m},
        {"accept_threshold", cfg.scan_context.accept_threshold},
        {"shortlist_size", cfg.scan_context.shortlist_size}};
    doc["see"] = {
        {"resolution_radius_m", cfg.see.resolution_radius_m},
        {"target_density_pts_m3", cfg.see.target_density_pts_m3},
        {"view_distance_m", cfg.see.view_distance_m},
        {"max_attempts", cfg.see.max_attempts},
        {"eigenvalue_ratio", cfg.see.eigenvalue_ratio},
        {"use_distribution_check", cfg.see.use_distribution_check},
        {"min_view_height_m", cfg.see.min_view_height_m}};
    doc["plan"] = {{"budget_s", cfg.plan.budget_s},
                   {"max_waypoint_m", cfg.plan.max_waypoint_m},
                   {"clearance_m", cfg.plan.clearance_m},
                   {"batch_size", cfg.plan.batch_size}};
    doc["control"] = {
        {"max_velocity_mps", cfg.control.max_velocity_mps},
        {"acceleration_mps2", cfg.control.acceleration_mps2},
        {"command_rate_hz", cfg.control.command_rate_hz},
        {"arrival_tolerance_m", cfg.control.arrival_tolerance_m},
        {"yaw_rate_cap_radps", cfg.control.yaw_rate_cap_radps},
        {"yaw_gain", cfg.control.yaw_gain}};
    doc["runner"] = {
        {"node_cloud_target_points", cfg.node_cloud_target_points},
        {"icp_source_target_points", cfg.icp_source_target_points},
        {"see_integration_voxel_m", cfg.see_integration_voxel_m},
        {"grid_voxel_m", cfg.grid_voxel_m},
        {"relocalization_scan_budget", cfg.relocalization_scan_budget}};

    std::ofstream out(path);
    if (!out) throw IoError("config: cannot open for writing: " + path);
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("config: write failed: " + path);
}

const char* to_string(MissionStatus status) {
    switch (status) {
        case MissionStatus::Complete:
            return "complete";
        case MissionStatus::CompleteWithWarnings:
            return "complete_with_warnings";
        case MissionStatus::Resumable:
            return "resumable";
        case MissionStatus::RelocalizationTimeout:
            return "relocalization_timeout";
    }
    return "unknown";
}

}  // namespace aeromap
