#include "aeromap/mission.hpp"

#include "aeromap/errors.hpp"
#include "aeromap/ply.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace aeromap {
namespace {

namespace fs = std::filesystem;

struct TrajectoryRow {
    double t = 0.0;
    Pose est;
    Pose gt;
};

std::vector<TrajectoryRow> load_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("evaluate: cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw ParseError("evaluate: empty trajectory file " + path);
    if (line.rfind("t,", 0) != 0)
        throw ParseError("evaluate: unexpected trajectory header: " + line);

    std::vector<TrajectoryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        double v[9];
        std::size_t pos = 0;
        for (int i = 0; i < 9; ++i) {
            const std::size_t next = line.find(',', pos);
            const std::string field =
                line.substr(pos, next == std::string::npos
                                     ? std::string::npos
                                     : next - pos);
            char* end = nullptr;
            v[i] = std::strtod(field.c_str(), &end);
            if (end == field.c_str())
                throw ParseError("evaluate: bad trajectory row: " + line);
            if (i < 8) {
                if (next == std::string::npos)
                    throw ParseError("evaluate: short trajectory row: " +
                                     line);
                pos = next + 1;
            }
        }
        TrajectoryRow row;
        row.t = v[0];
        row.est = Pose::from_xyz_yaw(Vec3(v[1], v[2], v[3]), v[4]);
        row.gt = Pose::from_xyz_yaw(Vec3(v[5], v[6], v[7]), v[8]);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

EvaluationReport evaluate_mission(const std::string& mission_dir,
                                  const std::string& scene_path,
                                  double coverage_threshold_m) {
    const fs::path dir(mission_dir);
    const Scene scene = load_scene(scene_path);
    const PointCloud map = load_ply((dir / "map.ply").string());
    const PointCloud reference = sample_scene_surface(scene, 100.0, 0);

    EvaluationReport report;
    report.map_points = map.size();
    report.reference_points = reference.size();
    report.coverage = coverage(map, reference, coverage_threshold_m);
    report.accuracy = accuracy(reference, map, 1.0);
    report.stats = trajectory_stats((dir / "mission.log").string());

    const auto rows = load_trajectory((dir / "trajectory.csv").string());
    if (rows.size() >= 2) {
        std::vector<Pose> est, gt;
        est.reserve(rows.size());
        gt.reserve(rows.size());
        for (const TrajectoryRow& r : rows) {
            est.push_back(r.est);
            gt.push_back(r.gt);
        }
        report.trajectory_rmse_m = trajectory_error(est, gt);
    }

    std::ofstream out(dir / "metrics.txt");
    if (!out) throw IoError("evaluate: cannot write metrics.txt");
    char line[160];
    const auto put = [&](const char* key, double value) {
        std::snprintf(line, sizeof line, "%s=%.9g\n", key, value);
        out << line;
    };
    put("coverage_fraction", report.coverage.fraction);
    put("coverage_threshold_m", report.coverage.threshold_m);
    put("accuracy_mean_m", report.accuracy.mean_error_m);
    put("accuracy_matched_fraction", report.accuracy.matched_fraction);
    put("travel_distance_m", report.stats.travel_distance_m);
    put("mission_time_s", report.stats.mission_time_s);
    put("airborne_time_s", report.stats.airborne_time_s);
    put("average_speed_mps", report.stats.average_speed_mps);
    put("view_planning_time_s", report.stats.view_planning_time_s);
    put("path_planning_time_s", report.stats.path_planning_time_s);
    put("flights", report.stats.flights);
    put("trajectory_rmse_m", report.trajectory_rmse_m);
    put("map_points", static_cast<double>(report.map_points));
    put("reference_points", static_cast<double>(report.reference_points));
    return report;
}

void export_mission(const std::string& mission_dir,
                    const std::string& format) {
    const fs::path dir(mission_dir);
    const PointCloud map = load_ply((dir / "map.ply").string());
    if (format == "ply") {
        save_ply((dir / "map_export.ply").string(), map, PlyFormat::Ascii);
        return;
    }
    if (format == "csv") {
        std::ofstream out(dir / "map_export.csv");
        if (!out) throw IoError("export: cannot write map_export.csv");
        out << "x,y,z\n";
        char line[128];
        for (const Vec3& p : map.points) {
            std::snprintf(line, sizeof line, "%.9g,%.9g,%.9g\n", p.x(),
                          p.y(), p.z());
            out << line;
        }
        return;
    }
    throw ValidationError("export: unknown format '" + format +
                          "' (expected ply or csv)");
}

}  // namespace aeromap
