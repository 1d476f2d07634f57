#include "aeromap/evaluation.hpp"

#include "aeromap/neighbor_index.hpp"
#include "aeromap/rng.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace aeromap {

CoverageReport coverage(const PointCloud& individual,
                        const PointCloud& combined, double threshold_m) {
    if (individual.empty() || combined.empty())
        throw EmptyInput("coverage: empty cloud");

    const NeighborIndex index(individual.points);
    CoverageReport report;
    report.threshold_m = threshold_m;
    report.covered.resize(combined.size());
    const double threshold_sq = threshold_m * threshold_m;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < combined.size(); ++i) {
        const auto nn = index.k_nearest(combined.points[i], 1);
        const bool hit = !nn.empty() && nn.front().sq_dist <= threshold_sq;
        report.covered[i] = hit;
        if (hit) ++hits;
    }
    report.fraction =
        static_cast<double>(hits) / static_cast<double>(combined.size());
    return report;
}

AccuracyReport accuracy(const PointCloud& reference, const PointCloud& test,
                        double match_cap_m) {
    if (reference.empty() || test.empty())
        throw EmptyInput("accuracy: empty cloud");

    const NeighborIndex index(test.points);
    const double cap_sq = match_cap_m * match_cap_m;
    double sum = 0.0;
    std::size_t matched = 0;
    for (const Vec3& p : reference.points) {
        const auto nn = index.k_nearest(p, 1);
        if (nn.empty() || nn.front().sq_dist > cap_sq) continue;
        sum += std::sqrt(nn.front().sq_dist);
        ++matched;
    }
    if (matched == 0) throw NoMatches("accuracy: no matches within cap");

    AccuracyReport report;
    report.mean_error_m = sum / static_cast<double>(matched);
    report.matched_fraction =
        static_cast<double>(matched) / static_cast<double>(reference.size());
    report.match_cap_m = match_cap_m;
    return report;
}

namespace {

/// Pulls "key=value" fields out of a log line. Missing keys throw.
double field_value(const std::string& line, const std::string& key) {
    const std::string needle = key + "=";
    const auto pos = line.find(needle);
    if (pos == std::string::npos)
        throw MalformedLog("log: missing field '" + key + "': " + line);
    const char* start = line.c_str() + pos + needle.size();
    char* end = nullptr;
    const double v = std::strtod(start, &end);
    if (end == start)
        throw MalformedLog("log: unreadable field '" + key + "': " + line);
    return v;
}

}  // namespace

MissionStats trajectory_stats_from_lines(
    const std::vector<std::string>& lines) {
    MissionStats stats;
    bool airborne = false;
    bool have_pose = false;
    bool have_time = false;
    double first_t = 0.0;
    double last_t = 0.0;
    double last_tick_t = 0.0;
    Vec3 last_pos = Vec3::Zero();

    for (const std::string& line : lines) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string t_field, event;
        if (!(ss >> t_field >> event))
            throw MalformedLog("log: short line: " + line);
        if (t_field.rfind("t=", 0) != 0)
            throw MalformedLog("log: line without timestamp: " + line);
        const double t = field_value(line, "t");
        if (have_time && t < last_t - 1e-9)
            throw MalformedLog("log: timestamps move backwards: " + line);
        if (!have_time) first_t = t;
        have_time = true;
        last_t = t;

        if (event == "FLIGHT_START") {
            ++stats.flights;
            airborne = true;
            have_pose = false;
        } else if (event == "FLIGHT_END") {
            airborne = false;
        } else if (event == "CMD") {
            const Vec3 pos(field_value(line, "x"), field_value(line, "y"),
                           field_value(line, "z"));
            if (airborne && have_pose) {
                stats.travel_distance_m += (pos - last_pos).norm();
                stats.airborne_time_s += t - last_tick_t;
            }
            last_pos = pos;
            last_tick_t = t;
            have_pose = true;
        } else if (event == "VIEW_PLAN") {
            stats.view_planning_time_s += field_value(line, "dur");
        } else if (event == "PATH_PLAN") {
            stats.path_planning_time_s += field_value(line, "dur");
        }
    }
    if (!have_time) throw MalformedLog("log: no events");

    stats.mission_time_s = last_t - first_t;
    stats.average_speed_mps =
        stats.airborne_time_s > 0.0
            ? stats.travel_distance_m / stats.airborne_time_s
            : 0.0;
    return stats;
}

MissionStats trajectory_stats(const std::string& log_path) {
    std::ifstream in(log_path);
    if (!in) throw MalformedLog("log: cannot open: " + log_path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return trajectory_stats_from_lines(lines);
}

double trajectory_error(const std::vector<Pose>& estimated,
                        const std::vector<Pose>& ground_truth) {
    if (estimated.size() != ground_truth.size())
        throw LengthMismatch("trajectory_error: sequence lengths differ");
    if (estimated.empty())
        throw LengthMismatch("trajectory_error: empty sequences");

    const Pose align =
        compose(ground_truth.front(), inverse(estimated.front()));
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < estimated.size(); ++i) {
        const Vec3 err = compose(align, estimated[i]).translation -
                         ground_truth[i].translation;
        sum_sq += err.squaredNorm();
    }
    return std::sqrt(sum_sq / static_cast<double>(estimated.size()));
}

PointCloud sample_scene_surface(const Scene& scene, double points_per_m2,
                                std::uint64_t seed) {
    Rng rng(seed);
    PointCloud cloud;
    for (const Triangle& tri : scene.triangles) {
        const double expected = tri.area() * points_per_m2;
        std::size_t count = static_cast<std::size_t>(std::floor(expected));
        if (rng.uniform() < expected - static_cast<double>(count)) ++count;
        for (std::size_t i = 0; i < count; ++i) {
            double u = rng.uniform();
            double v = rng.uniform();
            if (u + v > 1.0) {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            cloud.points.push_back(tri.a + u * (tri.b - tri.a) +
                                   v * (tri.c - tri.a));
        }
    }
    return cloud;
}

}  // namespace aeromap
