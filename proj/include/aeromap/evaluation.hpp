#pragma once

#include "aeromap/geometry.hpp"
#include "aeromap/scene.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace aeromap {

class EmptyInput : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class NoMatches : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class MalformedLog : public std::runtime_error {
    using std::runtime_error::runtime_error;
};
class LengthMismatch : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CoverageReport {
    double fraction = 0.0;
    double threshold_m = 0.0;
    std::vector<bool> covered;  // one flag per combined-map point
};

struct AccuracyReport {
    double mean_error_m = 0.0;
    double matched_fraction = 0.0;
    double match_cap_m = 0.0;
};

struct MissionStats {
    double travel_distance_m = 0.0;
    double mission_time_s = 0.0;
    double airborne_time_s = 0.0;
    double average_speed_mps = 0.0;  // travel distance / airborne time
    double view_planning_time_s = 0.0;
    double path_planning_time_s = 0.0;
    int flights = 0;
};

/// Fraction of combined-map points with a mapped point within threshold.
CoverageReport coverage(const PointCloud& individual,
                        const PointCloud& combined,
                        double threshold_m = 0.10);

/// Mean nearest-neighbor distance from reference points into the test
/// cloud, counting only matches within the cap. The matched fraction
/// reports how much of the reference found a match at all.
AccuracyReport accuracy(const PointCloud& reference, const PointCloud& test,
                        double match_cap_m = 1.0);

/// Parses a mission log (see mission.hpp for the line format) into distance
/// and time-bucket statistics.
MissionStats trajectory_stats(const std::string& log_path);
MissionStats trajectory_stats_from_lines(const std::vector<std::string>& lines);

/// Translation RMSE between two equal-length pose sequences after rigidly
/// aligning the first poses.
double trajectory_error(const std::vector<Pose>& estimated,
                        const std::vector<Pose>& ground_truth);

/// Uniform area-weighted surface sampling of a scene at the given density.
/// Used as the reference map for coverage and accuracy in simulation.
PointCloud sample_scene_surface(const Scene& scene,
                                double points_per_m2 = 100.0,
                                std::uint64_t seed = 0);

}  // namespace aeromap
