#pragma once

#include "aeromap/occupancy_grid.hpp"

#include <cstdint>
#include <variant>
#include <vector>

namespace aeromap {

struct PlanState {
    Vec3 position = Vec3::Zero();
    double yaw = 0.0;
};

struct PlanConfig {
    double budget_s = 10.0;
    double max_waypoint_m = 5.0;
    double clearance_m = 1.0;
    std::size_t batch_size = 256;
    std::uint64_t seed = 0;
    Aabb region{Vec3(-50.0, -50.0, 0.0), Vec3(50.0, 50.0, 30.0)};
};

struct PathPlan {
    std::vector<PlanState> states;
    double length_m = 0.0;
    std::size_t iterations = 0;  // samples drawn
    std::vector<double> cost_history;
};

enum class NoPathReason { GoalInvalid, BudgetExhausted };

struct NoPath {
    NoPathReason reason = NoPathReason::BudgetExhausted;
    std::size_t iterations = 0;
};

using PlanResult = std::variant<PathPlan, NoPath>;

/// Anytime sampling planner over the grid. Samples valid states in batches,
/// connects them into a geometric graph, and extracts shortest paths with
/// lazy edge collision checks ordered by a reverse-search heuristic. Once a
/// path exists, sampling is confined to the informed ellipsoid and the best
/// path only improves. The time budget maps to a fixed batch count so runs
/// are reproducible.
PlanResult plan_path(const OccupancyGrid& grid, const PlanState& start,
                     const PlanState& goal, const PlanConfig& cfg);

/// Splits long segments so consecutive waypoints are at most max_dist apart.
/// Original states are preserved exactly; inserted states interpolate
/// position and yaw (shortest angular arc).
std::vector<PlanState> segment_waypoints(const std::vector<PlanState>& states,
                                         double max_dist_m);

/// Re-checks every segment of a plan at the given step length. Used by tests
/// and by plan_path itself before returning, so lazy search internals can
/// never leak an invalid path.
bool validate_path(const OccupancyGrid& grid,
                   const std::vector<PlanState>& states, double clearance_m,
                   double step_m);

}  // namespace aeromap
