#include "aeromap/planner.hpp"

#include "aeromap/neighbor_index.hpp"
#include "aeromap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>

namespace aeromap {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Wall-clock-free budget: the time allowance maps to a fixed number of
// sampling batches so identical inputs replay identically.
constexpr double kBatchesPerSecond = 8.0;
constexpr std::size_t kMaxNodes = 8192;
constexpr std::size_t kMaxRepairsPerBatch = 256;
constexpr int kStallBatchLimit = 5;

/// Point validity with the same sphere-vs-voxel predicate as
/// is_state_valid, accelerated by a kd-tree over occupied voxel centers.
class CollisionChecker {
public:
    CollisionChecker(const OccupancyGrid& grid, double clearance_m)
        : grid_(grid),
          clearance_(clearance_m),
          half_diag_(0.5 * std::sqrt(3.0) * grid.voxel_edge()) {
        std::vector<Vec3> centers;
        for (const auto& cell : grid.cells()) {
            if (cell.second != VoxelState::Occupied) continue;
            keys_.push_back(cell.first);
            centers.push_back(grid.voxel_center(cell.first));
        }
        index_ = NeighborIndex(std::move(centers));
    }

    bool valid(const Vec3& p) const {
        const double probe = clearance_ + half_diag_;
        const double edge = grid_.voxel_edge();
        const double clearance_sq = clearance_ * clearance_;
        for (const auto& nb : index_.radius_query(p, probe)) {
            const VoxelKey& key = keys_[nb.index];
            const Vec3 vmin =
                grid_.origin() + edge * Vec3(key.x, key.y, key.z);
            double dist_sq = 0.0;
            for (int a = 0; a < 3; ++a) {
                const double c =
                    std::min(std::max(p[a], vmin[a]), vmin[a] + edge);
                const double diff = p[a] - c;
                dist_sq += diff * diff;
            }
            if (dist_sq <= clearance_sq) return false;
        }
        return true;
    }

    bool segment_valid(const Vec3& a, const Vec3& b) const {
        const double step = 0.25 * grid_.voxel_edge();
        const double len = (b - a).norm();
        const int pieces = std::max(1, static_cast<int>(std::ceil(len / step)));
        for (int i = 0; i <= pieces; ++i) {
            const double t = static_cast<double>(i) / pieces;
            if (!valid(a + t * (b - a))) return false;
        }
        return true;
    }

private:
    const OccupancyGrid& grid_;
    double clearance_;
    double half_diag_;
    std::vector<VoxelKey> keys_;
    NeighborIndex index_;
};

using EdgeKey = std::pair<int, int>;

EdgeKey edge_key(int a, int b) {
    return a < b ? EdgeKey{a, b} : EdgeKey{b, a};
}

struct Graph {
    std::vector<Vec3> positions;
    std::vector<std::vector<std::pair<int, double>>> adjacency;

    int add(const Vec3& p) {
        positions.push_back(p);
        adjacency.emplace_back();
        return static_cast<int>(positions.size()) - 1;
    }

    void connect(int a, int b) {
        const double len = (positions[a] - positions[b]).norm();
        adjacency[a].emplace_back(b, len);
        adjacency[b].emplace_back(a, len);
    }
};

/// Cost-to-go from every node to `goal`, ignoring collision status of
/// unchecked edges. Admissible: dropping edges later only raises true costs.
std::vector<double> reverse_costs(const Graph& g, int goal,
                                  const std::set<EdgeKey>& invalid) {
    std::vector<double> dist(g.positions.size(), kInf);
    std::priority_queue<std::pair<double, int>,
                        std::vector<std::pair<double, int>>,
                        std::greater<>> open;
    dist[goal] = 0.0;
    open.emplace(0.0, goal);
    while (!open.empty()) {
        const auto [d, u] = open.top();
        open.pop();
        if (d > dist[u]) continue;
        for (const auto& [v, len] : g.adjacency[u]) {
            if (invalid.count(edge_key(u, v))) continue;
            const double nd = d + len;
            if (nd < dist[v]) {
                dist[v] = nd;
                open.emplace(nd, v);
            }
        }
    }
    return dist;
}

/// Forward A* from start ordered by g + h, skipping known-invalid edges.
/// Returns the node sequence or empty when the goal is unreachable.
std::vector<int> forward_search(const Graph& g, int start, int goal,
                                const std::vector<double>& h,
                                const std::set<EdgeKey>& invalid) {
    const std::size_t n = g.positions.size();
    std::vector<double> gcost(n, kInf);
    std::vector<int> parent(n, -1);
    std::priority_queue<std::pair<double, int>,
                        std::vector<std::pair<double, int>>,
                        std::greater<>> open;
    gcost[start] = 0.0;
    open.emplace(h[start], start);
    while (!open.empty()) {
        const auto [f, u] = open.top();
        open.pop();
        if (u == goal) break;
        if (f > gcost[u] + h[u] + 1e-12) continue;
        for (const auto& [v, len] : g.adjacency[u]) {
            if (h[v] == kInf) continue;
            if (invalid.count(edge_key(u, v))) continue;
            const double ng = gcost[u] + len;
            if (ng < gcost[v]) {
                gcost[v] = ng;
                parent[v] = u;
                open.emplace(ng + h[v], v);
            }
        }
    }
    if (gcost[goal] == kInf) return {};
    std::vector<int> path;
    for (int u = goal; u != -1; u = parent[u]) path.push_back(u);
    std::reverse(path.begin(), path.end());
    return path;
}

double path_length(const Graph& g, const std::vector<int>& path) {
    double len = 0.0;
    for (std::size_t i = 1; i < path.size(); ++i)
        len += (g.positions[path[i]] - g.positions[path[i - 1]]).norm();
    return len;
}

double connection_radius(double region_volume, std::size_t n) {
    const double spacing =
        std::cbrt(region_volume / static_cast<double>(std::max<std::size_t>(n, 1)));
    return std::max(2.0, 3.0 * spacing);
}

std::vector<PlanState> assemble_states(const Graph& g,
                                       const std::vector<int>& path,
                                       const PlanState& start,
                                       const PlanState& goal) {
    std::vector<double> cumulative(path.size(), 0.0);
    for (std::size_t i = 1; i < path.size(); ++i)
        cumulative[i] =
            cumulative[i - 1] +
            (g.positions[path[i]] - g.positions[path[i - 1]]).norm();
    const double total = cumulative.back();
    const double yaw_span = wrap_angle(goal.yaw - start.yaw);

    std::vector<PlanState> states;
    states.reserve(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) {
        PlanState s;
        s.position = g.positions[path[i]];
        const double fraction =
            total > 0.0 ? cumulative[i] / total
                        : (i + 1 == path.size() ? 1.0 : 0.0);
        s.yaw = wrap_angle(start.yaw + yaw_span * fraction);
        states.push_back(s);
    }
    states.front().yaw = start.yaw;
    states.back().yaw = goal.yaw;
    return states;
}

}  // namespace

PlanResult plan_path(const OccupancyGrid& grid, const PlanState& start,
                     const PlanState& goal, const PlanConfig& cfg) {
    const CollisionChecker checker(grid, cfg.clearance_m);
    if (!checker.valid(goal.position) || !checker.valid(start.position))
        return NoPath{NoPathReason::GoalInvalid, 0};

    Graph graph;
    const int start_id = graph.add(start.position);
    const int goal_id = graph.add(goal.position);
    const double straight = (goal.position - start.position).norm();

    std::set<EdgeKey> invalid;
    std::set<EdgeKey> verified;
    std::vector<int> best_path;
    double best_cost = kInf;
    std::vector<double> cost_history;
    std::size_t samples = 0;

    const auto try_accept = [&](const std::vector<int>& path) {
        const double cost = path_length(graph, path);
        if (cost < best_cost - 1e-12) {
            best_cost = cost;
            best_path = path;
            cost_history.push_back(cost);
            return true;
        }
        return false;
    };

    graph.connect(start_id, goal_id);
    if (checker.segment_valid(start.position, goal.position)) {
        verified.insert(edge_key(start_id, goal_id));
        try_accept({start_id, goal_id});
        // Straight line is a global lower bound; nothing can improve on it.
        PathPlan plan;
        plan.states = assemble_states(graph, best_path, start, goal);
        plan.length_m = best_cost;
        plan.iterations = 0;
        plan.cost_history = cost_history;
        return plan;
    }
    invalid.insert(edge_key(start_id, goal_id));

    const Vec3 extent = cfg.region.extent();
    const double volume =
        std::max(extent.x() * extent.y() * extent.z(), 1.0);
    const std::size_t batches = static_cast<std::size_t>(
        std::max(1.0, std::round(cfg.budget_s * kBatchesPerSecond)));
    Rng rng(cfg.seed);
    int stall = 0;

    for (std::size_t batch = 0; batch < batches; ++batch) {
        // Sampling phase: uniform over the region, restricted to the
        // informed set once a solution exists.
        const double r_conn =
            connection_radius(volume, graph.positions.size());
        std::size_t accepted = 0;
        std::size_t attempts = 0;
        const std::size_t attempt_cap = 16 * cfg.batch_size;
        NeighborIndex node_index(graph.positions);
        std::vector<int> fresh;
        while (accepted < cfg.batch_size && attempts < attempt_cap &&
               graph.positions.size() < kMaxNodes) {
            ++attempts;
            ++samples;
            Vec3 p(rng.uniform(cfg.region.min.x(), cfg.region.max.x()),
                   rng.uniform(cfg.region.min.y(), cfg.region.max.y()),
                   rng.uniform(cfg.region.min.z(), cfg.region.max.z()));
            if (best_cost < kInf) {
                const double through = (p - start.position).norm() +
                                       (goal.position - p).norm();
                if (through > best_cost) continue;
            }
            if (!checker.valid(p)) continue;
            ++accepted;
            fresh.push_back(graph.add(p));
        }
        for (int id : fresh) {
            const Vec3& p = graph.positions[id];
            for (const auto& nb : node_index.radius_query(p, r_conn))
                graph.connect(id, static_cast<int>(nb.index));
            // Later nodes of the same batch are absent from the index.
            for (int other : fresh) {
                if (other >= id) break;
                if ((graph.positions[other] - p).norm() <= r_conn)
                    graph.connect(id, other);
            }
        }

        // Search phase: candidate paths with lazy collision repair.
        const std::vector<double> h =
            reverse_costs(graph, goal_id, invalid);
        bool improved = false;
        for (std::size_t repair = 0; repair < kMaxRepairsPerBatch; ++repair) {
            const auto candidate =
                forward_search(graph, start_id, goal_id, h, invalid);
            if (candidate.empty()) break;
            if (path_length(graph, candidate) >= best_cost - 1e-12) break;
            bool all_valid = true;
            for (std::size_t i = 1; i < candidate.size(); ++i) {
                const EdgeKey key = edge_key(candidate[i - 1], candidate[i]);
                if (verified.count(key)) continue;
                if (checker.segment_valid(graph.positions[key.first],
                                          graph.positions[key.second])) {
                    verified.insert(key);
                } else {
                    invalid.insert(key);
                    all_valid = false;
                    break;
                }
            }
            if (all_valid) {
                improved = try_accept(candidate) || improved;
                break;
            }
        }

        stall = improved ? 0 : stall + 1;
        if (best_cost < kInf &&
            (best_cost <= straight * 1.001 || stall >= kStallBatchLimit))
            break;
        if (graph.positions.size() >= kMaxNodes && !improved) break;
    }

    if (best_path.empty()) return NoPath{NoPathReason::BudgetExhausted, samples};

    PathPlan plan;
    plan.states = assemble_states(graph, best_path, start, goal);
    plan.length_m = best_cost;
    plan.iterations = samples;
    plan.cost_history = cost_history;
    if (!validate_path(grid, plan.states, cfg.clearance_m,
                       0.25 * grid.voxel_edge()))
        return NoPath{NoPathReason::BudgetExhausted, samples};
    return plan;
}

std::vector<PlanState> segment_waypoints(const std::vector<PlanState>& states,
                                         double max_dist_m) {
    if (states.size() <= 1) return states;
    std::vector<PlanState> out;
    out.push_back(states.front());
    for (std::size_t i = 1; i < states.size(); ++i) {
        const PlanState& a = states[i - 1];
        const PlanState& b = states[i];
        const double len = (b.position - a.position).norm();
        const int pieces =
            std::max(1, static_cast<int>(std::ceil(len / max_dist_m)));
        const double yaw_span = wrap_angle(b.yaw - a.yaw);
        for (int k = 1; k < pieces; ++k) {
            const double t = static_cast<double>(k) / pieces;
            PlanState mid;
            mid.position = a.position + t * (b.position - a.position);
            mid.yaw = wrap_angle(a.yaw + yaw_span * t);
            out.push_back(mid);
        }
        out.push_back(b);
    }
    return out;
}

bool validate_path(const OccupancyGrid& grid,
                   const std::vector<PlanState>& states, double clearance_m,
                   double step_m) {
    if (states.empty()) return false;
    if (!is_state_valid(grid, states.front().position, clearance_m))
        return false;
    for (std::size_t i = 1; i < states.size(); ++i) {
        const Vec3& a = states[i - 1].position;
        const Vec3& b = states[i].position;
        const double len = (b - a).norm();
        const int pieces =
            std::max(1, static_cast<int>(std::ceil(len / step_m)));
        for (int k = 0; k <= pieces; ++k) {
            const double t = static_cast<double>(k) / pieces;
            if (!is_state_valid(grid, a + t * (b - a), clearance_m))
                return false;
        }
    }
    return true;
}

}  // namespace aeromap
