#pragma once

#include "aeromap/geometry.hpp"
#include "aeromap/registration.hpp"

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

namespace aeromap {

/// Quantizes to 9 significant decimal digits, the session file precision.
/// Graph poses and factors are snapped to this grid when they enter the
/// graph, so saving and reloading a session reproduces them bit-exactly.
inline double snap9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return std::strtod(buf, nullptr);
}

inline Pose snap9(const Pose& p) {
    return Pose(Quat(snap9(p.rotation.w()), snap9(p.rotation.x()),
                     snap9(p.rotation.y()), snap9(p.rotation.z())),
                Vec3(snap9(p.translation.x()), snap9(p.translation.y()),
                     snap9(p.translation.z())));
}

enum class FactorKind { Odometry, LoopClosure, Relocalization };

/// Relative-pose constraint: `relative` maps the `to` node's sensor frame
/// into the `from` node's sensor frame. Weight scales the squared residual.
struct Factor {
    FactorKind kind = FactorKind::Odometry;
    int from_id = -1;
    int to_id = -1;
    Pose relative;
    double weight = 1.0;
};

struct GraphNode {
    int id = -1;
    Pose pose;       // map frame, updated by optimize()
    Pose odom_pose;  // accumulated odometry frame; not persisted
    PointCloud cloud;  // sensor frame
    int session = 0;
};

struct PoseGraphConfig {
    double node_interval_m = 1.0;
    double odometry_weight = 1.0;
    double loop_closure_weight = 2.0;
    double relocalization_weight = 2.0;
};

struct LoopClosureConfig {
    double detection_radius_m = 3.0;
    std::size_t min_inliers = 5000;
    int exclusion_window = 10;
};

struct PoseGraph {
    PoseGraphConfig config;
    std::vector<GraphNode> nodes;
    std::vector<Factor> factors;
    // Maps the odometry frame of the current session into the map frame;
    // refreshed by optimize() from the latest node.
    Pose frame_correction;
    int session_count = 1;

    int current_session() const { return session_count - 1; }
    void begin_new_session() { ++session_count; }
};

/// Appends a node when the relative displacement since the session's last
/// node reaches the node interval, or unconditionally when forced or when
/// the session has no node yet (the relative pose is then taken as the
/// node's absolute map pose). Returns the new id, or nothing when skipped.
/// Non-first nodes gain an odometry factor to their predecessor.
std::optional<int> add_node(PoseGraph& graph, const Pose& relative,
                            const PointCloud& cloud, bool force);

/// Snaps the factor onto the serialization grid and appends it.
void add_factor(PoseGraph& graph, Factor factor);

/// Nodes within the detection radius of the query node's pose, excluding
/// the query and any same-session node within `exclusion_window` positions
/// of it in insertion order. Sorted nearest first, ties by lowest id.
std::vector<int> detect_loop_candidates(const PoseGraph& graph, int node_id,
                                        const LoopClosureConfig& cfg);

struct LoopVerification {
    enum class Reason { None, NotConverged, TooFewInliers };
    bool accepted = false;
    Reason reason = Reason::None;
    Factor factor;  // valid when accepted
    IcpResult icp;
};

/// ICP between the two node clouds seeded by the current graph-relative
/// pose. Accepts when ICP converges with at least min(cfg.min_inliers,
/// 20% of the source cloud) inliers; the returned factor links from -> to
/// with the refined relative pose.
LoopVerification verify_loop(const PoseGraph& graph, int from_id, int to_id,
                             const LoopClosureConfig& cfg,
                             const IcpConfig& icp_cfg);

struct OptimizeReport {
    bool converged = false;
    int iterations = 0;
    double initial_cost = 0.0;
    double final_cost = 0.0;
};

/// Weighted nonlinear least squares over node poses: translation residual
/// as a vector, rotation residual as the log of the relative rotation
/// error. Gauss-Newton steps with Levenberg damping on non-decreasing cost;
/// the first node of the first session is held fixed, as is any node with
/// no incident factor. Stops when the largest pose update falls below 1e-6
/// (meters and radians) or after 100 iterations; the report's converged
/// flag records which. Updates the frame correction from the latest node.
OptimizeReport optimize(PoseGraph& graph);

/// Union of all node clouds transformed by their current optimized poses.
PointCloud aggregate_map(const PoseGraph& graph);

/// Session directory: graph.g2o (VERTEX_SE3:QUAT and EDGE_SE3:QUAT records
/// at 9 significant digits, relocalization edges tagged by a comment line),
/// clouds/<node_id>.ply, and a meta JSON document (format_version, session
/// count and boundaries, frame correction, node scan ids).
void save_session(const PoseGraph& graph, const std::string& dir);

/// Inverse of save_session; the round trip is bit-exact for poses, factors,
/// clouds, and session ids. Node odometry poses are re-anchored to the
/// loaded map poses (a resumed session re-bases its odometry frame at
/// relocalization). IoError when the directory was not written by
/// save_session; FormatVersionMismatch on a version other than 1.
PoseGraph load_session(const std::string& dir);

}  // namespace aeromap
