#pragma once

#include "aeromap/geometry.hpp"
#include "aeromap/neighbor_index.hpp"

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace aeromap {

/// Local reference cloud assembly around the current pose: clouds from
/// nearby nodes, densely sampled close in and sparsely further out.
struct SubmapConfig {
    double inclusion_radius_m = 25.0;
    double dense_radius_m = 4.0;
    double dense_separation_m = 0.25;
    double sparse_separation_m = 2.0;
    std::size_t target_points = 30000;
};

struct IcpConfig {
    int max_iterations = 30;
    double translation_convergence_m = 0.01;
    double rotation_convergence_rad = 0.001;
    double max_correspondence_dist_m = 1.0;
    // Success criterion for callers that gate on match quality; scan-to-
    // submap odometry uses a smaller floor than loop-closure verification.
    std::size_t min_inliers = 500;
};

struct IcpResult {
    Pose transform;
    bool converged = false;
    // Set when fewer than 3 non-collinear correspondences were available;
    // transform is then the unmodified prior.
    bool degenerate = false;
    int iterations = 0;
    std::size_t inliers = 0;
    double rms_m = 0.0;
    // Two entries per iteration: rms over that iteration's correspondence
    // set before and after the alignment step. The post-step value never
    // exceeds the pre-step value (closed-form step is optimal for the set).
    std::vector<double> objective_history;
};

class EmptySubmap : public std::runtime_error {
public:
    EmptySubmap() : std::runtime_error("no nodes qualify for submap") {}
};

/// Reduces to exactly `target` points when the input is larger: a voxel
/// grid whose edge is bisected (at most 20 steps) until the occupied-voxel
/// count is the smallest achievable value >= target, keeping the point
/// nearest each voxel centroid, then a seeded uniform trim. Points keep
/// their input order; a cloud at or below target passes through unchanged.
PointCloud downsample(const PointCloud& cloud, std::size_t target,
                      std::uint64_t seed);

/// Keeps one point per voxel of the given edge (the point nearest the voxel
/// center, ties by lowest index), preserving input order. Unlike
/// downsample(), the voxel edge is fixed rather than solved for a target
/// count, which caps point density independent of the input size.
PointCloud thin_cloud(const PointCloud& cloud, double voxel_edge_m);

/// Union of node clouds (each transformed by its node pose) from poses
/// within the inclusion radius of `current`, greedily thinned in node order:
/// a node is skipped when a selected node lies closer than the dense
/// separation (inside the dense radius) or the sparse separation (outside).
/// The union is downsampled to the target count. Throws EmptySubmap when no
/// node qualifies.
PointCloud build_submap(const std::vector<std::pair<Pose, PointCloud>>& nodes,
                        const Pose& current, const SubmapConfig& cfg);

/// Point-to-point ICP: nearest-neighbor correspondences within the distance
/// cap, closed-form rigid alignment per iteration, convergence when both
/// per-iteration deltas drop below the configured thresholds. `prior` maps
/// source frame into target frame; the result transform does the same.
IcpResult icp_register(const PointCloud& source, const PointCloud& target,
                       const Pose& prior, const IcpConfig& cfg);

/// Same registration against a pre-indexed target; the hot path for
/// repeated scan-to-submap calls.
IcpResult icp_register(const PointCloud& source, const IndexedCloud& target,
                       const Pose& prior, const IcpConfig& cfg);

}  // namespace aeromap
