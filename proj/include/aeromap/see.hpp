#pragma once

#include "aeromap/geometry.hpp"
#include "aeromap/neighbor_index.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace aeromap {

/// apply_graph_update received a scan id with no delta.
class MissingDelta : public std::runtime_error {
public:
    explicit MissingDelta(const std::string& what)
        : std::runtime_error(what) {}
};

enum class PointClass : std::uint8_t { Outlier = 0, Frontier = 1, Core = 2 };

struct SeeConfig {
    double resolution_radius_m = 1.5;
    double target_density_pts_m3 = 5.0;
    double view_distance_m = 10.0;
    Aabb site_bounds;
    int max_attempts = 3;          // per-frontier cap before unobservable
    double eigenvalue_ratio = 0.05;  // thin-surface test threshold
    bool use_distribution_check = true;
    double min_view_height_m = 2.0;
    // Sensor envelope used when scoring candidate views.
    double sensor_max_range_m = 20.0;
    double sensor_vertical_fov_deg = 104.2;
    // Edge length of the integration lattice: at most one stored point per
    // grid voxel, ever, so local density measures surface coverage rather
    // than visit count. The saturated in-radius count of a plane thinned
    // this way is what the core threshold is judged against. 0 stores
    // everything.
    double dedup_voxel_m = 0.0;
    // After a view's scan lands, every active frontier this close to the
    // view that was lookable-at yet gained no nearby point advances its
    // attempt counter along with the target. Keeps sparse-by-nature fringes
    // (surface edges, creases) from demanding a separate flight per point.
    // 0 restricts the failure bookkeeping to the targeted frontier.
    double attempt_strike_m = 0.0;

    /// Minimum in-radius neighbor count for a core point: the target
    /// density integrated over the resolution-radius ball.
    std::size_t core_threshold() const;
};

struct SeePoint {
    Vec3 position;  // map frame, float32-snapped
    PointClass cls = PointClass::Outlier;
    std::int64_t scan_id = -1;
    bool unobservable = false;
    std::uint16_t attempts = 0;
};

struct View {
    Vec3 position = Vec3::Zero();
    double yaw = 0.0;
    std::int64_t target_frontier = -1;  // point index; -1 when untargeted
};

/// Cached per-frontier scoring data for select_nbv. `view` is the resolved
/// (attempt-indexed, unoccluded) candidate for the frontier. `frustum_count`
/// bounds the utility from above (range and fov filters only); `numerator`
/// is the full visibility-tested count, filled in on demand. Entries stay
/// valid until any point, class, flag or attempt counter changes, so
/// re-selection after a planner rejection costs a table lookup instead of a
/// full rescore.
struct NbvCacheEntry {
    std::size_t frontier = 0;
    View view;
    std::size_t frustum_count = 0;
    std::size_t numerator = 0;
    bool exact = false;
};

/// The mission planner's memory: every integrated measurement with its
/// class, the spatial index over them, per-scan capture positions (for
/// orienting surface normals), and the visited-view history. The two
/// version counters and the cache are derived data: they are never
/// serialized and only pair up select_nbv calls with the geometry they
/// scored against.
struct SeeState {
    SeeConfig config;
    std::vector<SeePoint> points;
    NeighborIndex index;
    std::map<std::int64_t, Vec3> capture_positions;
    std::vector<View> view_history;
    std::uint64_t geometry_version = 0;
    std::uint64_t nbv_cache_version = std::uint64_t(-1);
    std::vector<NbvCacheEntry> nbv_cache;
};

SeeState make_see_state(const SeeConfig& config);

/// Point indices currently classified frontier and not unobservable.
std::vector<std::size_t> active_frontiers(const SeeState& state);

/// True when no observable frontier remains (unobservable ones excluded).
bool mission_complete(const SeeState& state);

struct IntegrateResult {
    std::size_t first_new_index = 0;
    std::size_t added = 0;
};

/// Appends the cloud's points that fall inside the site bounding box,
/// records the capture position and view, and reclassifies the new points
/// plus every existing point within the resolution radius of one (classes
/// depend only on geometry, so points further away cannot change). With a
/// positive dedup radius, candidates closer than it to an already stored
/// point (or to one accepted earlier in the same call) are dropped, so
/// re-observing a surface does not inflate its measured density.
IntegrateResult integrate_cloud(SeeState& state, const PointCloud& cloud,
                                const View& capture);

/// Recomputes one point's class from scratch: core on the density and
/// thin-surface tests (neighbor count excludes the point itself; the
/// covariance includes it); otherwise frontier when some in-radius neighbor
/// is core; otherwise outlier.
PointClass classify_point(const SeeState& state, std::size_t point_id);

/// View at the configured distance along the local surface normal (the
/// smallest-eigenvector of the neighborhood covariance, oriented toward the
/// capture position of the frontier's source scan), clamped inside the
/// site box inflated by the view distance and above the minimum height.
/// Yaw faces the frontier: the horizontal projection of the inward normal,
/// or the bearing from the clamped view position when the normal is within
/// 10 degrees of vertical. Returns nothing on a degenerate normal (fewer
/// than 4 neighbors), incrementing the frontier's attempt counter.
std::optional<View> generate_view(SeeState& state, std::size_t frontier_id);

/// True when no map point lies within half the resolution radius of the
/// open segment from `from` to `target`, ignoring points within the full
/// radius of the target itself.
bool is_visible(const SeeState& state, const Vec3& from, const Vec3& target);

/// Returns a view of the frontier from an unobstructed direction. The
/// frontier's past attempt count is treated as soft occlusion: with n prior
/// attempts the first n workable candidates are skipped, so each retry
/// sweeps a genuinely different direction. Candidates are the proposed view
/// followed by 64 spiral directions on the view-distance sphere, ordered by
/// angle from the proposed direction. Marks the frontier unobservable and
/// returns nothing when no direction works or its attempts already reached
/// the cap.
std::optional<View> resolve_occlusion(SeeState& state,
                                      std::size_t frontier_id,
                                      const View& proposed);

/// Highest coverage-per-distance view over all active frontiers: each
/// frontier's generated view is scored by the number of frontier-or-outlier
/// points inside the sensor range and vertical fov that pass the visibility
/// test, divided by the travel distance from `current` (floored at 1 m).
/// Ties prefer the nearer view, then the lower frontier id. Returns nothing
/// when no active frontier remains (mission complete). Frontiers whose view
/// generation degenerates are skipped with their attempt counters advanced.
std::optional<View> select_nbv(SeeState& state, const Pose& current);

/// Moves every point (and capture position) by its source scan's pose
/// delta, then reclassifies all points as if newly added. Scan ids without
/// a delta raise MissingDelta.
void apply_graph_update(SeeState& state,
                        const std::map<std::int64_t, Pose>& deltas);

/// After flying a view and integrating its scan: when the target frontier
/// is still a frontier and nothing new landed within the resolution radius
/// of it, its attempt counter advances; at the cap it becomes unobservable.
void record_view_outcome(SeeState& state, const View& view,
                         std::size_t newly_added_near_target);

/// Binary state file (versioned): float32 point records with packed class,
/// flag and counter fields, capture positions, and the view history.
/// Round trips bit-exactly.
void export_state(const SeeState& state, const std::string& path);
SeeState import_state(const std::string& path, const SeeConfig& config);

}  // namespace aeromap
