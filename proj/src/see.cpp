#include "aeromap/see.hpp"

#include "aeromap/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

namespace aeromap {
namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr std::uint32_t kStateFormatVersion = 1;
// cos(10 deg): normals steeper than this are treated as vertical for yaw.
const double kNearVerticalCos = std::cos(10.0 * kPi / 180.0);

void rebuild_index(SeeState& state) {
    std::vector<Vec3> positions;
    positions.reserve(state.points.size());
    for (const SeePoint& p : state.points) positions.push_back(p.position);
    state.index = NeighborIndex(std::move(positions));
}

/// Density and thin-surface test for one indexed point. The neighbor count
/// excludes the point itself; the covariance includes it.
bool core_flag(const SeeState& state, std::size_t id) {
    const SeeConfig& cfg = state.config;
    // Index-ascending accumulation keeps the arithmetic identical to a
    // straight loop over all points, so results can be checked exactly.
    const auto nbrs = state.index.radius_indices(state.points[id].position,
                                                 cfg.resolution_radius_m);
    if (nbrs.size() < cfg.core_threshold() + 1) return false;
    if (!cfg.use_distribution_check) return true;

    Vec3 mean = Vec3::Zero();
    for (std::size_t nb : nbrs) mean += state.points[nb].position;
    mean /= static_cast<double>(nbrs.size());
    Mat3 cov = Mat3::Zero();
    for (std::size_t nb : nbrs) {
        const Vec3 d = state.points[nb].position - mean;
        cov += d * d.transpose();
    }
    cov /= static_cast<double>(nbrs.size());
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    const double largest = es.eigenvalues()(2);
    if (largest <= 1e-18) return false;
    return es.eigenvalues()(0) / largest <= cfg.eigenvalue_ratio;
}

void increment_attempts(SeeState& state, std::size_t id) {
    SeePoint& p = state.points[id];
    ++p.attempts;
    if (p.attempts >= state.config.max_attempts) p.unobservable = true;
}

/// Reclassifies `touched` (points whose neighborhoods changed): first the
/// geometry-determined core flags, then frontier/outlier for every non-core
/// point that either was touched or neighbors a core flip.
void reclassify(SeeState& state, std::vector<std::size_t> touched) {
    const double r = state.config.resolution_radius_m;
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());

    std::vector<char> affected_mark(state.points.size(), 0);
    std::vector<std::size_t> affected = touched;
    for (std::size_t id : touched) affected_mark[id] = 1;

    for (std::size_t id : touched) {
        const bool now_core = core_flag(state, id);
        const bool was_core = state.points[id].cls == PointClass::Core;
        if (now_core) {
            state.points[id].cls = PointClass::Core;
        } else if (was_core) {
            state.points[id].cls = PointClass::Outlier;  // settled below
        }
        if (now_core != was_core) {
            for (std::size_t nb :
                 state.index.radius_indices(state.points[id].position, r)) {
                if (!affected_mark[nb]) {
                    affected_mark[nb] = 1;
                    affected.push_back(nb);
                }
            }
        }
    }

    for (std::size_t id : affected) {
        if (state.points[id].cls == PointClass::Core) continue;
        bool has_core_neighbor = false;
        for (std::size_t nb :
             state.index.radius_indices(state.points[id].position, r)) {
            if (nb != id && state.points[nb].cls == PointClass::Core) {
                has_core_neighbor = true;
                break;
            }
        }
        state.points[id].cls =
            has_core_neighbor ? PointClass::Frontier : PointClass::Outlier;
    }
}

View snapped_view(const View& view) {
    View v = view;
    v.position = snap_f32(view.position);
    v.yaw = snap_f32(view.yaw);
    return v;
}

double view_yaw(const Vec3& outward_normal, const Vec3& view_position,
                const Vec3& frontier_position) {
    if (std::abs(outward_normal.z()) < kNearVerticalCos)
        return std::atan2(-outward_normal.y(), -outward_normal.x());
    const double dx = frontier_position.x() - view_position.x();
    const double dy = frontier_position.y() - view_position.y();
    if (std::hypot(dx, dy) < 1e-9) return 0.0;
    return std::atan2(dy, dx);
}

Vec3 clamp_view_position(const SeeConfig& cfg, const Vec3& raw) {
    Vec3 pos = cfg.site_bounds.inflated(cfg.view_distance_m).clamp(raw);
    pos.z() = std::max(pos.z(), cfg.min_view_height_m);
    return pos;
}

}  // namespace

std::size_t SeeConfig::core_threshold() const {
    const double volume = (4.0 / 3.0) * kPi * resolution_radius_m *
                          resolution_radius_m * resolution_radius_m;
    return static_cast<std::size_t>(
        std::ceil(target_density_pts_m3 * volume));
}

SeeState make_see_state(const SeeConfig& config) {
    SeeState state;
    state.config = config;
    return state;
}

std::vector<std::size_t> active_frontiers(const SeeState& state) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < state.points.size(); ++i) {
        if (state.points[i].cls == PointClass::Frontier &&
            !state.points[i].unobservable)
            out.push_back(i);
    }
    return out;
}

bool mission_complete(const SeeState& state) {
    for (const SeePoint& p : state.points)
        if (p.cls == PointClass::Frontier && !p.unobservable) return false;
    return true;
}

IntegrateResult integrate_cloud(SeeState& state, const PointCloud& cloud,
                                const View& capture) {
    IntegrateResult result;
    result.first_new_index = state.points.size();

    const double dedup = state.config.dedup_radius_m;
    // Grid hash over the accepted points of this batch so intra-batch
    // duplicates are also suppressed when dedup is on.
    std::unordered_map<std::uint64_t, std::vector<Vec3>> batch_cells;
    const auto cell_key = [dedup](const Vec3& p) {
        const auto q = [dedup](double v) {
            return static_cast<std::int64_t>(std::floor(v / dedup));
        };
        const std::uint64_t x = static_cast<std::uint64_t>(q(p.x()) + (1 << 20));
        const std::uint64_t y = static_cast<std::uint64_t>(q(p.y()) + (1 << 20));
        const std::uint64_t z = static_cast<std::uint64_t>(q(p.z()) + (1 << 20));
        return (x << 42) | (y << 21) | z;
    };
    const auto batch_has_near = [&](const Vec3& p) {
        const double sq = dedup * dedup;
        for (int dx = -1; dx <= 1; ++dx)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    const Vec3 shifted = p + dedup * Vec3(dx, dy, dz);
                    const auto it = batch_cells.find(cell_key(shifted));
                    if (it == batch_cells.end()) continue;
                    for (const Vec3& q : it->second)
                        if ((q - p).squaredNorm() <= sq) return true;
                }
        return false;
    };

    std::vector<std::size_t> new_ids;
    for (const Vec3& p : cloud.points) {
        if (!state.config.site_bounds.contains(p)) continue;
        const Vec3 snapped = snap_f32(p);
        if (dedup > 0.0) {
            if (!state.index.empty() &&
                state.index.radius_count(snapped, dedup) > 0)
                continue;
            if (batch_has_near(snapped)) continue;
            batch_cells[cell_key(snapped)].push_back(snapped);
        }
        SeePoint sp;
        sp.position = snapped;
        sp.scan_id = cloud.source_scan_id;
        new_ids.push_back(state.points.size());
        state.points.push_back(sp);
    }
    result.added = new_ids.size();
    if (new_ids.empty()) return result;

    ++state.geometry_version;
    state.capture_positions[cloud.source_scan_id] = snap_f32(capture.position);
    state.view_history.push_back(snapped_view(capture));
    rebuild_index(state);

    std::vector<std::size_t> touched = new_ids;
    const double r = state.config.resolution_radius_m;
    for (std::size_t id : new_ids) {
        for (std::size_t nb :
             state.index.radius_indices(state.points[id].position, r))
            touched.push_back(nb);
    }
    reclassify(state, std::move(touched));
    return result;
}

PointClass classify_point(const SeeState& state, std::size_t point_id) {
    if (core_flag(state, point_id)) return PointClass::Core;
    const double r = state.config.resolution_radius_m;
    for (std::size_t nb : state.index.radius_indices(
             state.points[point_id].position, r)) {
        if (nb != point_id && state.points[nb].cls == PointClass::Core)
            return PointClass::Frontier;
    }
    return PointClass::Outlier;
}

std::optional<View> generate_view(SeeState& state, std::size_t frontier_id) {
    const SeeConfig& cfg = state.config;
    const SeePoint& p = state.points[frontier_id];
    const auto nbrs =
        state.index.radius_indices(p.position, cfg.resolution_radius_m);
    if (nbrs.size() < 5) {  // self plus at least 4 neighbors
        increment_attempts(state, frontier_id);
        return std::nullopt;
    }

    Vec3 mean = Vec3::Zero();
    for (std::size_t nb : nbrs) mean += state.points[nb].position;
    mean /= static_cast<double>(nbrs.size());
    Mat3 cov = Mat3::Zero();
    for (std::size_t nb : nbrs) {
        const Vec3 d = state.points[nb].position - mean;
        cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    Vec3 normal = es.eigenvectors().col(0);

    Vec3 capture = p.position + Vec3::UnitZ();
    const auto it = state.capture_positions.find(p.scan_id);
    if (it != state.capture_positions.end()) capture = it->second;
    if (normal.dot(capture - p.position) < 0.0) normal = -normal;

    View view;
    view.position =
        clamp_view_position(cfg, p.position + cfg.view_distance_m * normal);
    view.yaw = view_yaw(normal, view.position, p.position);
    view.target_frontier = static_cast<std::int64_t>(frontier_id);
    return view;
}

bool is_visible(const SeeState& state, const Vec3& from, const Vec3& target) {
    const double r = state.config.resolution_radius_m;
    const double r_sq = r * r;
    return !state.index.any_point_near_segment(
        from, target, 0.5 * r, [&](std::size_t idx) {
            return (state.points[idx].position - target).squaredNorm() <= r_sq;
        });
}

std::optional<View> resolve_occlusion(SeeState& state,
                                      std::size_t frontier_id,
                                      const View& proposed) {
    const SeeConfig& cfg = state.config;
    SeePoint& p = state.points[frontier_id];
    if (p.attempts >= static_cast<std::uint16_t>(cfg.max_attempts)) {
        p.unobservable = true;
        return std::nullopt;
    }
    // Past failures count as soft occlusion: each retry sweeps onward
    // through the candidate directions instead of re-flying the identical
    // view, which on exactly planar surfaces can graze forever.
    std::size_t skip = p.attempts;
    if (skip == 0 && is_visible(state, proposed.position, p.position))
        return proposed;

    Vec3 ref = proposed.position - p.position;
    ref = ref.norm() > 1e-9 ? Vec3(ref.normalized()) : Vec3(Vec3::UnitZ());

    // Fibonacci sphere: 64 near-uniform directions, tried closest-first to
    // the originally proposed direction.
    constexpr int kDirections = 64;
    const double golden_angle = kPi * (3.0 - std::sqrt(5.0));
    std::vector<std::pair<double, int>> order;
    std::vector<Vec3> dirs(kDirections);
    order.reserve(kDirections);
    for (int k = 0; k < kDirections; ++k) {
        const double z = 1.0 - 2.0 * (k + 0.5) / kDirections;
        const double planar = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = k * golden_angle;
        dirs[k] = Vec3(planar * std::cos(phi), planar * std::sin(phi), z);
        order.emplace_back(std::acos(std::clamp(dirs[k].dot(ref), -1.0, 1.0)),
                           k);
    }
    std::sort(order.begin(), order.end());

    for (const auto& entry : order) {
        const Vec3& dir = dirs[entry.second];
        const Vec3 pos =
            clamp_view_position(cfg, p.position + cfg.view_distance_m * dir);
        if (!is_visible(state, pos, p.position)) continue;
        if (skip > 0) {
            --skip;
            continue;
        }
        View view;
        view.position = pos;
        view.yaw = view_yaw(dir, pos, p.position);
        view.target_frontier = static_cast<std::int64_t>(frontier_id);
        return view;
    }
    p.unobservable = true;
    return std::nullopt;
}

namespace {

/// Frontier and outlier positions pulled out once per selection, with their
/// own index, so candidate views count against this short list instead of
/// scanning the whole cloud.
struct UtilityField {
    std::vector<Vec3> positions;
    NeighborIndex index;
};

UtilityField countable_field(const SeeState& state) {
    UtilityField field;
    for (const SeePoint& p : state.points)
        if (p.cls != PointClass::Core) field.positions.push_back(p.position);
    field.index = NeighborIndex(field.positions);
    return field;
}

/// Countable points inside the sensor range and vertical frustum of a view,
/// before the visibility filter.
std::vector<Vec3> frustum_points(const SeeState& state,
                                 const UtilityField& field, const View& view) {
    const SeeConfig& cfg = state.config;
    const double vfov_half =
        0.5 * cfg.sensor_vertical_fov_deg * kPi / 180.0;
    const double sq_range = cfg.sensor_max_range_m * cfg.sensor_max_range_m;
    std::vector<Vec3> out;
    for (const Vec3& pos : field.positions) {
        const Vec3 d = pos - view.position;
        if (d.squaredNorm() > sq_range) continue;
        const double elevation =
            std::atan2(d.z(), std::hypot(d.x(), d.y()));
        if (std::abs(elevation) > vfov_half) continue;
        out.push_back(pos);
    }
    return out;
}

}  // namespace

namespace {

bool frontier_active(const SeeState& state, std::size_t id) {
    const SeePoint& p = state.points[id];
    return p.cls == PointClass::Frontier && !p.unobservable;
}

}  // namespace

std::optional<View> select_nbv(SeeState& state, const Pose& current) {
    // The cache is keyed to the geometry: while no point is added, moved,
    // or reclassified, every frontier's view and utility numerator are
    // constants and only the travel-distance denominators change. The
    // attempt bookkeeping for degenerate frontiers is replayed on cached
    // calls so their counters advance exactly as a full pass would.
    std::optional<UtilityField> field;
    const auto ensure_field = [&]() -> const UtilityField& {
        if (!field) field = countable_field(state);
        return *field;
    };

    if (state.nbv_cache_version != state.geometry_version) {
        state.nbv_cache.clear();
        for (std::size_t f : active_frontiers(state)) {
            NbvCacheEntry e;
            e.frontier = f;
            const auto view = generate_view(state, f);
            if (!view) {
                e.degenerate = true;
            } else {
                e.view = *view;
                e.frustum_count =
                    frustum_points(state, ensure_field(), *view).size();
            }
            state.nbv_cache.push_back(e);
        }
        state.nbv_cache_version = state.geometry_version;
    } else {
        for (const NbvCacheEntry& e : state.nbv_cache)
            if (e.degenerate && frontier_active(state, e.frontier))
                increment_attempts(state, e.frontier);
    }

    struct Live {
        NbvCacheEntry* entry = nullptr;
        double dist = 0.0;
        double denom = 1.0;
    };
    std::vector<Live> live;
    live.reserve(state.nbv_cache.size());
    for (NbvCacheEntry& e : state.nbv_cache) {
        if (e.degenerate || !frontier_active(state, e.frontier)) continue;
        Live l;
        l.entry = &e;
        l.dist = (current.translation - e.view.position).norm();
        l.denom = std::max(l.dist, 1.0);
        live.push_back(l);
    }
    if (live.empty()) return std::nullopt;

    // Resolve numerators lazily: a candidate needs its visibility count
    // only while its frustum-count upper bound could still displace the
    // best exact score (ties included, since those fall to distance and id
    // which are already known). Each entry is resolved at most once per
    // geometry epoch, across all calls.
    for (;;) {
        const Live* best = nullptr;
        double best_score = 0.0;
        for (const Live& l : live) {
            if (!l.entry->exact) continue;
            const double s =
                static_cast<double>(l.entry->numerator) / l.denom;
            const bool better =
                !best || s > best_score ||
                (s == best_score &&
                 (l.dist < best->dist ||
                  (l.dist == best->dist &&
                   l.entry->frontier < best->entry->frontier)));
            if (better) {
                best = &l;
                best_score = s;
            }
        }
        Live* contender = nullptr;
        double contender_upper = 0.0;
        for (Live& l : live) {
            if (l.entry->exact) continue;
            const double upper =
                static_cast<double>(l.entry->frustum_count) / l.denom;
            if (best) {
                if (upper < best_score) continue;
                if (upper == best_score) {
                    const bool tie_wins =
                        l.dist < best->dist ||
                        (l.dist == best->dist &&
                         l.entry->frontier < best->entry->frontier);
                    if (!tie_wins) continue;
                }
            }
            const bool ahead =
                !contender || upper > contender_upper ||
                (upper == contender_upper &&
                 l.entry->frontier < contender->entry->frontier);
            if (ahead) {
                contender = &l;
                contender_upper = upper;
            }
        }
        if (!contender) {
            if (!best) return std::nullopt;
            return best->entry->view;
        }
        const std::vector<Vec3> in_frustum =
            frustum_points(state, ensure_field(), contender->entry->view);
        std::size_t visible = 0;
        for (const Vec3& pos : in_frustum)
            if (is_visible(state, contender->entry->view.position, pos))
                ++visible;
        contender->entry->numerator = visible;
        contender->entry->exact = true;
    }
}

void apply_graph_update(SeeState& state,
                        const std::map<std::int64_t, Pose>& deltas) {
    for (SeePoint& p : state.points) {
        const auto it = deltas.find(p.scan_id);
        if (it == deltas.end())
            throw MissingDelta("see: no delta for scan " +
                               std::to_string(p.scan_id));
        p.position = snap_f32(it->second.apply(p.position));
    }
    for (auto& entry : state.capture_positions) {
        const auto it = deltas.find(entry.first);
        if (it == deltas.end())
            throw MissingDelta("see: no delta for scan " +
                               std::to_string(entry.first));
        entry.second = snap_f32(it->second.apply(entry.second));
    }
    rebuild_index(state);

    ++state.geometry_version;
    std::vector<std::size_t> all(state.points.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    reclassify(state, std::move(all));
}

void record_view_outcome(SeeState& state, const View& view,
                         std::size_t newly_added_near_target) {
    if (view.target_frontier < 0) return;
    const std::size_t id = static_cast<std::size_t>(view.target_frontier);
    if (id >= state.points.size()) return;
    if (state.points[id].cls == PointClass::Frontier &&
        newly_added_near_target == 0)
        increment_attempts(state, id);
}

namespace {

template <typename T>
void write_raw(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_raw(std::istream& in, T& value) {
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw IoError("see: truncated state file");
}

}  // namespace

void export_state(const SeeState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("see: cannot open for writing: " + path);

    write_raw(out, kStateFormatVersion);
    write_raw(out, static_cast<std::uint64_t>(state.points.size()));
    for (const SeePoint& p : state.points) {
        write_raw(out, static_cast<float>(p.position.x()));
        write_raw(out, static_cast<float>(p.position.y()));
        write_raw(out, static_cast<float>(p.position.z()));
        write_raw(out, static_cast<std::uint8_t>(p.cls));
        write_raw(out, static_cast<std::uint8_t>(p.unobservable ? 1 : 0));
        write_raw(out, p.attempts);
        write_raw(out, p.scan_id);
    }
    write_raw(out, static_cast<std::uint64_t>(state.capture_positions.size()));
    for (const auto& entry : state.capture_positions) {
        write_raw(out, entry.first);
        write_raw(out, static_cast<float>(entry.second.x()));
        write_raw(out, static_cast<float>(entry.second.y()));
        write_raw(out, static_cast<float>(entry.second.z()));
    }
    write_raw(out, static_cast<std::uint64_t>(state.view_history.size()));
    for (const View& v : state.view_history) {
        write_raw(out, static_cast<float>(v.position.x()));
        write_raw(out, static_cast<float>(v.position.y()));
        write_raw(out, static_cast<float>(v.position.z()));
        write_raw(out, static_cast<float>(v.yaw));
        write_raw(out, v.target_frontier);
    }
    if (!out) throw IoError("see: write failed: " + path);
}

SeeState import_state(const std::string& path, const SeeConfig& config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("see: cannot open: " + path);

    std::uint32_t version = 0;
    read_raw(in, version);
    if (version != kStateFormatVersion)
        throw FormatVersionMismatch("see: unsupported state format version");

    SeeState state = make_see_state(config);
    std::uint64_t n_points = 0;
    read_raw(in, n_points);
    state.points.reserve(n_points);
    for (std::uint64_t i = 0; i < n_points; ++i) {
        float x, y, z;
        std::uint8_t cls, unobservable;
        SeePoint p;
        read_raw(in, x);
        read_raw(in, y);
        read_raw(in, z);
        read_raw(in, cls);
        read_raw(in, unobservable);
        read_raw(in, p.attempts);
        read_raw(in, p.scan_id);
        p.position = Vec3(x, y, z);
        p.cls = static_cast<PointClass>(cls);
        p.unobservable = unobservable != 0;
        state.points.push_back(p);
    }
    std::uint64_t n_captures = 0;
    read_raw(in, n_captures);
    for (std::uint64_t i = 0; i < n_captures; ++i) {
        std::int64_t scan_id;
        float x, y, z;
        read_raw(in, scan_id);
        read_raw(in, x);
        read_raw(in, y);
        read_raw(in, z);
        state.capture_positions[scan_id] = Vec3(x, y, z);
    }
    std::uint64_t n_views = 0;
    read_raw(in, n_views);
    for (std::uint64_t i = 0; i < n_views; ++i) {
        float x, y, z, yaw;
        View v;
        read_raw(in, x);
        read_raw(in, y);
        read_raw(in, z);
        read_raw(in, yaw);
        read_raw(in, v.target_frontier);
        v.position = Vec3(x, y, z);
        v.yaw = yaw;
        state.view_history.push_back(v);
    }
    rebuild_index(state);
    return state;
}

}  // namespace aeromap
