#include "aeromap/occupancy_grid.hpp"

#include "aeromap/errors.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace aeromap {

OccupancyGrid::OccupancyGrid(double voxel_edge_m, const Vec3& origin)
    : edge_(voxel_edge_m), origin_(origin) {}

VoxelKey OccupancyGrid::key_for(const Vec3& position) const {
    return VoxelKey{
        static_cast<int>(std::floor((position.x() - origin_.x()) / edge_)),
        static_cast<int>(std::floor((position.y() - origin_.y()) / edge_)),
        static_cast<int>(std::floor((position.z() - origin_.z()) / edge_))};
}

Vec3 OccupancyGrid::voxel_center(const VoxelKey& key) const {
    return origin_ + edge_ * Vec3(key.x + 0.5, key.y + 0.5, key.z + 0.5);
}

std::optional<VoxelState> OccupancyGrid::state_at(const VoxelKey& key) const {
    const auto it = cells_.find(key);
    if (it == cells_.end()) return std::nullopt;
    return it->second;
}

std::optional<VoxelState> OccupancyGrid::state_at(const Vec3& position) const {
    return state_at(key_for(position));
}

std::size_t OccupancyGrid::occupied_count() const {
    std::size_t n = 0;
    for (const auto& cell : cells_)
        if (cell.second == VoxelState::Occupied) ++n;
    return n;
}

void OccupancyGrid::mark_free_unless_occupied(const VoxelKey& key) {
    auto [it, inserted] = cells_.emplace(key, VoxelState::Free);
    (void)it;
    (void)inserted;
}

namespace {

/// Voxel walk from `from` to `to` (Amanatides & Woo), calling visit on every
/// voxel strictly before the endpoint voxel.
template <typename Visit>
void walk_ray(const OccupancyGrid& grid, const Vec3& from, const Vec3& to,
              Visit&& visit) {
    VoxelKey cur = grid.key_for(from);
    const VoxelKey end = grid.key_for(to);
    if (cur == end) return;

    const Vec3 d = to - from;
    const double edge = grid.voxel_edge();
    int step[3];
    double t_max[3];
    double t_delta[3];
    const int cur_idx[3] = {cur.x, cur.y, cur.z};
    for (int a = 0; a < 3; ++a) {
        if (d[a] > 0.0) {
            step[a] = 1;
            const double bound = grid.origin()[a] + (cur_idx[a] + 1) * edge;
            t_max[a] = (bound - from[a]) / d[a];
            t_delta[a] = edge / d[a];
        } else if (d[a] < 0.0) {
            step[a] = -1;
            const double bound = grid.origin()[a] + cur_idx[a] * edge;
            t_max[a] = (bound - from[a]) / d[a];
            t_delta[a] = -edge / d[a];
        } else {
            step[a] = 0;
            t_max[a] = std::numeric_limits<double>::infinity();
            t_delta[a] = std::numeric_limits<double>::infinity();
        }
    }

    // Manhattan voxel distance bounds the number of boundary crossings.
    long guard = std::abs(end.x - cur.x) + std::abs(end.y - cur.y) +
                 std::abs(end.z - cur.z) + 3;
    while (cur != end && guard-- > 0) {
        visit(cur);
        int axis = 0;
        if (t_max[1] < t_max[axis]) axis = 1;
        if (t_max[2] < t_max[axis]) axis = 2;
        if (axis == 0)
            cur.x += step[0];
        else if (axis == 1)
            cur.y += step[1];
        else
            cur.z += step[2];
        t_max[axis] += t_delta[axis];
    }
}

}  // namespace

void integrate_scan(OccupancyGrid& grid, const PointCloud& cloud,
                    const Vec3& sensor_origin) {
    for (const Vec3& p : cloud.points) {
        walk_ray(grid, sensor_origin, p, [&](const VoxelKey& key) {
            grid.mark_free_unless_occupied(key);
        });
        grid.mark_occupied(grid.key_for(p));
    }
}

bool is_state_valid(const OccupancyGrid& grid, const Vec3& position,
                    double clearance_m) {
    const double edge = grid.voxel_edge();
    const VoxelKey lo = grid.key_for(position - Vec3::Constant(clearance_m));
    const VoxelKey hi = grid.key_for(position + Vec3::Constant(clearance_m));
    const double clearance_sq = clearance_m * clearance_m;
    for (int x = lo.x; x <= hi.x; ++x) {
        for (int y = lo.y; y <= hi.y; ++y) {
            for (int z = lo.z; z <= hi.z; ++z) {
                const VoxelKey key{x, y, z};
                const auto state = grid.state_at(key);
                if (!state || *state != VoxelState::Occupied) continue;
                const Vec3 vmin =
                    grid.origin() + edge * Vec3(key.x, key.y, key.z);
                double dist_sq = 0.0;
                for (int a = 0; a < 3; ++a) {
                    const double lo_a = vmin[a];
                    const double hi_a = vmin[a] + edge;
                    const double c =
                        std::min(std::max(position[a], lo_a), hi_a);
                    const double diff = position[a] - c;
                    dist_sq += diff * diff;
                }
                if (dist_sq <= clearance_sq) return false;
            }
        }
    }
    return true;
}

void export_occupied_voxels(const OccupancyGrid& grid,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("grid: cannot open for writing: " + path);
    char line[128];
    for (const auto& cell : grid.cells()) {
        if (cell.second != VoxelState::Occupied) continue;
        const Vec3 c = grid.voxel_center(cell.first);
        std::snprintf(line, sizeof(line), "%.9g %.9g %.9g\n", c.x(), c.y(),
                      c.z());
        out << line;
    }
    if (!out) throw IoError("grid: write failed: " + path);
}

}  // namespace aeromap
