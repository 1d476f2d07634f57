#pragma once

#include "aeromap/geometry.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>

namespace aeromap {

enum class VoxelState : std::uint8_t { Free = 0, Occupied = 1 };

struct VoxelKey {
    int x = 0;
    int y = 0;
    int z = 0;

    friend bool operator==(const VoxelKey& a, const VoxelKey& b) {
        return a.x == b.x && a.y == b.y && a.z == b.z;
    }
    friend bool operator!=(const VoxelKey& a, const VoxelKey& b) {
        return !(a == b);
    }
    friend bool operator<(const VoxelKey& a, const VoxelKey& b) {
        if (a.x != b.x) return a.x < b.x;
        if (a.y != b.y) return a.y < b.y;
        return a.z < b.z;
    }
};

/// Ternary voxel grid: voxels absent from the map are unknown. Stored states
/// only change through integrate_scan, and occupied never reverts to free.
class OccupancyGrid {
public:
    explicit OccupancyGrid(double voxel_edge_m = 0.5,
                           const Vec3& origin = Vec3::Zero());

    double voxel_edge() const { return edge_; }
    const Vec3& origin() const { return origin_; }

    VoxelKey key_for(const Vec3& position) const;
    Vec3 voxel_center(const VoxelKey& key) const;

    /// Absent keys report unknown via nullopt.
    std::optional<VoxelState> state_at(const VoxelKey& key) const;
    std::optional<VoxelState> state_at(const Vec3& position) const;

    std::size_t occupied_count() const;
    std::size_t known_count() const { return cells_.size(); }

    const std::map<VoxelKey, VoxelState>& cells() const { return cells_; }

    void mark_occupied(const VoxelKey& key) { cells_[key] = VoxelState::Occupied; }
    void mark_free_unless_occupied(const VoxelKey& key);

private:
    double edge_;
    Vec3 origin_;
    std::map<VoxelKey, VoxelState> cells_;
};

/// Carves free space along each sensor ray and marks endpoint voxels
/// occupied. Unknown voxels the rays never touch stay unknown.
void integrate_scan(OccupancyGrid& grid, const PointCloud& cloud,
                    const Vec3& sensor_origin);

/// Collision predicate: valid iff no occupied voxel comes within `clearance`
/// of the position. Unknown space counts as traversable.
bool is_state_valid(const OccupancyGrid& grid, const Vec3& position,
                    double clearance_m);

/// Writes one "x y z" line per occupied voxel center, sorted by key.
void export_occupied_voxels(const OccupancyGrid& grid,
                            const std::string& path);

}  // namespace aeromap
