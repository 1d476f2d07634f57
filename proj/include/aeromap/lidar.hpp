#pragma once

#include "aeromap/geometry.hpp"
#include "aeromap/scene.hpp"

#include <cstdint>
#include <optional>

namespace aeromap {

/// Spinning LiDAR described by its field of view and ray grid. Defaults are
/// a 360 x 104.2 degree panoramic unit with 600 x 64 rays at 10 Hz and a
/// 20 m range.
struct SensorModel {
    double horizontal_fov_deg = 360.0;
    double vertical_fov_deg = 104.2;
    int horizontal_resolution = 600;
    int vertical_resolution = 64;
    double max_range_m = 20.0;
    double range_noise_sigma_m = 0.0;
    double scan_rate_hz = 10.0;
};

/// Nearest intersection of a ray with the scene (triangles plus, when
/// enabled, the z = 0 ground plane). Returns the range along `dir`
/// (unit-length) or nothing if the ray misses within max_range.
std::optional<double> raycast(const Scene& scene, const Vec3& origin,
                              const Vec3& dir, double max_range);

/// One full scan from `sensor_pose`. Rays sweep the vertical fan for each
/// elevation row in turn: elevation rows bottom to top at vfov/(vres-1)
/// spacing, azimuth columns at hfov/hres spacing starting at -hfov/2.
/// Each ray that hits within max range contributes one point in the sensor
/// frame at the hit range perturbed by seeded Gaussian noise; misses are
/// omitted. Point coordinates are snapped to float32.
PointCloud simulate_scan(const Scene& scene, const Pose& sensor_pose,
                         const SensorModel& model, std::uint64_t seed);

}  // namespace aeromap
