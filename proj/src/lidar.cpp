#include "aeromap/lidar.hpp"

#include "aeromap/rng.hpp"

#include <cmath>

namespace aeromap {
namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
// Keeps grazing self-intersections at the origin out of the hit set.
constexpr double kMinRange = 1e-6;

/// Moller-Trumbore ray/triangle intersection; returns the ray parameter or
/// a negative value on miss.
double ray_triangle(const Vec3& origin, const Vec3& dir, const Triangle& tri) {
    const Vec3 e1 = tri.b - tri.a;
    const Vec3 e2 = tri.c - tri.a;
    const Vec3 pvec = dir.cross(e2);
    const double det = e1.dot(pvec);
    if (std::abs(det) < 1e-12) return -1.0;
    const double inv_det = 1.0 / det;
    const Vec3 tvec = origin - tri.a;
    const double u = tvec.dot(pvec) * inv_det;
    if (u < 0.0 || u > 1.0) return -1.0;
    const Vec3 qvec = tvec.cross(e1);
    const double v = dir.dot(qvec) * inv_det;
    if (v < 0.0 || u + v > 1.0) return -1.0;
    return e2.dot(qvec) * inv_det;
}

}  // namespace

std::optional<double> raycast(const Scene& scene, const Vec3& origin,
                              const Vec3& dir, double max_range) {
    double best = max_range;
    bool hit = false;
    for (const Triangle& tri : scene.triangles) {
        const double t = ray_triangle(origin, dir, tri);
        if (t > kMinRange && t <= best) {
            best = t;
            hit = true;
        }
    }
    if (scene.ground_plane && dir.z() != 0.0) {
        const double t = -origin.z() / dir.z();
        if (t > kMinRange && t <= best) {
            best = t;
            hit = true;
        }
    }
    if (!hit) return std::nullopt;
    return best;
}

PointCloud simulate_scan(const Scene& scene, const Pose& sensor_pose,
                         const SensorModel& model, std::uint64_t seed) {
    PointCloud cloud;
    Rng rng(seed);
    const Mat3 rot = sensor_pose.rotation_matrix();
    const Vec3 origin = sensor_pose.translation;

    const int vres = model.vertical_resolution;
    const int hres = model.horizontal_resolution;
    const double v_step =
        vres > 1 ? model.vertical_fov_deg / (vres - 1) : 0.0;
    const double h_step = model.horizontal_fov_deg / hres;
    cloud.points.reserve(static_cast<std::size_t>(vres) * hres);

    for (int vi = 0; vi < vres; ++vi) {
        const double elevation =
            (-0.5 * model.vertical_fov_deg + vi * v_step) * kDegToRad;
        const double cos_el = std::cos(elevation);
        const double sin_el = std::sin(elevation);
        for (int hi = 0; hi < hres; ++hi) {
            const double azimuth =
                (-0.5 * model.horizontal_fov_deg + hi * h_step) * kDegToRad;
            const Vec3 dir_sensor(cos_el * std::cos(azimuth),
                                  cos_el * std::sin(azimuth), sin_el);
            const auto range =
                raycast(scene, origin, rot * dir_sensor, model.max_range_m);
            if (!range) continue;
            double r = *range;
            if (model.range_noise_sigma_m > 0.0)
                r += rng.normal(0.0, model.range_noise_sigma_m);
            cloud.points.push_back(snap_f32(Vec3(r * dir_sensor)));
        }
    }
    return cloud;
}

}  // namespace aeromap
