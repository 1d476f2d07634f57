#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <vector>

namespace aeromap {

using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;
using Mat3 = Eigen::Matrix3d;

/// Rigid transform in 3D: rotation (unit quaternion) + translation in meters.
/// Applies as p' = rotation * p + translation.
///
/// The raw constructor trusts its inputs so that deserialized poses keep
/// their exact stored bits; compositions renormalize their result.
struct Pose {
    Quat rotation = Quat::Identity();
    Vec3 translation = Vec3::Zero();

    Pose() = default;
    Pose(const Quat& q, const Vec3& t) : rotation(q), translation(t) {}

    static Pose identity() { return Pose(); }

    /// Builds a pose from a possibly unnormalized quaternion.
    static Pose from(const Quat& q, const Vec3& t) {
        return Pose(q.normalized(), t);
    }

    static Pose from_translation(const Vec3& t) {
        return Pose(Quat::Identity(), t);
    }

    /// Position + heading; roll and pitch zero. The platform's native state.
    static Pose from_xyz_yaw(const Vec3& t, double yaw) {
        return Pose(Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ())), t);
    }

    static Pose from_axis_angle(const Vec3& axis, double angle, const Vec3& t) {
        return Pose(Quat(Eigen::AngleAxisd(angle, axis.normalized())), t);
    }

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

    Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }

    double yaw() const {
        const Mat3 r = rotation.toRotationMatrix();
        return std::atan2(r(1, 0), r(0, 0));
    }
};

/// result applies b, then a.
inline Pose compose(const Pose& a, const Pose& b) {
    Quat q = a.rotation * b.rotation;
    q.normalize();
    return Pose(q, a.rotation * b.translation + a.translation);
}

inline Pose inverse(const Pose& p) {
    Quat qi = p.rotation.conjugate();
    qi.normalize();
    return Pose(qi, -(qi * p.translation));
}

/// Angle of the relative rotation between two poses, in radians.
inline double rotation_distance(const Pose& a, const Pose& b) {
    const Quat d = a.rotation.conjugate() * b.rotation;
    const double w = std::min(1.0, std::abs(d.w()) / d.norm());
    return 2.0 * std::acos(w);
}

inline double translation_distance(const Pose& a, const Pose& b) {
    return (a.translation - b.translation).norm();
}

/// Rotation-vector (axis * angle) logarithm of a unit quaternion.
inline Vec3 rotation_log(const Quat& q_in) {
    Quat q = q_in.normalized();
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    const double sin_half = q.vec().norm();
    const double cos_half = q.w();
    if (sin_half < 1e-12) return 2.0 * q.vec();
    const double angle = 2.0 * std::atan2(sin_half, cos_half);
    return (angle / sin_half) * q.vec();
}

/// Exponential map from a rotation vector to a unit quaternion.
inline Quat rotation_exp(const Vec3& w) {
    const double angle = w.norm();
    if (angle < 1e-12) {
        Quat q(1.0, 0.5 * w.x(), 0.5 * w.y(), 0.5 * w.z());
        q.normalize();
        return q;
    }
    return Quat(Eigen::AngleAxisd(angle, w / angle));
}

inline double wrap_angle(double a) {
    constexpr double pi = 3.14159265358979323846;
    while (a > pi) a -= 2.0 * pi;
    while (a < -pi) a += 2.0 * pi;
    return a;
}

/// Ordered set of 3D points with a per-cloud source scan identity.
struct PointCloud {
    std::vector<Vec3> points;
    std::int64_t source_scan_id = -1;
    std::vector<double> timestamps;  // optional, unused by default

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

/// Every point rigidly mapped; count, scan id and timestamps preserved.
inline PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
    PointCloud out;
    out.source_scan_id = cloud.source_scan_id;
    out.timestamps = cloud.timestamps;
    out.points.reserve(cloud.points.size());
    const Mat3 r = pose.rotation_matrix();
    for (const Vec3& p : cloud.points) {
        out.points.push_back(r * p + pose.translation);
    }
    return out;
}

/// Snaps a value to float32 precision. Sensor-derived clouds are stored at
/// this precision so session files round-trip bit-exactly.
inline double snap_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline Vec3 snap_f32(const Vec3& v) {
    return Vec3(snap_f32(v.x()), snap_f32(v.y()), snap_f32(v.z()));
}

inline void snap_cloud_f32(PointCloud& cloud) {
    for (Vec3& p : cloud.points) p = snap_f32(p);
}

/// Axis-aligned box, used for site bounds and planning regions.
struct Aabb {
    Vec3 min = Vec3::Zero();
    Vec3 max = Vec3::Zero();

    bool contains(const Vec3& p) const {
        return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() &&
               p.y() <= max.y() && p.z() >= min.z() && p.z() <= max.z();
    }

    bool contains_xy(const Vec3& p) const {
        return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() &&
               p.y() <= max.y();
    }

    Aabb inflated(double margin) const {
        return Aabb{min - Vec3::Constant(margin), max + Vec3::Constant(margin)};
    }

    Vec3 clamp(const Vec3& p) const {
        return Vec3(std::clamp(p.x(), min.x(), max.x()),
                    std::clamp(p.y(), min.y(), max.y()),
                    std::clamp(p.z(), min.z(), max.z()));
    }

    Vec3 extent() const { return max - min; }
};

}  // namespace aeromap
