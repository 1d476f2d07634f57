#pragma once

#include "aeromap/geometry.hpp"
#include "aeromap/rng.hpp"

#include <cstdint>

namespace aeromap {

/// Kinematic 4-DoF vehicle: position plus yaw, with roll and pitch fixed at
/// zero. Battery is tracked as remaining flight time in seconds.
struct PlatformState {
    Vec3 position = Vec3::Zero();
    double yaw = 0.0;
    Vec3 velocity = Vec3::Zero();
    double yaw_rate = 0.0;
    double elapsed_s = 0.0;
    double battery_s = 900.0;

    Pose pose() const { return Pose::from_xyz_yaw(position, yaw); }
};

inline bool battery_exhausted(const PlatformState& state) {
    return state.battery_s <= 0.0;
}

/// Integrates the commanded velocity (plus an optional wind/controller
/// disturbance) over dt and drains the battery. The battery clamps at zero;
/// callers watch battery_exhausted() and must land the mission when it fires.
inline PlatformState step_platform(const PlatformState& state,
                                   const Vec3& commanded_velocity,
                                   double commanded_yaw_rate, double dt,
                                   const Vec3& disturbance = Vec3::Zero()) {
    PlatformState next = state;
    next.velocity = commanded_velocity + disturbance;
    next.yaw_rate = commanded_yaw_rate;
    next.position = state.position + next.velocity * dt;
    next.yaw = wrap_angle(state.yaw + commanded_yaw_rate * dt);
    next.elapsed_s = state.elapsed_s + dt;
    next.battery_s = std::max(0.0, state.battery_s - dt);
    return next;
}

/// Odometry error source standing in for a real inertial/LiDAR odometry
/// stack: a per-seed constant bias (direction and magnitude drawn once) that
/// accumulates per meter traveled, plus white noise per increment.
struct DriftModel {
    double translation_bias_sigma_m_per_m = 0.0;
    double yaw_bias_sigma_rad_per_m = 0.0;
    double translation_white_sigma_m = 0.0;  // per sqrt(meter)
    double yaw_white_sigma_rad = 0.0;        // per sqrt(meter)
    std::uint64_t seed = 0;

    Vec3 translation_bias = Vec3::Zero();  // m per m traveled
    double yaw_bias = 0.0;                 // rad per m traveled

    DriftModel() = default;
    DriftModel(double t_bias_sigma, double yaw_bias_sigma, double t_white,
               double yaw_white, std::uint64_t seed_in)
        : translation_bias_sigma_m_per_m(t_bias_sigma),
          yaw_bias_sigma_rad_per_m(yaw_bias_sigma),
          translation_white_sigma_m(t_white),
          yaw_white_sigma_rad(yaw_white),
          seed(seed_in) {
        Rng rng(seed_in);
        translation_bias = Vec3(rng.normal(0.0, t_bias_sigma),
                                rng.normal(0.0, t_bias_sigma),
                                rng.normal(0.0, t_bias_sigma));
        yaw_bias = rng.normal(0.0, yaw_bias_sigma);
    }
};

/// Relative motion between consecutive true poses, corrupted by the drift
/// model. Bias scales linearly and white noise with the square root of the
/// segment length, so a zero-length segment or an all-zero model passes the
/// true motion through exactly.
inline Pose drifted_increment(const Pose& true_prev, const Pose& true_curr,
                              const DriftModel& model, Rng& rng) {
    const Pose rel = compose(inverse(true_prev), true_curr);
    const double length = rel.translation.norm();
    if (length == 0.0) return rel;
    const double sqrt_len = std::sqrt(length);

    Vec3 t_err = model.translation_bias * length;
    double yaw_err = model.yaw_bias * length;
    if (model.translation_white_sigma_m > 0.0) {
        t_err += sqrt_len * Vec3(rng.normal(0.0, model.translation_white_sigma_m),
                                 rng.normal(0.0, model.translation_white_sigma_m),
                                 rng.normal(0.0, model.translation_white_sigma_m));
    }
    if (model.yaw_white_sigma_rad > 0.0)
        yaw_err += sqrt_len * rng.normal(0.0, model.yaw_white_sigma_rad);

    Quat q = rel.rotation * Quat(Eigen::AngleAxisd(yaw_err, Vec3::UnitZ()));
    q.normalize();
    return Pose(q, rel.translation + t_err);
}

}  // namespace aeromap
