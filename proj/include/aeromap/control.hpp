#pragma once

#include "aeromap/planner.hpp"
#include "aeromap/platform.hpp"

#include <algorithm>
#include <cmath>

namespace aeromap {

struct ControlConfig {
    double max_velocity_mps = 1.0;
    double acceleration_mps2 = 0.1;
    double command_rate_hz = 50.0;
    double arrival_tolerance_m = 1.0;
    double yaw_rate_cap_radps = 0.5;
    double yaw_gain = 1.0;
};

struct VelocityCommand {
    Vec3 velocity = Vec3::Zero();
    double yaw_rate = 0.0;
};

inline bool arrived(const PlatformState& current, const PlanState& target,
                    const ControlConfig& cfg) {
    return (target.position - current.position).norm() <=
           cfg.arrival_tolerance_m;
}

/// Trapezoidal speed profile toward the target: ramp up at the acceleration
/// limit, cruise at max velocity, and stay inside the braking envelope
/// sqrt(2*a*d) so the platform can stop at the target.
inline VelocityCommand velocity_command(const PlatformState& current,
                                        const PlanState& target,
                                        const ControlConfig& cfg) {
    VelocityCommand cmd;
    const Vec3 to_target = target.position - current.position;
    const double dist = to_target.norm();
    if (dist <= cfg.arrival_tolerance_m) return cmd;

    const double dt = 1.0 / cfg.command_rate_hz;
    const double ramp =
        current.velocity.norm() + cfg.acceleration_mps2 * dt;
    const double braking = std::sqrt(2.0 * cfg.acceleration_mps2 * dist);
    const double speed =
        std::min({cfg.max_velocity_mps, ramp, braking});
    cmd.velocity = speed / dist * to_target;

    const double yaw_error = wrap_angle(target.yaw - current.yaw);
    cmd.yaw_rate = std::clamp(cfg.yaw_gain * yaw_error,
                              -cfg.yaw_rate_cap_radps,
                              cfg.yaw_rate_cap_radps);
    return cmd;
}

}  // namespace aeromap
