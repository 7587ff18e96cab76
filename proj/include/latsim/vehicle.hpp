#pragma once

#include "latsim/types.hpp"

namespace latsim {

/// Forward-Euler step of the double integrator. Position advances with
/// the pre-update speed; speed is clamped at zero (no reverse motion).
inline VehicleState step_vehicle(const VehicleState& s, const ControlCommand& cmd, double dt) {
    if (dt <= 0.0 || !std::isfinite(dt))
        throw SimError("step_vehicle: dt must be positive and finite");
    if (!is_finite(s) || !std::isfinite(cmd.u))
        throw SimError("step_vehicle: non-finite state or command");
    VehicleState out = s;
    out.x = s.x + s.v * dt;
    out.v = std::max(0.0, s.v + cmd.u * dt);
    return out;
}

} // namespace latsim
