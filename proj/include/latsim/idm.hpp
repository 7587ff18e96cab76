#pragma once

#include <cmath>
#include <optional>

#include "latsim/types.hpp"

namespace latsim {

/// Intelligent Driver Model parameters. Defaults mirror the common
/// microscopic-simulator values; v0 is set from the road's free-flow speed.
struct IdmParams {
    double v0 = 12.0;  // desired speed, m/s
    double T = 1.0;    // desired time headway, s
    double a = 2.6;    // max acceleration, m/s^2
    double b = 4.5;    // comfortable deceleration, m/s^2
    double delta = 4.0;
    double s0 = 2.5;   // minimum gap, m

    void validate() const {
        if (!(v0 > 0.0) || !(T > 0.0) || !(a > 0.0) || !(b > 0.0) || !(s0 > 0.0))
            throw SimError("IdmParams: v0, T, a, b, s0 must be positive");
        if (!(delta >= 1.0)) throw SimError("IdmParams: delta must be >= 1");
    }
};

/// IDM acceleration for `ego` behind an optional `leader`. Gaps are bumper
/// to bumper. The output is clamped above at p.a but deliberately not
/// clamped below: emergency braking comes out of the interaction term
/// itself, with no separate collision-avoidance override.
inline double idm_accel(const VehicleState& ego, const std::optional<VehicleState>& leader,
                        const IdmParams& p) {
    p.validate();
    if (!is_finite(ego)) throw SimError("idm_accel: non-finite ego state");

    double free_term = 1.0 - std::pow(ego.v / p.v0, p.delta);
    if (!leader) return std::min(p.a, p.a * free_term);

    if (!is_finite(*leader)) throw SimError("idm_accel: non-finite leader state");
    double s = leader->rear() - ego.x;
    if (s <= 0.0) throw SimError("idm_accel: non-positive gap, vehicles overlap");

    double dv = ego.v - leader->v;
    double s_star = p.s0 + ego.v * p.T + ego.v * dv / (2.0 * std::sqrt(p.a * p.b));
    double interaction = s_star / s;
    return std::min(p.a, p.a * (free_term - interaction * interaction));
}

/// Closed-form equilibrium gap: the bumper-to-bumper distance at which a
/// follower moving at speed v behind a leader at the same speed holds zero
/// acceleration. Only defined for v < v0.
inline double idm_equilibrium_gap(double v, const IdmParams& p) {
    p.validate();
    if (!(v >= 0.0) || !(v < p.v0))
        throw SimError("idm_equilibrium_gap: requires 0 <= v < v0");
    return (p.s0 + v * p.T) / std::sqrt(1.0 - std::pow(v / p.v0, p.delta));
}

} // namespace latsim
