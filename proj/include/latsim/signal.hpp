#pragma once

#include "latsim/types.hpp"

namespace latsim {

/// Phase of the fixed-time signal at time t. The cycle starts green:
/// green on [0, 20), red on [20, 35), repeating. `offset` shifts the
/// cycle start relative to simulation time zero.
inline SignalPhase signal_phase_at(double t, double offset, double stop_bar_x) {
    if (t < 0.0 || !std::isfinite(t) || !std::isfinite(offset))
        throw SimError("signal_phase_at: t must be finite and non-negative");
    double phase = std::fmod(t + offset, kCycleDuration);
    if (phase < 0.0)
        phase += kCycleDuration;
    SignalPhase p;
    p.color = phase < kGreenDuration ? SignalColor::Green : SignalColor::Red;
    p.stop_bar_x = stop_bar_x;
    p.time_into_cycle = phase;
    return p;
}

} // namespace latsim
