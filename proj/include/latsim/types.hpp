#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace latsim {

/// Longitudinal state of one vehicle. `x` is the front-bumper position
/// along the lane centerline; gaps are measured bumper to bumper
/// (leader rear = leader.x - leader.length).
struct VehicleState {
    double x = 0.0;       // m
    double v = 0.0;       // m/s, never negative
    double length = 5.0;  // m, body length

    double rear() const { return x - length; }
};

enum class SignalColor { Green, Red };

inline const char* to_string(SignalColor c) {
    return c == SignalColor::Green ? "green" : "red";
}

/// Fixed-time signal: 20 s green followed by 15 s red, 35 s cycle.
inline constexpr double kGreenDuration = 20.0;
inline constexpr double kRedDuration = 15.0;
inline constexpr double kCycleDuration = kGreenDuration + kRedDuration;

struct SignalPhase {
    SignalColor color = SignalColor::Green;
    double stop_bar_x = 0.0;      // m
    double time_into_cycle = 0.0; // s, in [0, 35)
};

/// Longitudinal acceleration command.
struct ControlCommand {
    double u = 0.0; // m/s^2
};

/// Full simulation state at one tick. Exactly one ego vehicle; the
/// background list holds vehicle n in slot 0 and keeps room for further
/// participants that the scenarios do not use.
struct WorldState {
    double t = 0.0;
    VehicleState ego;
    std::vector<VehicleState> background;
    std::optional<SignalPhase> signal;
};

inline bool is_finite(double v) { return std::isfinite(v); }

inline bool is_finite(const VehicleState& s) {
    return std::isfinite(s.x) && std::isfinite(s.v) && std::isfinite(s.length);
}

/// Thrown on precondition violations (non-finite inputs, impossible
/// geometry, bad arguments).
class SimError : public std::runtime_error {
  public:
    explicit SimError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace latsim
