#pragma once

#include <deque>
#include <optional>
#include <utility>

#include "latsim/rng.hpp"
#include "latsim/types.hpp"

namespace latsim {

/// Ground-truth snapshot taken by the simulated camera. `ego` is the pose
/// the odometry stack records alongside the frame; detections downstream
/// are consumed relative to it.
struct SensorFrame {
    double capture_t = 0.0;
    VehicleState ego;
    std::vector<VehicleState> vehicles; // background vehicles in view
    std::optional<SignalColor> signal_color;
};

/// A completed inference: the frame contents, stamped with when they were
/// captured and when the detector finished. Contents are truthful for
/// capture_t; staleness is the modeled fault.
struct TimedObservation {
    double capture_t = 0.0;
    double available_t = 0.0;
    VehicleState ego_at_capture;
    std::vector<VehicleState> vehicles;
    std::optional<SignalColor> signal_color;
    double latency = 0.0; // available_t - capture_t

    double age(double now) const { return now - capture_t; }
};

enum class LatencyKind { Injected, Synthesized };

/// Inference-latency model. Injected draws uniformly from the benign or
/// attacked band; Synthesized charges per_token_cost times the toy
/// detector's decode length (the caller supplies the token count).
struct LatencyModel {
    LatencyKind kind = LatencyKind::Injected;
    double benign_lo = 0.07;
    double benign_hi = 0.10;
    double attacked_lo = 3.0;
    double attacked_hi = 3.5;
    double per_token_cost = 0.01; // s/token, Synthesized only

    void validate() const {
        if (!(benign_lo > 0.0) || !(benign_lo <= benign_hi))
            throw SimError("LatencyModel: benign range needs 0 < lo <= hi");
        if (!(attacked_lo > 0.0) || !(attacked_lo <= attacked_hi))
            throw SimError("LatencyModel: attacked range needs 0 < lo <= hi");
        if (!(attacked_lo > benign_hi))
            throw SimError("LatencyModel: attacked range must sit above the benign range");
        if (kind == LatencyKind::Synthesized && !(per_token_cost > 0.0))
            throw SimError("LatencyModel: per_token_cost must be positive");
    }
};

/// When the trigger is "in view": [launch_t, end_t), open-ended without
/// end_t. `intensity` scales the perturbation budget in synthesized mode;
/// injected mode takes its bands directly from the LatencyModel.
struct AttackPolicy {
    bool enabled = false;
    double launch_t = 0.0;
    std::optional<double> end_t;
    double intensity = 1.0;

    void validate() const {
        if (!(launch_t >= 0.0)) throw SimError("AttackPolicy: launch_t must be >= 0");
        if (end_t && !(*end_t > launch_t))
            throw SimError("AttackPolicy: end_t must exceed launch_t");
        if (!(intensity > 0.0)) throw SimError("AttackPolicy: intensity must be positive");
    }
};

inline bool attack_active(const AttackPolicy& policy, double t) {
    if (!policy.enabled) return false;
    if (t < policy.launch_t) return false;
    return !policy.end_t || t < *policy.end_t;
}

/// Draw one inference latency. Injected: uniform over the matching band.
/// Synthesized: token count (benign or attacked decode length, supplied by
/// the caller from the toy detector) times per_token_cost; rng is unused.
inline double sample_latency(const LatencyModel& model, bool attacked, Rng& rng,
                             int token_count = 0) {
    model.validate();
    if (model.kind == LatencyKind::Injected) {
        return attacked ? rng.uniform(model.attacked_lo, model.attacked_hi)
                        : rng.uniform(model.benign_lo, model.benign_hi);
    }
    if (token_count <= 0)
        throw SimError("sample_latency: synthesized mode needs a positive token count");
    return model.per_token_cost * static_cast<double>(token_count);
}

/// Non-pipelined inference: one frame in flight, frames arriving while busy
/// are dropped. A frame submitted at capture_t with latency L completes at
/// capture_t + L and is delivered exactly once by the first poll at or
/// after that instant.
class PerceptionPipeline {
  public:
    /// True while an accepted frame's inference has not yet finished at
    /// time t. A frame completing exactly at t no longer blocks.
    bool busy(double t) {
        retire(t);
        return in_flight_.has_value();
    }

    bool submit(const SensorFrame& frame, double latency) {
        if (!(latency > 0.0) || !std::isfinite(latency))
            throw SimError("PerceptionPipeline: latency must be positive and finite");
        retire(frame.capture_t);
        if (in_flight_) return false;
        TimedObservation obs;
        obs.capture_t = frame.capture_t;
        obs.available_t = frame.capture_t + latency;
        obs.ego_at_capture = frame.ego;
        obs.vehicles = frame.vehicles;
        obs.signal_color = frame.signal_color;
        obs.latency = latency;
        in_flight_ = std::move(obs);
        return true;
    }

    std::optional<TimedObservation> poll(double t) {
        retire(t);
        if (ready_.empty() || ready_.front().available_t > t) return std::nullopt;
        TimedObservation obs = std::move(ready_.front());
        ready_.pop_front();
        return obs;
    }

  private:
    void retire(double t) {
        if (in_flight_ && in_flight_->available_t <= t) {
            ready_.push_back(std::move(*in_flight_));
            in_flight_.reset();
        }
    }

    std::optional<TimedObservation> in_flight_;
    std::deque<TimedObservation> ready_;
};

} // namespace latsim
