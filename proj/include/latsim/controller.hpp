#pragma once

#include <optional>
#include <vector>

#include "latsim/mpc.hpp"
#include "latsim/perception.hpp"
#include "latsim/types.hpp"

namespace latsim {

struct ControlDecision {
    ControlCommand command;
    double plan_cost = 0.0;
    bool converged = true;
    bool has_leader = false;
    double leader_gap = 0.0; // perceived bumper-to-bumper gap, when has_leader
};

/// The VUT brain. Holds the last delivered observation, re-anchors the
/// detections to the current ego pose, extrapolates them at constant
/// speed across the observation age, converts a perceived red light into
/// a virtual leader, and plans with the rolling-horizon MPC.
///
/// Detections are consumed as ranges relative to the ego at capture time
/// and re-attached to the ego's current pose, as a camera pipeline
/// reports them. With fresh frames the re-anchoring error is negligible;
/// with seconds-stale frames the perceived gap freezes at its capture
/// value while the true gap keeps shrinking. That staleness is the whole
/// failure mode under study.
class Controller {
  public:
    Controller(MpcConfig mpc, std::optional<double> stop_bar_x, double fallback_brake = -4.5)
        : mpc_(std::move(mpc)), stop_bar_x_(stop_bar_x), fallback_brake_(fallback_brake) {}

    const std::optional<TimedObservation>& latest_observation() const { return latest_; }

    ControlDecision tick(const std::optional<TimedObservation>& fresh,
                         const VehicleState& ego_truth, double t) {
        if (fresh) latest_ = *fresh;
        ControlDecision out;
        if (!latest_) return out; // no observation yet: hold speed

        std::optional<VehicleState> leader = binding_leader(ego_truth, t);
        MpcConfig cfg = mpc_;
        if (leader) {
            cfg.x_c = leader->rear() - cfg.safety_gap;
            out.has_leader = true;
            out.leader_gap = leader->rear() - ego_truth.x;
        }
        PlanResult plan =
            mpc_plan(ego_truth, leader, cfg, warm_.empty() ? nullptr : &warm_);
        out.plan_cost = plan.cost;
        out.converged = plan.converged;
        if (plan.converged) {
            out.command = plan.controls[0];
            warm_.resize(cfg.N);
            for (int k = 0; k + 1 < cfg.N; ++k) warm_[k] = plan.controls[k + 1].u;
            warm_[cfg.N - 1] = plan.controls[cfg.N - 1].u;
        } else {
            out.command.u = std::max(cfg.u_min, fallback_brake_);
            warm_.clear();
        }
        return out;
    }

  private:
    /// Nearest perceived leader ahead of the ego at plan time t.
    std::optional<VehicleState> binding_leader(const VehicleState& ego_truth, double t) const {
        std::optional<VehicleState> best;
        auto consider = [&](const VehicleState& cand) {
            double gap = cand.rear() - ego_truth.x;
            if (gap <= 0.0) return;
            if (!best || gap < best->rear() - ego_truth.x) best = cand;
        };

        for (const VehicleState& bv : latest_->vehicles) {
            VehicleState anchored = bv;
            anchored.x = ego_truth.x + (bv.x - latest_->ego_at_capture.x);
            consider(predict_bv(anchored, latest_->capture_t, t));
        }
        if (stop_bar_x_ && latest_->signal_color) {
            if (auto virt = signal_to_virtual_leader(*latest_->signal_color, *stop_bar_x_))
                consider(*virt);
        }
        return best;
    }

    MpcConfig mpc_;
    std::optional<double> stop_bar_x_;
    double fallback_brake_;
    std::optional<TimedObservation> latest_;
    std::vector<double> warm_;
};

} // namespace latsim
