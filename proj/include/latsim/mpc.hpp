#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "latsim/types.hpp"

namespace latsim {

/// Planner parameters. The conflict point x_c is re-derived by the caller
/// before every plan (predicted leader rear bumper minus safety_gap).
/// h targets the squared time-to-collision difference and therefore
/// carries units of s^2; the cost formula is implemented as written.
///
/// The feasible set Z bounds speed by v_max everywhere and, when a leader
/// constrains the plan, bounds position by x_c. The position bound is
/// enforced recursively: planned speed never exceeds the braking envelope
/// sqrt(2 z_brake (x_c - x)), the largest speed from which a z_brake
/// deceleration still stops at the conflict point.
struct MpcConfig {
    int N = 20;          // prediction horizon, steps
    double dt = 0.1;     // s
    double w1 = 1.0;     // conflict-point distance weight
    double w2 = 1.0;     // free-flow speed tracking weight
    double w3 = 0.1;     // control effort weight
    double w4 = 10.0;    // TTC safety weight
    double x_c = 0.0;    // m
    double v_ff = 12.0;  // m/s
    double h = 2.0;      // s^2
    double u_min = -6.0; // m/s^2
    double u_max = 2.5;  // m/s^2
    double v_max = 12.0; // m/s, speed bound of the feasible set Z
    double z_brake = 2.5; // m/s^2, braking rate backing Z's position bound
    double safety_gap = 2.0; // m
    int max_iters = 100;

    void validate() const {
        if (N < 1) throw SimError("MpcConfig: N must be >= 1");
        if (!(dt > 0.0)) throw SimError("MpcConfig: dt must be positive");
        if (w1 < 0.0 || w2 < 0.0 || w3 < 0.0 || w4 < 0.0)
            throw SimError("MpcConfig: weights must be non-negative");
        if (!(u_min < 0.0) || !(u_max > 0.0)) throw SimError("MpcConfig: need u_min < 0 < u_max");
        if (!(v_max > 0.0)) throw SimError("MpcConfig: v_max must be positive");
        if (!(z_brake > 0.0) || z_brake > -u_min)
            throw SimError("MpcConfig: need 0 < z_brake <= -u_min");
        if (!(safety_gap > 0.0)) throw SimError("MpcConfig: safety_gap must be positive");
        if (max_iters < 1) throw SimError("MpcConfig: max_iters must be >= 1");
    }
};

struct PlanResult {
    std::vector<ControlCommand> controls;  // length N, all within [u_min, u_max]
    std::vector<VehicleState> ego_states;  // length N+1, speeds within [0, v_max]
    std::vector<VehicleState> bv_states;   // length N+1, empty without a leader
    double cost = 0.0;
    bool converged = false;
};

/// Constant-speed extrapolation of an observed background vehicle.
inline VehicleState predict_bv(const VehicleState& obs_bv, double capture_t, double target_t) {
    if (target_t < capture_t) throw SimError("predict_bv: no backward extrapolation");
    if (!is_finite(obs_bv)) throw SimError("predict_bv: non-finite state");
    VehicleState out = obs_bv;
    out.x = obs_bv.x + obs_bv.v * (target_t - capture_t);
    return out;
}

/// Perceived red light becomes a stationary zero-length leader whose rear
/// bumper sits exactly at the stop bar; perceived green removes it.
inline std::optional<VehicleState> signal_to_virtual_leader(SignalColor perceived,
                                                            double stop_bar_x) {
    if (perceived == SignalColor::Green) return std::nullopt;
    VehicleState leader;
    leader.x = stop_bar_x;
    leader.v = 0.0;
    leader.length = 0.0;
    return leader;
}

namespace detail {

constexpr double kTtcSpeedFloor = 0.1; // m/s, regularizes the TTC division

/// Per-step record of the applied control and the exact partials of the
/// step map, so the adjoint pass matches the rollout kink for kink.
struct StepDerivs {
    double uc_du = 1.0, uc_dv = 0.0, uc_dx = 0.0; // d u_c / d (u_raw, v_k, x_k)
    double vn_du = 0.0, vn_dv = 1.0, vn_dx = 0.0; // d v_{k+1} / d (u_raw, v_k, x_k)
};

struct Rollout {
    std::vector<double> x, v; // N+1 states
    std::vector<double> u_c;  // N applied controls
    std::vector<StepDerivs> deriv;
    double cost = 0.0;
};

/// Whether the TTC term participates at all: it needs a leader that is
/// ahead of the conflict point and actually moving. A stationary leader
/// makes the as-written term both singular and useless (its floored TTC
/// dwarfs every achievable ego TTC), so it is dropped there; the distance
/// term and the feasible-set bound already encode stopping at the
/// conflict point.
inline bool ttc_term_active(const MpcConfig& cfg, const VehicleState& bv) {
    return cfg.w4 > 0.0 && bv.v >= kTtcSpeedFloor && bv.rear() > cfg.x_c;
}

/// Speed admitted by the feasible set Z at position x_next: the v_max
/// bound always, plus the braking envelope sqrt(2 b (x_c - x)) whenever a
/// conflict point constrains the plan. The envelope is what makes the
/// position bound x <= x_c recursively feasible: any state on or under it
/// can still stop before x_c using z_brake, which is kept strictly below
/// |u_min| so the plant retains reserve authority.
inline double z_speed_cap(const MpcConfig& cfg, bool bound_active, double x_next,
                          double& dcap_dxn) {
    dcap_dxn = 0.0;
    double cap = cfg.v_max;
    if (bound_active) {
        double slack = cfg.x_c - x_next;
        double env = slack > 0.0 ? std::sqrt(2.0 * cfg.z_brake * slack) : 0.0;
        if (env < cap) {
            cap = env;
            dcap_dxn = env > 1e-6 ? -cfg.z_brake / env : 0.0;
        }
    }
    return cap;
}

/// One ego step under the control box and the speed cap of Z. The applied
/// control is reduced so the rollout never plans outside Z; the emitted
/// command is this applied value, so the plant follows the same path.
inline void ego_step(const MpcConfig& cfg, bool bound_active, double x_k, double v_k,
                     double u_raw, double& u_c, double& v_next, StepDerivs& d) {
    u_c = std::clamp(u_raw, cfg.u_min, cfg.u_max);
    d = StepDerivs{};
    double x_next = x_k + v_k * cfg.dt;
    double dcap_dxn = 0.0;
    double cap = z_speed_cap(cfg, bound_active, x_next, dcap_dxn);

    double raw_next = v_k + u_c * cfg.dt;
    if (raw_next > cap) {
        double limited = (cap - v_k) / cfg.dt;
        if (limited >= cfg.u_min) {
            u_c = limited;
            d.uc_du = 0.0;
            d.uc_dv = dcap_dxn - 1.0 / cfg.dt; // cap depends on x_next = x + v dt
            d.uc_dx = dcap_dxn / cfg.dt;
            d.vn_du = 0.0;
            d.vn_dv = dcap_dxn * cfg.dt;
            d.vn_dx = dcap_dxn;
            v_next = cap;
            return;
        }
        u_c = cfg.u_min; // cap unreachable in one step; brake as hard as allowed
        d.uc_du = 0.0;
        d.uc_dv = 0.0;
        d.uc_dx = 0.0;
        raw_next = v_k + u_c * cfg.dt;
        d.vn_du = 0.0;
    } else {
        d.vn_du = cfg.dt;
    }
    if (raw_next < 0.0) {
        v_next = 0.0;
        d.vn_du = 0.0;
        d.vn_dv = 0.0;
        d.vn_dx = 0.0;
    } else {
        v_next = raw_next;
    }
}

inline Rollout rollout_and_cost(const VehicleState& ego, const std::optional<VehicleState>& bv,
                                const MpcConfig& cfg, const std::vector<double>& u_raw) {
    Rollout r;
    int N = cfg.N;
    r.x.resize(N + 1);
    r.v.resize(N + 1);
    r.u_c.resize(N);
    r.deriv.resize(N);
    r.x[0] = ego.x;
    r.v[0] = ego.v;

    bool bound = bv.has_value();
    bool w4_on = bv && ttc_term_active(cfg, *bv);
    double cost = 0.0;
    for (int k = 0; k < N; ++k) {
        ego_step(cfg, bound, r.x[k], r.v[k], u_raw[k], r.u_c[k], r.v[k + 1], r.deriv[k]);
        r.x[k + 1] = r.x[k] + r.v[k] * cfg.dt;

        double xk = r.x[k + 1], vk = r.v[k + 1];
        double c = cfg.w2 * (vk - cfg.v_ff) * (vk - cfg.v_ff) + cfg.w3 * r.u_c[k] * r.u_c[k];
        if (bv) c += cfg.w1 * (xk - cfg.x_c) * (xk - cfg.x_c);
        if (w4_on) {
            double t = (k + 1) * cfg.dt;
            double bx = bv->x + bv->v * t;
            double ttc_i = (xk - cfg.x_c) / std::max(vk, kTtcSpeedFloor);
            double ttc_n = (bx - cfg.x_c) / std::max(bv->v, kTtcSpeedFloor);
            double d = ttc_i - ttc_n;
            double f = d * d - cfg.h;
            c += cfg.w4 * f * f;
        }
        cost += c;
    }
    r.cost = cost;
    return r;
}

/// Adjoint gradient of the rollout cost with respect to the raw controls.
inline void cost_gradient(const VehicleState& ego, const std::optional<VehicleState>& bv,
                          const MpcConfig& cfg, const Rollout& r, std::vector<double>& grad) {
    int N = cfg.N;
    grad.assign(N, 0.0);
    bool w4_on = bv && ttc_term_active(cfg, *bv);

    double lx = 0.0, lv = 0.0; // dJ/dx_k, dJ/dv_k for the state being visited
    for (int k = N; k >= 1; --k) {
        double xk = r.x[k], vk = r.v[k];
        double dcx = bv ? 2.0 * cfg.w1 * (xk - cfg.x_c) : 0.0;
        double dcv = 2.0 * cfg.w2 * (vk - cfg.v_ff);
        if (w4_on) {
            double t = k * cfg.dt;
            double bx = bv->x + bv->v * t;
            double vi = std::max(vk, kTtcSpeedFloor);
            double ttc_i = (xk - cfg.x_c) / vi;
            double ttc_n = (bx - cfg.x_c) / std::max(bv->v, kTtcSpeedFloor);
            double d = ttc_i - ttc_n;
            double f = d * d - cfg.h;
            double dterm_dttc = cfg.w4 * 2.0 * f * 2.0 * d;
            dcx += dterm_dttc / vi;
            if (vk > kTtcSpeedFloor) dcv += dterm_dttc * (-(xk - cfg.x_c) / (vi * vi));
        }
        lx += dcx;
        lv += dcv;

        // Pull the adjoint through the step from state k-1, including the
        // stage dependence of the applied control on (u_raw, v, x).
        const StepDerivs& d = r.deriv[k - 1];
        double ws = 2.0 * cfg.w3 * r.u_c[k - 1];
        grad[k - 1] = ws * d.uc_du + lv * d.vn_du;
        double lv_prev = ws * d.uc_dv + lx * cfg.dt + lv * d.vn_dv;
        double lx_prev = ws * d.uc_dx + lx + lv * d.vn_dx;
        lv = lv_prev;
        lx = lx_prev;
    }
}

inline void project_box(std::vector<double>& u, const MpcConfig& cfg) {
    for (double& ui : u) ui = std::clamp(ui, cfg.u_min, cfg.u_max);
}

struct DescentOutcome {
    double cost = 0.0;
    bool settled = false;
};

inline DescentOutcome descend(const VehicleState& ego, const std::optional<VehicleState>& bv,
                              const MpcConfig& cfg, std::vector<double>& u) {
    project_box(u, cfg);
    Rollout r = rollout_and_cost(ego, bv, cfg, u);
    std::vector<double> grad, trial(u.size());
    std::vector<double> prev_u, prev_grad;
    DescentOutcome out;
    double alpha = 0.0;
    for (int it = 0; it < cfg.max_iters; ++it) {
        cost_gradient(ego, bv, cfg, r, grad);

        // Projected-gradient stationarity: a unit step that the box clips
        // back to (numerically) the same point means we are done. 1e-6
        // m/s^2 of control motion is far below anything the plant can see.
        double moved = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) {
            double p = std::clamp(u[i] - grad[i], cfg.u_min, cfg.u_max);
            moved = std::max(moved, std::fabs(p - u[i]));
        }
        if (moved < 1e-6) {
            out.settled = true;
            break;
        }

        // Barzilai-Borwein step when history permits, otherwise carry the
        // last accepted step; backtracking below safeguards either choice.
        if (!prev_u.empty()) {
            double sy = 0.0, yy = 0.0;
            for (std::size_t i = 0; i < u.size(); ++i) {
                double s = u[i] - prev_u[i];
                double y = grad[i] - prev_grad[i];
                sy += s * y;
                yy += y * y;
            }
            if (sy > 0.0 && yy > 0.0) alpha = sy / yy;
        }
        if (alpha <= 0.0) alpha = 1.0 / moved; // first probe shifts some control by ~1 m/s^2
        prev_u = u;
        prev_grad = grad;

        bool improved = false;
        for (int bt = 0; bt < 40; ++bt) {
            for (std::size_t i = 0; i < u.size(); ++i) trial[i] = u[i] - alpha * grad[i];
            project_box(trial, cfg);
            Rollout rt = rollout_and_cost(ego, bv, cfg, trial);
            if (rt.cost < r.cost) {
                double drop = r.cost - rt.cost;
                u = trial;
                r = std::move(rt);
                improved = true;
                if (drop <= 1e-9 * (1.0 + std::fabs(r.cost))) out.settled = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!improved) {
            out.settled = true; // no improving step within the search range
            break;
        }
        if (out.settled) break;
    }
    out.cost = r.cost;
    return out;
}

} // namespace detail

/// Finite-horizon plan minimizing the four-term cost over the control
/// sequence, solved by projected gradient descent from several starts
/// (plus the caller's warm start). Only controls[0] is meant to be
/// actuated; the caller re-plans every tick.
inline PlanResult mpc_plan(const VehicleState& ego, const std::optional<VehicleState>& predicted_bv,
                           const MpcConfig& cfg,
                           const std::vector<double>* warm_start = nullptr) {
    cfg.validate();
    if (!is_finite(ego)) throw SimError("mpc_plan: non-finite ego state");
    if (predicted_bv && !is_finite(*predicted_bv)) throw SimError("mpc_plan: non-finite leader");

    std::vector<std::vector<double>> starts;
    if (warm_start && static_cast<int>(warm_start->size()) == cfg.N) starts.push_back(*warm_start);
    starts.emplace_back(cfg.N, 0.0);
    starts.emplace_back(cfg.N, cfg.u_min);
    starts.emplace_back(cfg.N, cfg.u_max);
    starts.emplace_back(cfg.N, 0.5 * cfg.u_min);
    starts.emplace_back(cfg.N, 0.5 * cfg.u_max);

    std::vector<double> best_u;
    double best_cost = 0.0;
    bool best_settled = false;
    bool first = true;
    for (auto& u : starts) {
        detail::DescentOutcome o = detail::descend(ego, predicted_bv, cfg, u);
        if (first || o.cost < best_cost) {
            best_cost = o.cost;
            best_u = u;
            best_settled = o.settled;
            first = false;
        }
    }

    detail::Rollout r = detail::rollout_and_cost(ego, predicted_bv, cfg, best_u);
    PlanResult plan;
    plan.cost = r.cost;
    plan.converged = best_settled && std::isfinite(r.cost);
    plan.controls.resize(cfg.N);
    for (int k = 0; k < cfg.N; ++k) plan.controls[k].u = r.u_c[k];
    plan.ego_states.resize(cfg.N + 1);
    for (int k = 0; k <= cfg.N; ++k) {
        plan.ego_states[k].x = r.x[k];
        plan.ego_states[k].v = r.v[k];
        plan.ego_states[k].length = ego.length;
    }
    if (predicted_bv) {
        plan.bv_states.resize(cfg.N + 1);
        for (int k = 0; k <= cfg.N; ++k) {
            plan.bv_states[k] = *predicted_bv;
            plan.bv_states[k].x = predicted_bv->x + predicted_bv->v * (k * cfg.dt);
        }
    }
    return plan;
}

/// Exhaustive search over control sequences drawn from `grid`, using the
/// identical rollout and cost as mpc_plan. Verification oracle only.
inline PlanResult brute_force_plan(const VehicleState& ego,
                                   const std::optional<VehicleState>& predicted_bv,
                                   const MpcConfig& cfg, const std::vector<double>& grid) {
    cfg.validate();
    if (grid.empty()) throw SimError("brute_force_plan: empty control grid");
    double combos = std::pow(static_cast<double>(grid.size()), cfg.N);
    if (combos > 1e6) throw SimError("brute_force_plan: combinatorial budget exceeded");

    std::vector<std::size_t> idx(cfg.N, 0);
    std::vector<double> u(cfg.N, grid[0]);
    std::vector<double> best_u;
    double best_cost = 0.0;
    bool first = true;
    while (true) {
        for (int k = 0; k < cfg.N; ++k) u[k] = grid[idx[k]];
        detail::Rollout r = detail::rollout_and_cost(ego, predicted_bv, cfg, u);
        if (first || r.cost < best_cost) {
            best_cost = r.cost;
            best_u = u;
            first = false;
        }
        int pos = 0;
        while (pos < cfg.N && ++idx[pos] == grid.size()) idx[pos++] = 0;
        if (pos == cfg.N) break;
    }

    detail::Rollout r = detail::rollout_and_cost(ego, predicted_bv, cfg, best_u);
    PlanResult plan;
    plan.cost = r.cost;
    plan.converged = true;
    plan.controls.resize(cfg.N);
    for (int k = 0; k < cfg.N; ++k) plan.controls[k].u = r.u_c[k];
    plan.ego_states.resize(cfg.N + 1);
    for (int k = 0; k <= cfg.N; ++k) {
        plan.ego_states[k].x = r.x[k];
        plan.ego_states[k].v = r.v[k];
        plan.ego_states[k].length = ego.length;
    }
    if (predicted_bv) {
        plan.bv_states.resize(cfg.N + 1);
        for (int k = 0; k <= cfg.N; ++k) {
            plan.bv_states[k] = *predicted_bv;
            plan.bv_states[k].x = predicted_bv->x + predicted_bv->v * (k * cfg.dt);
        }
    }
    return plan;
}

} // namespace latsim
