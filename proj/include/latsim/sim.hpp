#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "latsim/attack.hpp"
#include "latsim/config.hpp"
#include "latsim/controller.hpp"
#include "latsim/detector.hpp"
#include "latsim/idm.hpp"
#include "latsim/metrics.hpp"
#include "latsim/perception.hpp"
#include "latsim/rng.hpp"
#include "latsim/runlog.hpp"
#include "latsim/signal.hpp"
#include "latsim/types.hpp"
#include "latsim/vehicle.hpp"

namespace latsim {

namespace detail {

/// Latency source resolved from the perception config. Injected draws
/// from the configured bands; synthesized builds the toy detector once,
/// calibrates real per-token cost, and charges benign or attacked decode
/// lengths.
struct LatencySource {
    LatencyModel model;
    int benign_tokens = 0;
    int attacked_tokens = 0;

    static LatencySource make(const SimConfig& cfg) {
        LatencySource src;
        src.model.benign_lo = cfg.perception.benign_lo;
        src.model.benign_hi = cfg.perception.benign_hi;
        src.model.attacked_lo = cfg.perception.attacked_lo;
        src.model.attacked_hi = cfg.perception.attacked_hi;
        if (cfg.perception.mode == PerceptionMode::Injected) {
            src.model.kind = LatencyKind::Injected;
            return src;
        }
        src.model.kind = LatencyKind::Synthesized;
        DetectorConfig dc;
        dc.seed = cfg.perception.detector_seed;
        ToyDetector det(dc);
        src.model.per_token_cost = calibrate_latency(det, cfg.perception.target_benign_latency);
        src.benign_tokens = det.benign_count();
        src.attacked_tokens = src.benign_tokens;
        if (cfg.attack.enabled) {
            double eps = cfg.perception.epsilon * cfg.attack.intensity;
            AttackResult ar = eos_suppression_attack(det, det.reference_image(), eps,
                                                     cfg.perception.attack_iters);
            src.attacked_tokens = ar.attacked_count;
        }
        return src;
    }

    double draw(bool attacked, Rng& rng) const {
        int tokens = attacked ? attacked_tokens : benign_tokens;
        return sample_latency(model, attacked, rng, tokens);
    }
};

inline void stamp_events(RunLog& log) {
    std::sort(log.events.begin(), log.events.end(), [](const RunEvent& a, const RunEvent& b) {
        if (a.t != b.t) return a.t < b.t;
        return a.type < b.type;
    });
    for (const RunEvent& e : log.events)
        for (TickRecord& r : log.ticks)
            if (std::fabs(r.t - e.t) <= 1e-9) {
                r.events.push_back(e.type);
                break;
            }
}

} // namespace detail

/// Execute one scenario: fixed tick order of signal advance, frame
/// capture when the pipeline is idle, pipeline poll, control, background
/// traffic, then integration. Ends at the configured duration, or one
/// tick after first contact when stop_on_collision is set.
inline RunLog run_scenario(const SimConfig& cfg, const std::string& fingerprint = "") {
    cfg.validate();
    Rng rng(cfg.seed);
    detail::LatencySource latency = detail::LatencySource::make(cfg);

    Controller controller(cfg.mpc, cfg.scenario.stop_bar_x, cfg.fallback_brake);
    PerceptionPipeline pipeline;

    VehicleState ego{cfg.scenario.ego_x, cfg.scenario.ego_v, cfg.scenario.ego_length};
    std::optional<VehicleState> bv;
    if (cfg.scenario.has_bv)
        bv = VehicleState{cfg.scenario.bv_x, cfg.scenario.bv_v, cfg.scenario.bv_length};

    RunLog log;
    log.fingerprint = fingerprint;
    log.seed = cfg.seed;
    log.dt = cfg.dt;
    log.duration = cfg.duration;
    log.ego_length = cfg.scenario.ego_length;
    if (bv) log.bv_length = cfg.scenario.bv_length;
    log.stop_bar_x = cfg.scenario.stop_bar_x;
    if (cfg.scenario.stop_bar_x) log.signal_offset = cfg.scenario.signal_offset;

    std::optional<TimedObservation> latest_obs;
    long n_ticks = std::lround(cfg.duration / cfg.dt);
    if (n_ticks < 1) throw SimError("run_scenario: duration shorter than one tick");

    for (long k = 0; k < n_ticks; ++k) {
        double t = static_cast<double>(k) * cfg.dt;

        std::optional<SignalPhase> phase;
        if (cfg.scenario.stop_bar_x)
            phase = signal_phase_at(t, cfg.scenario.signal_offset, *cfg.scenario.stop_bar_x);

        bool attacked_now = attack_active(cfg.attack, t);
        if (!pipeline.busy(t)) {
            SensorFrame frame;
            frame.capture_t = t;
            frame.ego = ego;
            if (bv) frame.vehicles.push_back(*bv);
            if (phase) frame.signal_color = phase->color;
            double lat = latency.draw(attacked_now, rng);
            pipeline.submit(frame, lat);
            log.latency_samples.push_back({t, lat, attacked_now});
        } else {
            ++log.drops;
        }

        std::optional<TimedObservation> fresh = pipeline.poll(t);
        if (fresh) {
            ++log.completions;
            latest_obs = fresh;
        }

        ControlDecision decision = controller.tick(fresh, ego, t);

        double bv_u = 0.0;
        if (bv && cfg.scenario.bv_mode == BvMode::Idm)
            bv_u = idm_accel(*bv, std::nullopt, cfg.idm);

        TickRecord row;
        row.t = t;
        row.ego_x = ego.x;
        row.ego_v = ego.v;
        row.ego_u = decision.command.u;
        if (bv) {
            row.bv_x = bv->x;
            row.bv_v = bv->v;
            row.gap_true = bv->rear() - ego.x;
        }
        if (phase) row.signal_color = phase->color;
        if (latest_obs) {
            row.obs_capture_t = latest_obs->capture_t;
            row.obs_age = latest_obs->age(t);
            if (!latest_obs->vehicles.empty()) {
                const VehicleState& pbv = latest_obs->vehicles.front();
                row.gap_perceived = pbv.rear() - latest_obs->ego_at_capture.x;
            }
        }
        row.inference_busy = pipeline.busy(t);
        row.attack_active = attacked_now;
        row.converged = decision.converged;
        row.planned_v = std::max(0.0, ego.v + decision.command.u * cfg.dt);
        log.ticks.push_back(row);

        ego = step_vehicle(ego, decision.command, cfg.dt);
        if (bv) *bv = step_vehicle(*bv, ControlCommand{bv_u}, cfg.dt);

        if (bv) {
            double gap = bv->rear() - ego.x;
            if (gap <= 0.0 && !log.collided) {
                log.collided = true;
                log.collision_t = t + cfg.dt;
                if (cfg.stop_on_collision) {
                    // Terminal row so the colliding state is in the table;
                    // when the run continues instead, the next regular row
                    // captures it at the same timestamp.
                    TickRecord terminal;
                    terminal.t = t + cfg.dt;
                    terminal.ego_x = ego.x;
                    terminal.ego_v = ego.v;
                    terminal.ego_u = 0.0;
                    terminal.bv_x = bv->x;
                    terminal.bv_v = bv->v;
                    terminal.gap_true = gap;
                    if (cfg.scenario.stop_bar_x) {
                        SignalPhase p = signal_phase_at(t + cfg.dt, cfg.scenario.signal_offset,
                                                        *cfg.scenario.stop_bar_x);
                        terminal.signal_color = p.color;
                    }
                    terminal.inference_busy = pipeline.busy(t + cfg.dt);
                    terminal.attack_active = attack_active(cfg.attack, t + cfg.dt);
                    log.ticks.push_back(terminal);
                    break;
                }
            }
        }
    }

    log.events = detect_collision(log);
    if (log.stop_bar_x) {
        auto rlr = detect_red_light_run(log, *log.stop_bar_x);
        for (const RunEvent& e : rlr) log.events.push_back(e);
        auto ds = detect_delayed_start(log, *log.stop_bar_x, cfg.delayed_start_threshold);
        for (const RunEvent& e : ds) log.events.push_back(e);
    }
    detail::stamp_events(log);
    log.validate();
    return log;
}

} // namespace latsim
