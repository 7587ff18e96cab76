// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Runs entirely from the shipped fixtures plus in-code setups.
#include <algorithm>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latsim/attack.hpp"
#include "latsim/batch.hpp"
#include "latsim/config.hpp"
#include "latsim/detector.hpp"
#include "latsim/idm.hpp"
#include "latsim/metrics.hpp"
#include "latsim/mpc.hpp"
#include "latsim/rng.hpp"
#include "latsim/sim.hpp"

using namespace latsim;

namespace {

int g_failures = 0;

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list args;
    va_start(args, f);
    std::vsnprintf(buf, sizeof(buf), f, args);
    va_end(args);
    return buf;
}

void report(int criterion, const char* name, bool pass, const std::string& detail) {
    std::printf("%s criterion-%d: %s -- %s\n", pass ? "PASS" : "FAIL", criterion, name,
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

ParsedConfig load_fixture(const char* name) {
    return parse_config(std::string(LATSIM_CONFIG_DIR) + "/" + name);
}

int count_events(const RunLog& log, const char* type) {
    int n = 0;
    for (const RunEvent& e : log.events) n += e.type == type ? 1 : 0;
    return n;
}

} // namespace

int main() {
    ParsedConfig cf_benign = load_fixture("car_following_benign.json");
    ParsedConfig cf_attacked = load_fixture("car_following_attacked.json");
    ParsedConfig sig_benign = load_fixture("signal_benign.json");
    ParsedConfig sig_attacked = load_fixture("signal_attacked.json");

    BatchResult benign =
        run_batch(cf_benign.config, 40, cf_benign.config.seed, cf_benign.fingerprint);
    BatchResult attacked =
        run_batch(cf_attacked.config, 40, cf_attacked.config.seed, cf_attacked.fingerprint);

    // 1. Latency bands.
    {
        std::vector<double> b, a;
        for (const RunLog& log : benign.logs)
            for (const LatencySample& s : log.latency_samples)
                if (!s.attacked) b.push_back(s.latency);
        for (const RunLog& log : attacked.logs)
            for (const LatencySample& s : log.latency_samples)
                if (s.attacked) a.push_back(s.latency);
        int b_out = 0, a_out = 0;
        double mean = 0.0;
        for (double v : b) {
            if (v < 0.05 || v > 0.15) ++b_out;
            mean += v;
        }
        mean = b.empty() ? 0.0 : mean / static_cast<double>(b.size());
        for (double v : a)
            if (v < 3.0 || v > 3.5) ++a_out;
        bool ok = b.size() >= 400 && b_out == 0 && mean >= 0.08 && mean <= 0.12 &&
                  a.size() >= 40 && a_out == 0;
        report(1, "latency bands", ok,
               fmt("%zu benign samples (%d outside [0.05,0.15]), mean %.4f s; "
                   "%zu attacked samples (%d outside [3.0,3.5])",
                   b.size(), b_out, mean, a.size(), a_out));
    }

    // 2. Car-following collision rates and benign minimum gap.
    {
        double min_gap = std::numeric_limits<double>::infinity();
        for (const RunLog& log : benign.logs)
            if (auto g = min_true_gap(log)) min_gap = std::min(min_gap, *g);
        bool ok = attacked.summary.collision_rate == 1.0 &&
                  benign.summary.collision_rate == 0.0 && min_gap >= 1.8;
        report(2, "car-following impact", ok,
               fmt("attacked collision rate %.2f, benign %.2f, benign min gap %.3f m",
                   attacked.summary.collision_rate, benign.summary.collision_rate, min_gap));
    }

    // 3. Signal response: benign compliance, attacked red-light run.
    {
        RunLog sb = run_scenario(sig_benign.config, sig_benign.fingerprint);
        RunLog sa = run_scenario(sig_attacked.config, sig_attacked.fingerprint);
        double bar = *sig_benign.config.scenario.stop_bar_x;

        bool held_at_bar = false;
        for (const TickRecord& r : sb.ticks)
            if (r.signal_color == SignalColor::Red && r.ego_v < 0.1 && bar - r.ego_x >= 0.0 &&
                bar - r.ego_x <= 5.0)
                held_at_bar = true;

        std::optional<double> green_onset, restart_t;
        for (std::size_t k = 1; k < sb.ticks.size(); ++k)
            if (sb.ticks[k - 1].signal_color == SignalColor::Red &&
                sb.ticks[k].signal_color == SignalColor::Green) {
                green_onset = sb.ticks[k].t;
                break;
            }
        if (green_onset)
            for (const TickRecord& r : sb.ticks)
                if (r.t >= *green_onset && r.ego_v >= 0.1) {
                    restart_t = r.t;
                    break;
                }
        bool restarted = green_onset && restart_t && *restart_t - *green_onset <= 2.0;

        int sb_rlr = count_events(sb, "red_light_run");
        int sb_ds = count_events(sb, "delayed_start");
        int sa_rlr = count_events(sa, "red_light_run");
        bool ok = sb_rlr == 0 && sb_ds == 0 && held_at_bar && restarted && sa_rlr == 1;
        report(3, "signal response", ok,
               fmt("benign: %d red-light runs, %d delayed starts, held at bar %s, "
                   "restart within 2 s %s; attacked: %d red-light run(s)",
                   sb_rlr, sb_ds, held_at_bar ? "yes" : "no", restarted ? "yes" : "no",
                   sa_rlr));
    }

    // 4. Inference counts over 40 s, benign vs attacked. The attacked run
    // needs the full duration, so it drives on an open road with the
    // signal far downstream.
    nlohmann::json free_road;
    free_road["sim"] = {{"duration", 40.0}, {"seed", 1}};
    free_road["scenario"] = {{"kind", "signal_response"}, {"ego_x", 0.0},
                             {"ego_v", 12.0},             {"stop_bar_x", 10000.0},
                             {"signal_offset", 0.0},      {"free_flow_speed", 12.0}};
    free_road["attack"] = {{"enabled", true}, {"launch_t", 0.0}};
    ParsedConfig free_attacked_cfg = resolve_config(free_road);
    RunLog free_attacked = run_scenario(free_attacked_cfg.config, free_attacked_cfg.fingerprint);
    {
        int bc = benign.logs[0].completions;
        int ac = free_attacked.completions;
        bool ok = bc >= 395 && bc <= 400 && ac >= 11 && ac <= 13;
        report(4, "inference counts", ok,
               fmt("benign 40 s run: %d completions (want [395,400]); "
                   "attacked 40 s run: %d completions (want [11,13])",
                   bc, ac));
    }

    // 5. Toy attack effectiveness, feasibility, and gradient fidelity.
    {
        ToyDetector det;
        const ToyImage& img = det.reference_image();
        AttackResult ar = eos_suppression_attack(det, img, 0.03, 50);
        ToyImage adv = ar.perturbation.apply(img);
        DecodeResult dr = det.decode(adv);
        double per_token = calibrate_latency(det, 0.1);
        double attacked_latency = per_token * ar.attacked_count;

        bool amplified = ar.attacked_count >= 20 * ar.benign_count || dr.hit_cap;
        bool latency_ok = attacked_latency >= 3.0 && attacked_latency <= 3.5;

        AttackResult zero = eos_suppression_attack(det, img, 0.0, 50);
        bool zero_ok = zero.attacked_count == zero.benign_count &&
                       zero.perturbation.linf() == 0.0;

        bool feasible = ar.perturbation.linf() <= 0.03 + 1e-12;
        for (std::size_t i = 0; i < adv.pixels.size(); ++i)
            feasible = feasible && adv.pixels[i] >= 0.0 && adv.pixels[i] <= 1.0;

        std::vector<double> grad;
        det.eos_logprob_loss_grad(img, grad);
        double h = 1e-6, num = 0.0, den = 0.0;
        for (int i = 0; i < 8; ++i) {
            std::size_t idx = static_cast<std::size_t>(i) * 7;
            ToyImage plus = img, minus = img;
            plus.pixels[idx] = std::min(1.0, plus.pixels[idx] + h);
            minus.pixels[idx] = std::max(0.0, minus.pixels[idx] - h);
            double fd = (det.eos_logprob_loss(plus) - det.eos_logprob_loss(minus)) /
                        (plus.pixels[idx] - minus.pixels[idx]);
            num += (grad[idx] - fd) * (grad[idx] - fd);
            den += fd * fd;
        }
        double grad_err = den > 0.0 ? std::sqrt(num / den) : 1.0;
        bool grad_ok = grad_err < 1e-4;

        bool ok = amplified && latency_ok && zero_ok && feasible && grad_ok;
        report(5, "slowdown attack", ok,
               fmt("decode %d -> %d tokens (cap %s), attacked latency %.3f s, "
                   "zero-budget ratio %s, ||delta||inf %.4f, gradient rel err %.2e",
                   ar.benign_count, ar.attacked_count, dr.hit_cap ? "hit" : "not hit",
                   attacked_latency, zero_ok ? "1" : "!=1", ar.perturbation.linf(),
                   grad_err));
    }

    // 6. Planner vs exhaustive oracle.
    {
        Rng rng(2024);
        MpcConfig proto;
        std::vector<double> grid = {proto.u_min, 0.5 * proto.u_min, 0.0, 0.5 * proto.u_max,
                                    proto.u_max};
        int within = 0;
        double worst = 1.0;
        for (int trial = 0; trial < 50; ++trial) {
            VehicleState ego{0.0, rng.uniform(0.0, 12.0), 5.0};
            std::optional<VehicleState> bv;
            MpcConfig cfg;
            cfg.N = 5;
            if (trial % 2 == 0) {
                double gap = rng.uniform(5.0, 60.0);
                bv = VehicleState{ego.x + gap + 5.0, rng.uniform(0.0, 11.0), 5.0};
                cfg.x_c = bv->rear() - cfg.safety_gap;
            }
            PlanResult fast = mpc_plan(ego, bv, cfg);
            PlanResult oracle = brute_force_plan(ego, bv, cfg, grid);
            double ratio = oracle.cost > 0.0 ? fast.cost / oracle.cost : 1.0;
            worst = std::max(worst, ratio);
            if (fast.cost <= 1.05 * oracle.cost + 1e-9) ++within;
        }
        bool ok = within == 50;
        report(6, "planner vs oracle", ok,
               fmt("%d/50 states within 1.05x of the exhaustive cost, worst ratio %.4f",
                   within, worst));
    }

    // 7. IDM analytic checks.
    {
        IdmParams p;
        VehicleState standstill{0.0, 0.0, 5.0};
        bool exact = idm_accel(standstill, std::nullopt, p) == p.a;

        Rng rng(42);
        double worst = 0.0;
        for (int i = 0; i < 10; ++i) {
            IdmParams q;
            q.v0 = rng.uniform(8.0, 20.0);
            q.T = rng.uniform(0.8, 2.0);
            q.a = rng.uniform(1.0, 3.0);
            q.b = rng.uniform(2.0, 5.0);
            q.s0 = rng.uniform(1.0, 3.0);
            double v = rng.uniform(0.0, 0.95 * q.v0);
            double s = idm_equilibrium_gap(v, q);
            VehicleState ego{0.0, v, 5.0};
            VehicleState leader{s + 5.0, v, 5.0};
            worst = std::max(worst, std::fabs(idm_accel(ego, leader, q)));
        }
        bool ok = exact && worst < 1e-6;
        report(7, "idm analytic checks", ok,
               fmt("standstill acceleration %s a, max |equilibrium accel| %.2e over 10 draws",
                   exact ? "==" : "!=", worst));
    }

    // 8. Byte-level determinism of the attacked batch.
    {
        BatchResult again =
            run_batch(cf_attacked.config, 40, cf_attacked.config.seed, cf_attacked.fingerprint);
        bool logs_equal = again.logs.size() == attacked.logs.size();
        for (std::size_t i = 0; logs_equal && i < attacked.logs.size(); ++i)
            logs_equal = run_log_to_jsonl(attacked.logs[i]) == run_log_to_jsonl(again.logs[i]);
        bool summary_equal =
            summary_to_json(attacked.summary).dump() == summary_to_json(again.summary).dump();
        bool ok = logs_equal && summary_equal;
        report(8, "determinism", ok,
               fmt("re-run of the attacked batch: run logs byte-identical %s, "
                   "summary byte-identical %s",
                   logs_equal ? "yes" : "no", summary_equal ? "yes" : "no"));
    }

    // 9. Staleness exceeds the planning horizon under attack.
    {
        double horizon = cf_attacked.config.mpc.N * cf_attacked.config.mpc.dt;
        double age_full = max_observation_age(free_attacked).value_or(0.0);
        double age_cf = 0.0;
        for (const RunLog& log : attacked.logs)
            age_cf = std::max(age_cf, max_observation_age(log).value_or(0.0));
        bool ok = age_full > 2.0 && age_cf > 2.0;
        report(9, "staleness vs horizon", ok,
               fmt("planning horizon %.1f s; max observation age %.2f s (40 s run), "
                   "%.2f s (batch)",
                   horizon, age_full, age_cf));
    }

    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all 9 criteria passed\n");
    return 0;
}
