#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include <nlohmann/json.hpp>

#include "latsim/metrics.hpp"
#include "latsim/sim.hpp"

using namespace latsim;
using nlohmann::json;

namespace {

SimConfig car_following(bool attacked) {
    json j;
    j["sim"] = {{"duration", 40.0}, {"seed", 1}};
    j["scenario"] = {{"kind", "car_following"}, {"ego_x", 0.0},  {"ego_v", 12.0},
                     {"bv_x", 45.0},            {"bv_v", 0.0},   {"free_flow_speed", 12.0}};
    if (attacked) j["attack"] = {{"enabled", true}, {"launch_t", 0.5}};
    return resolve_config(j).config;
}

SimConfig signal_response(double bar, std::optional<double> attack_launch) {
    json j;
    j["sim"] = {{"duration", 40.0}, {"seed", 1}};
    j["scenario"] = {{"kind", "signal_response"}, {"ego_x", 0.0},
                     {"ego_v", 12.0},             {"stop_bar_x", bar},
                     {"signal_offset", 0.0},      {"free_flow_speed", 12.0}};
    if (attack_launch) j["attack"] = {{"enabled", true}, {"launch_t", *attack_launch}};
    return resolve_config(j).config;
}

bool has_event(const RunLog& log, const char* type) {
    for (const RunEvent& e : log.events)
        if (e.type == type) return true;
    return false;
}

int count_events(const RunLog& log, const char* type) {
    int n = 0;
    for (const RunEvent& e : log.events) n += e.type == type ? 1 : 0;
    return n;
}

} // namespace

TEST_CASE("benign car following tracks the leader without incident") {
    RunLog log = run_scenario(car_following(false), "fp-benign");
    REQUIRE(log.fingerprint == "fp-benign");
    REQUIRE(log.ticks.size() == 400);
    REQUIRE_FALSE(log.collided);
    REQUIRE(log.events.empty());
    REQUIRE(log.completions == 399);
    REQUIRE(log.drops == 0);
    for (std::size_t k = 1; k < log.ticks.size(); ++k)
        REQUIRE(log.ticks[k].ego_x >= log.ticks[k - 1].ego_x);
    REQUIRE(min_true_gap(log).value() >= 1.8);
    for (const LatencySample& s : log.latency_samples) {
        REQUIRE_FALSE(s.attacked);
        REQUIRE(s.latency >= 0.07);
        REQUIRE(s.latency < 0.10);
    }
}

TEST_CASE("the latency attack turns the same approach into a collision") {
    RunLog log = run_scenario(car_following(true));
    REQUIRE(log.collided);
    REQUIRE(log.collision_t.value() == Catch::Approx(3.4).margin(1e-9));
    REQUIRE(log.ticks.size() < 400); // stop_on_collision truncates the run
    REQUIRE(log.ticks.back().t == Catch::Approx(*log.collision_t).margin(1e-9));
    REQUIRE(log.ticks.back().gap_true.value() <= 0.0);
    REQUIRE(count_events(log, "collision") == 1);
    REQUIRE_FALSE(log.ticks.back().events.empty());
    REQUIRE(log.ticks.back().events[0] == "collision");
    bool saw_stale = false;
    for (const TickRecord& r : log.ticks)
        if (r.obs_age && *r.obs_age > 2.0) saw_stale = true;
    REQUIRE(saw_stale);
}

TEST_CASE("runs continue past contact when stop_on_collision is off") {
    SimConfig cfg = car_following(true);
    cfg.stop_on_collision = false;
    RunLog log = run_scenario(cfg);
    REQUIRE(log.ticks.size() == 400);
    REQUIRE(log.collided);
    REQUIRE(log.collision_t.value() == Catch::Approx(3.4).margin(1e-9));
    REQUIRE(count_events(log, "collision") == 1);
}

TEST_CASE("free road holds the free-flow speed and follows the signal cycle") {
    RunLog log = run_scenario(signal_response(10000.0, std::nullopt));
    for (const TickRecord& r : log.ticks) {
        if (r.t >= 1.0) REQUIRE(std::fabs(r.ego_v - 12.0) <= 0.5);
        REQUIRE(r.signal_color.has_value());
        bool red = r.t >= 20.0 - 1e-9 && r.t < 35.0 - 1e-9;
        REQUIRE(*r.signal_color == (red ? SignalColor::Red : SignalColor::Green));
    }
}

TEST_CASE("benign signal response stops on red and restarts on green") {
    RunLog log = run_scenario(signal_response(300.0, std::nullopt));
    REQUIRE(log.events.empty());

    bool held_at_bar = false;
    for (const TickRecord& r : log.ticks) {
        if (r.signal_color == SignalColor::Red && r.ego_v < 0.1) {
            double dist = 300.0 - r.ego_x;
            if (dist >= 0.0 && dist <= 5.0) held_at_bar = true;
        }
        if (r.ego_x >= 300.0) REQUIRE(*r.signal_color == SignalColor::Green);
    }
    REQUIRE(held_at_bar);

    std::optional<double> restart_t;
    for (const TickRecord& r : log.ticks)
        if (r.t >= 35.0 && r.ego_v >= 0.1) {
            restart_t = r.t;
            break;
        }
    REQUIRE(restart_t.has_value());
    REQUIRE(*restart_t - 35.0 <= 2.0);
}

TEST_CASE("a mid-approach attack causes exactly one red light run") {
    RunLog log = run_scenario(signal_response(300.0, 16.0));
    REQUIRE(count_events(log, "red_light_run") == 1);
    REQUIRE_FALSE(log.collided);
    bool crossed_on_red = false;
    for (const TickRecord& r : log.ticks)
        if (r.ego_x >= 300.0 && r.signal_color == SignalColor::Red) crossed_on_red = true;
    REQUIRE(crossed_on_red);
}

TEST_CASE("an attack while stopped delays the start after green") {
    RunLog log = run_scenario(signal_response(300.0, 30.0));
    REQUIRE(count_events(log, "delayed_start") == 1);
    REQUIRE(count_events(log, "red_light_run") == 0);
    // The stale red keeps the ego pinned well into the green phase.
    bool stopped_during_green = false;
    for (const TickRecord& r : log.ticks)
        if (r.t >= 37.0 && r.t <= 37.5 && r.ego_v < 0.1) stopped_during_green = true;
    REQUIRE(stopped_during_green);
    REQUIRE(has_event(log, "delayed_start"));
}

TEST_CASE("same seed, same bytes") {
    SimConfig cfg = car_following(true);
    std::string a = run_log_to_jsonl(run_scenario(cfg, "fp"));
    std::string b = run_log_to_jsonl(run_scenario(cfg, "fp"));
    REQUIRE(a == b);
    cfg.seed = 2;
    std::string c = run_log_to_jsonl(run_scenario(cfg, "fp"));
    REQUIRE(a != c);
}

TEST_CASE("synthesized perception charges the calibrated decode cost") {
    json j;
    j["sim"] = {{"duration", 10.0}, {"seed", 5}};
    j["scenario"] = {{"kind", "car_following"}, {"bv_x", 200.0}, {"bv_v", 11.0},
                     {"bv_mode", "idm"},        {"ego_v", 12.0}};
    j["perception"] = {{"mode", "synthesized"}, {"target_benign_latency", 0.095}};
    SimConfig cfg = resolve_config(j).config;
    RunLog log = run_scenario(cfg);
    REQUIRE(log.ticks.size() == 100);
    REQUIRE(log.completions == 99);
    REQUIRE(log.drops == 0);
    for (const LatencySample& s : log.latency_samples)
        REQUIRE(s.latency == Catch::Approx(0.095).margin(1e-12));
}
