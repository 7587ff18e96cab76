#include <catch2/catch_amalgamated.hpp>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "latsim/config.hpp"

using namespace latsim;
using nlohmann::json;

namespace {

json minimal() { return json{{"scenario", {{"bv_x", 45.0}}}}; }

} // namespace

TEST_CASE("defaults resolve from a minimal config") {
    ParsedConfig p = resolve_config(minimal());
    const SimConfig& c = p.config;
    REQUIRE(c.dt == 0.1);
    REQUIRE(c.duration == 40.0);
    REQUIRE(c.seed == 1);
    REQUIRE(c.stop_on_collision);
    REQUIRE(c.scenario.kind == ScenarioKind::CarFollowing);
    REQUIRE(c.scenario.has_bv);
    REQUIRE(c.scenario.bv_x == 45.0);
    REQUIRE(c.scenario.bv_mode == BvMode::Stationary);
    REQUIRE(c.perception.mode == PerceptionMode::Injected);
    REQUIRE(c.mpc.dt == c.dt);
    REQUIRE(p.warnings.empty());
    REQUIRE(p.fingerprint.size() == 16);
}

TEST_CASE("free flow speed feeds the controller and idm defaults") {
    json j = minimal();
    j["scenario"]["free_flow_speed"] = 10.0;
    j["scenario"]["ego_v"] = 10.0;
    ParsedConfig p = resolve_config(j);
    REQUIRE(p.config.mpc.v_ff == 10.0);
    REQUIRE(p.config.mpc.v_max == 10.0);
    REQUIRE(p.config.idm.v0 == 10.0);

    j["mpc"]["v_max"] = 14.0;
    j["idm"]["v0"] = 11.0;
    ParsedConfig q = resolve_config(j);
    REQUIRE(q.config.mpc.v_max == 14.0);
    REQUIRE(q.config.mpc.v_ff == 10.0);
    REQUIRE(q.config.idm.v0 == 11.0);
}

TEST_CASE("echo round-trips to the same fingerprint") {
    json j = minimal();
    j["sim"] = {{"seed", 9}, {"duration", 30.0}};
    j["attack"] = {{"enabled", true}, {"launch_t", 0.5}};
    ParsedConfig p = resolve_config(j);
    ParsedConfig q = resolve_config(json::parse(config_echo(p)));
    REQUIRE(q.fingerprint == p.fingerprint);
    REQUIRE(config_echo(q) == config_echo(p));
}

TEST_CASE("fingerprint is stable and input-sensitive") {
    REQUIRE(resolve_config(minimal()).fingerprint ==
            resolve_config(minimal()).fingerprint);
    json j = minimal();
    j["sim"]["seed"] = 2;
    REQUIRE(resolve_config(j).fingerprint != resolve_config(minimal()).fingerprint);
}

TEST_CASE("unknown keys and sections are rejected by path") {
    json j = minimal();
    j["mpc"]["gamma"] = 1.0;
    REQUIRE_THROWS_WITH(resolve_config(j),
                        Catch::Matchers::ContainsSubstring("mpc.gamma"));

    json k = minimal();
    k["scenario"]["bv_speed"] = 1.0;
    REQUIRE_THROWS_WITH(resolve_config(k),
                        Catch::Matchers::ContainsSubstring("scenario.bv_speed"));

    json s = minimal();
    s["planner"] = json::object();
    REQUIRE_THROWS_WITH(resolve_config(s),
                        Catch::Matchers::ContainsSubstring("unknown section"));
}

TEST_CASE("type mismatches name the offending key") {
    json j = minimal();
    j["sim"]["dt"] = "fast";
    REQUIRE_THROWS_WITH(resolve_config(j),
                        Catch::Matchers::ContainsSubstring("sim.dt"));
    json k = minimal();
    k["sim"]["seed"] = -4;
    REQUIRE_THROWS_WITH(resolve_config(k),
                        Catch::Matchers::ContainsSubstring("sim.seed"));
}

TEST_CASE("scenario invariants are enforced") {
    SECTION("car following needs a BV") {
        REQUIRE_THROWS_WITH(resolve_config(json::object()),
                            Catch::Matchers::ContainsSubstring("scenario.bv_x"));
    }
    SECTION("car following forbids a stop bar") {
        json j = minimal();
        j["scenario"]["stop_bar_x"] = 300.0;
        REQUIRE_THROWS_WITH(resolve_config(j),
                            Catch::Matchers::ContainsSubstring("stop_bar_x"));
    }
    SECTION("signal response needs a stop bar") {
        json j = {{"scenario", {{"kind", "signal_response"}}}};
        REQUIRE_THROWS_WITH(resolve_config(j),
                            Catch::Matchers::ContainsSubstring("stop_bar_x"));
    }
    SECTION("ego must start behind the stop bar") {
        json j = {{"scenario",
                   {{"kind", "signal_response"}, {"stop_bar_x", 300.0}, {"ego_x", 400.0}}}};
        REQUIRE_THROWS_WITH(resolve_config(j),
                            Catch::Matchers::ContainsSubstring("behind the stop bar"));
    }
    SECTION("ego must start behind the BV") {
        json j = minimal();
        j["scenario"]["bv_x"] = 3.0;
        REQUIRE_THROWS_WITH(resolve_config(j),
                            Catch::Matchers::ContainsSubstring("behind the BV"));
    }
    SECTION("initial gap must exceed the safety gap") {
        json j = minimal();
        j["scenario"]["bv_x"] = 6.5;
        REQUIRE_THROWS_WITH(resolve_config(j),
                            Catch::Matchers::ContainsSubstring("safety_gap"));
    }
    SECTION("initial speed must lie in the feasible set") {
        json j = minimal();
        j["scenario"]["ego_v"] = 15.0;
        REQUIRE_THROWS_WITH(resolve_config(j),
                            Catch::Matchers::ContainsSubstring("feasible set"));
    }
}

TEST_CASE("oversized perturbation budgets warn in synthesized mode") {
    json j = minimal();
    j["perception"] = {{"mode", "synthesized"}, {"epsilon", 0.05}};
    ParsedConfig p = resolve_config(j);
    REQUIRE(p.warnings.size() == 1);
    REQUIRE_THAT(p.warnings[0],
                 Catch::Matchers::ContainsSubstring(
                     "exceeds the conventional imperceptibility budget 0.03"));
    REQUIRE_THAT(p.warnings[0], Catch::Matchers::ContainsSubstring("0.05"));

    SECTION("intensity scales the effective budget") {
        json k = minimal();
        k["perception"] = {{"mode", "synthesized"}, {"epsilon", 0.02}};
        k["attack"] = {{"enabled", true}, {"intensity", 2.0}};
        REQUIRE(resolve_config(k).warnings.size() == 1);
    }
    SECTION("the default budget stays quiet") {
        json k = minimal();
        k["perception"] = {{"mode", "synthesized"}};
        REQUIRE(resolve_config(k).warnings.empty());
    }
    SECTION("injected mode never warns") {
        json k = minimal();
        k["perception"] = {{"epsilon", 0.05}};
        REQUIRE(resolve_config(k).warnings.empty());
    }
}

TEST_CASE("parse_config reads files and reports failures") {
    const char* path = "config_test_tmp.json";
    {
        std::ofstream out(path);
        out << minimal().dump();
    }
    ParsedConfig p = parse_config(path);
    REQUIRE(p.config.scenario.bv_x == 45.0);
    {
        std::ofstream out(path);
        out << "{ not json";
    }
    REQUIRE_THROWS_AS(parse_config(path), SimError);
    std::remove(path);
    REQUIRE_THROWS_WITH(parse_config(path),
                        Catch::Matchers::ContainsSubstring("cannot open"));
}
