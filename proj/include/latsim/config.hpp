#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "latsim/idm.hpp"
#include "latsim/mpc.hpp"
#include "latsim/perception.hpp"
#include "latsim/types.hpp"

namespace latsim {

enum class ScenarioKind { CarFollowing, SignalResponse };
enum class BvMode { Stationary, Idm };
enum class PerceptionMode { Injected, Synthesized };

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::CarFollowing;
    double ego_x = 0.0;
    double ego_v = 12.0;
    double ego_length = 5.0;
    bool has_bv = false;
    double bv_x = 0.0;
    double bv_v = 0.0;
    double bv_length = 5.0;
    BvMode bv_mode = BvMode::Stationary;
    std::optional<double> stop_bar_x;
    double signal_offset = 0.0;
    double free_flow_speed = 12.0;
};

struct PerceptionConfig {
    PerceptionMode mode = PerceptionMode::Injected;
    double benign_lo = 0.07;
    double benign_hi = 0.10;
    double attacked_lo = 3.0;
    double attacked_hi = 3.5;
    std::uint64_t detector_seed = 3;
    double epsilon = 0.03;
    int attack_iters = 50;
    double target_benign_latency = 0.1;
};

struct SimConfig {
    double dt = 0.1;
    double duration = 40.0;
    std::uint64_t seed = 1;
    bool stop_on_collision = true;
    double delayed_start_threshold = 2.0;
    double histogram_bin_width = 0.25;
    double fallback_brake = -4.5;
    ScenarioConfig scenario;
    IdmParams idm;
    MpcConfig mpc;
    PerceptionConfig perception;
    AttackPolicy attack;

    void validate() const {
        if (!(dt > 0.0)) throw SimError("sim.dt: must be positive");
        if (!(duration > 0.0)) throw SimError("sim.duration: must be positive");
        if (!(delayed_start_threshold > 0.0))
            throw SimError("sim.delayed_start_threshold: must be positive");
        if (!(histogram_bin_width > 0.0))
            throw SimError("sim.histogram_bin_width: must be positive");
        if (!(fallback_brake < 0.0)) throw SimError("sim.fallback_brake: must be negative");
        idm.validate();
        mpc.validate();
        LatencyModel lm;
        lm.benign_lo = perception.benign_lo;
        lm.benign_hi = perception.benign_hi;
        lm.attacked_lo = perception.attacked_lo;
        lm.attacked_hi = perception.attacked_hi;
        lm.validate();
        if (perception.epsilon < 0.0) throw SimError("perception.epsilon: must be >= 0");
        if (perception.attack_iters < 1) throw SimError("perception.attack_iters: must be >= 1");
        if (!(perception.target_benign_latency > 0.0))
            throw SimError("perception.target_benign_latency: must be positive");
        attack.validate();

        if (!(scenario.ego_length > 0.0)) throw SimError("scenario.ego_length: must be positive");
        if (scenario.ego_v < 0.0) throw SimError("scenario.ego_v: must be >= 0");
        if (scenario.ego_v > mpc.v_max + 1e-9)
            throw SimError("scenario.ego_v: exceeds mpc.v_max, outside the feasible set Z");
        if (!(scenario.free_flow_speed > 0.0))
            throw SimError("scenario.free_flow_speed: must be positive");
        if (scenario.kind == ScenarioKind::CarFollowing) {
            if (!scenario.has_bv)
                throw SimError("scenario.bv_x: required for the car_following scenario");
            if (scenario.stop_bar_x)
                throw SimError("scenario.stop_bar_x: not valid in the car_following scenario");
        } else {
            if (!scenario.stop_bar_x)
                throw SimError("scenario.stop_bar_x: required for the signal_response scenario");
            if (scenario.ego_x >= *scenario.stop_bar_x)
                throw SimError("scenario.ego_x: ego must start behind the stop bar");
        }
        if (scenario.has_bv) {
            if (!(scenario.bv_length > 0.0))
                throw SimError("scenario.bv_length: must be positive");
            if (scenario.bv_v < 0.0) throw SimError("scenario.bv_v: must be >= 0");
            double gap = (scenario.bv_x - scenario.bv_length) - scenario.ego_x;
            if (gap <= 0.0) throw SimError("scenario.ego_x: ego must start behind the BV");
            if (gap <= mpc.safety_gap)
                throw SimError("scenario.bv_x: initial gap must exceed mpc.safety_gap");
        }
        if (scenario.signal_offset < 0.0)
            throw SimError("scenario.signal_offset: must be >= 0");
    }
};

struct ParsedConfig {
    SimConfig config;
    std::vector<std::string> warnings;
    std::string fingerprint; // FNV-1a 64 of the canonical resolved form
};

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex16(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

class SectionReader {
  public:
    SectionReader(const nlohmann::json& j, std::string name)
        : j_(j), name_(std::move(name)) {}

    double number(const char* key, double fallback) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return fallback;
        if (!it->is_number()) throw SimError(path(key) + ": expected a number");
        return it->get<double>();
    }

    std::optional<double> number_opt(const char* key, std::optional<double> fallback) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return fallback;
        if (it->is_null()) return std::nullopt;
        if (!it->is_number()) throw SimError(path(key) + ": expected a number or null");
        return it->get<double>();
    }

    int integer(const char* key, int fallback) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return fallback;
        if (!it->is_number_integer()) throw SimError(path(key) + ": expected an integer");
        return it->get<int>();
    }

    std::uint64_t uinteger(const char* key, std::uint64_t fallback) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return fallback;
        if (!it->is_number_unsigned() && !it->is_number_integer())
            throw SimError(path(key) + ": expected a non-negative integer");
        if (it->is_number_integer() && it->get<std::int64_t>() < 0)
            throw SimError(path(key) + ": expected a non-negative integer");
        return it->get<std::uint64_t>();
    }

    bool boolean(const char* key, bool fallback) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return fallback;
        if (!it->is_boolean()) throw SimError(path(key) + ": expected a boolean");
        return it->get<bool>();
    }

    std::string text(const char* key, const std::string& fallback) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return fallback;
        if (!it->is_string()) throw SimError(path(key) + ": expected a string");
        return it->get<std::string>();
    }

    bool has(const char* key) const { return j_.contains(key); }

    void reject_unknown() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw SimError(name_ + "." + it.key() + ": unknown key");
    }

  private:
    std::string path(const char* key) const { return name_ + "." + key; }
    const nlohmann::json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

inline const nlohmann::json& section(const nlohmann::json& root, const char* name,
                                     const nlohmann::json& empty) {
    auto it = root.find(name);
    if (it == root.end()) return empty;
    if (!it->is_object()) throw SimError(std::string(name) + ": expected an object section");
    return *it;
}

} // namespace detail

/// Canonical resolved form: every effective value explicit, sections
/// sorted, doubles in shortest round-trip form. This string feeds the
/// fingerprint and (with warnings attached) the config echo.
inline nlohmann::json config_to_json(const SimConfig& c) {
    nlohmann::json j;
    j["sim"] = {{"dt", c.dt},
                {"duration", c.duration},
                {"seed", c.seed},
                {"stop_on_collision", c.stop_on_collision},
                {"delayed_start_threshold", c.delayed_start_threshold},
                {"histogram_bin_width", c.histogram_bin_width},
                {"fallback_brake", c.fallback_brake}};
    nlohmann::json sc;
    sc["kind"] = c.scenario.kind == ScenarioKind::CarFollowing ? "car_following"
                                                               : "signal_response";
    sc["ego_x"] = c.scenario.ego_x;
    sc["ego_v"] = c.scenario.ego_v;
    sc["ego_length"] = c.scenario.ego_length;
    if (c.scenario.has_bv) {
        sc["bv_x"] = c.scenario.bv_x;
        sc["bv_v"] = c.scenario.bv_v;
        sc["bv_length"] = c.scenario.bv_length;
        sc["bv_mode"] = c.scenario.bv_mode == BvMode::Stationary ? "stationary" : "idm";
    }
    if (c.scenario.stop_bar_x) {
        sc["stop_bar_x"] = *c.scenario.stop_bar_x;
        sc["signal_offset"] = c.scenario.signal_offset;
    }
    sc["free_flow_speed"] = c.scenario.free_flow_speed;
    j["scenario"] = sc;
    j["idm"] = {{"v0", c.idm.v0}, {"T", c.idm.T},         {"a", c.idm.a},
                {"b", c.idm.b},   {"delta", c.idm.delta}, {"s0", c.idm.s0}};
    j["mpc"] = {{"N", c.mpc.N},
                {"w1", c.mpc.w1},
                {"w2", c.mpc.w2},
                {"w3", c.mpc.w3},
                {"w4", c.mpc.w4},
                {"h", c.mpc.h},
                {"u_min", c.mpc.u_min},
                {"u_max", c.mpc.u_max},
                {"v_max", c.mpc.v_max},
                {"z_brake", c.mpc.z_brake},
                {"safety_gap", c.mpc.safety_gap},
                {"max_iters", c.mpc.max_iters}};
    j["perception"] = {{"mode", c.perception.mode == PerceptionMode::Injected ? "injected"
                                                                              : "synthesized"},
                       {"benign_lo", c.perception.benign_lo},
                       {"benign_hi", c.perception.benign_hi},
                       {"attacked_lo", c.perception.attacked_lo},
                       {"attacked_hi", c.perception.attacked_hi},
                       {"detector_seed", c.perception.detector_seed},
                       {"epsilon", c.perception.epsilon},
                       {"attack_iters", c.perception.attack_iters},
                       {"target_benign_latency", c.perception.target_benign_latency}};
    nlohmann::json at;
    at["enabled"] = c.attack.enabled;
    at["launch_t"] = c.attack.launch_t;
    at["end_t"] = c.attack.end_t ? nlohmann::json(*c.attack.end_t) : nlohmann::json(nullptr);
    at["intensity"] = c.attack.intensity;
    j["attack"] = at;
    return j;
}

inline ParsedConfig resolve_config(const nlohmann::json& root) {
    if (!root.is_object()) throw SimError("config: top level must be an object");
    static const nlohmann::json empty = nlohmann::json::object();
    std::set<std::string> known = {"sim",        "scenario", "idm",      "mpc",
                                   "perception", "attack",   "_warnings"};
    for (auto it = root.begin(); it != root.end(); ++it)
        if (!known.count(it.key())) throw SimError(it.key() + ": unknown section");

    SimConfig c;

    detail::SectionReader sim(detail::section(root, "sim", empty), "sim");
    c.dt = sim.number("dt", c.dt);
    c.duration = sim.number("duration", c.duration);
    c.seed = sim.uinteger("seed", c.seed);
    c.stop_on_collision = sim.boolean("stop_on_collision", c.stop_on_collision);
    c.delayed_start_threshold = sim.number("delayed_start_threshold", c.delayed_start_threshold);
    c.histogram_bin_width = sim.number("histogram_bin_width", c.histogram_bin_width);
    c.fallback_brake = sim.number("fallback_brake", c.fallback_brake);
    sim.reject_unknown();

    detail::SectionReader sc(detail::section(root, "scenario", empty), "scenario");
    std::string kind = sc.text("kind", "car_following");
    if (kind == "car_following") c.scenario.kind = ScenarioKind::CarFollowing;
    else if (kind == "signal_response") c.scenario.kind = ScenarioKind::SignalResponse;
    else throw SimError("scenario.kind: must be 'car_following' or 'signal_response'");
    c.scenario.ego_x = sc.number("ego_x", c.scenario.ego_x);
    c.scenario.ego_v = sc.number("ego_v", c.scenario.ego_v);
    c.scenario.ego_length = sc.number("ego_length", c.scenario.ego_length);
    c.scenario.has_bv = sc.has("bv_x");
    c.scenario.bv_x = sc.number("bv_x", c.scenario.bv_x);
    c.scenario.bv_v = sc.number("bv_v", c.scenario.bv_v);
    c.scenario.bv_length = sc.number("bv_length", c.scenario.bv_length);
    std::string mode = sc.text("bv_mode", "stationary");
    if (mode == "stationary") c.scenario.bv_mode = BvMode::Stationary;
    else if (mode == "idm") c.scenario.bv_mode = BvMode::Idm;
    else throw SimError("scenario.bv_mode: must be 'stationary' or 'idm'");
    c.scenario.stop_bar_x = sc.number_opt("stop_bar_x", std::nullopt);
    c.scenario.signal_offset = sc.number("signal_offset", c.scenario.signal_offset);
    c.scenario.free_flow_speed = sc.number("free_flow_speed", c.scenario.free_flow_speed);
    sc.reject_unknown();

    detail::SectionReader idm(detail::section(root, "idm", empty), "idm");
    c.idm.v0 = idm.number("v0", c.scenario.free_flow_speed);
    c.idm.T = idm.number("T", c.idm.T);
    c.idm.a = idm.number("a", c.idm.a);
    c.idm.b = idm.number("b", c.idm.b);
    c.idm.delta = idm.number("delta", c.idm.delta);
    c.idm.s0 = idm.number("s0", c.idm.s0);
    idm.reject_unknown();

    detail::SectionReader mpc(detail::section(root, "mpc", empty), "mpc");
    c.mpc.N = mpc.integer("N", c.mpc.N);
    c.mpc.w1 = mpc.number("w1", c.mpc.w1);
    c.mpc.w2 = mpc.number("w2", c.mpc.w2);
    c.mpc.w3 = mpc.number("w3", c.mpc.w3);
    c.mpc.w4 = mpc.number("w4", c.mpc.w4);
    c.mpc.h = mpc.number("h", c.mpc.h);
    c.mpc.u_min = mpc.number("u_min", c.mpc.u_min);
    c.mpc.u_max = mpc.number("u_max", c.mpc.u_max);
    c.mpc.v_max = mpc.number("v_max", c.scenario.free_flow_speed);
    c.mpc.z_brake = mpc.number("z_brake", c.mpc.z_brake);
    c.mpc.safety_gap = mpc.number("safety_gap", c.mpc.safety_gap);
    c.mpc.max_iters = mpc.integer("max_iters", c.mpc.max_iters);
    mpc.reject_unknown();
    c.mpc.dt = c.dt;
    c.mpc.v_ff = c.scenario.free_flow_speed;

    detail::SectionReader pc(detail::section(root, "perception", empty), "perception");
    std::string pmode = pc.text("mode", "injected");
    if (pmode == "injected") c.perception.mode = PerceptionMode::Injected;
    else if (pmode == "synthesized") c.perception.mode = PerceptionMode::Synthesized;
    else throw SimError("perception.mode: must be 'injected' or 'synthesized'");
    c.perception.benign_lo = pc.number("benign_lo", c.perception.benign_lo);
    c.perception.benign_hi = pc.number("benign_hi", c.perception.benign_hi);
    c.perception.attacked_lo = pc.number("attacked_lo", c.perception.attacked_lo);
    c.perception.attacked_hi = pc.number("attacked_hi", c.perception.attacked_hi);
    c.perception.detector_seed = pc.uinteger("detector_seed", c.perception.detector_seed);
    c.perception.epsilon = pc.number("epsilon", c.perception.epsilon);
    c.perception.attack_iters = pc.integer("attack_iters", c.perception.attack_iters);
    c.perception.target_benign_latency =
        pc.number("target_benign_latency", c.perception.target_benign_latency);
    pc.reject_unknown();

    detail::SectionReader at(detail::section(root, "attack", empty), "attack");
    c.attack.enabled = at.boolean("enabled", c.attack.enabled);
    c.attack.launch_t = at.number("launch_t", c.attack.launch_t);
    c.attack.end_t = at.number_opt("end_t", std::nullopt);
    c.attack.intensity = at.number("intensity", c.attack.intensity);
    at.reject_unknown();

    c.validate();

    ParsedConfig out;
    out.config = c;
    double eps_eff = c.perception.epsilon * (c.attack.enabled ? c.attack.intensity : 1.0);
    if (c.perception.mode == PerceptionMode::Synthesized && eps_eff > 0.03 + 1e-12) {
        char buf[64];
        auto res = std::to_chars(buf, buf + sizeof(buf), eps_eff);
        out.warnings.push_back("effective perturbation budget " +
                               std::string(buf, res.ptr) +
                               " exceeds the conventional imperceptibility budget 0.03");
    }
    out.fingerprint = detail::hex16(detail::fnv1a64(config_to_json(c).dump()));
    return out;
}

inline ParsedConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SimError("config: cannot open '" + path + "'");
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw SimError("config: " + std::string(e.what()));
    }
    return resolve_config(root);
}

/// Echo of the fully resolved config, including any warnings, suitable
/// both for humans and for re-parsing (round-trips to the same config).
inline std::string config_echo(const ParsedConfig& p) {
    nlohmann::json j = config_to_json(p.config);
    j["_warnings"] = p.warnings;
    return j.dump(2) + "\n";
}

} // namespace latsim
