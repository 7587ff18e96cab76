#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latsim/types.hpp"

namespace latsim {

/// One simulation tick as logged. Field names mirror the serialized
/// schema; optional fields serialize as null when absent.
struct TickRecord {
    double t = 0.0;
    double ego_x = 0.0;
    double ego_v = 0.0;
    double ego_u = 0.0;
    std::optional<double> bv_x;
    std::optional<double> bv_v;
    std::optional<SignalColor> signal_color; // actual phase at t
    std::optional<double> obs_capture_t;     // observation in use this tick
    std::optional<double> obs_age;           // t - obs_capture_t
    bool inference_busy = false;
    bool attack_active = false;
    bool converged = true;
    std::optional<double> planned_v;      // planned ego speed one step ahead
    std::optional<double> gap_true;       // bv rear - ego front, ground truth
    std::optional<double> gap_perceived;  // same metric from the observation
    std::vector<std::string> events;      // event types fired this tick
};

struct RunEvent {
    std::string type; // "collision" | "red_light_run" | "delayed_start"
    double t = 0.0;
};

struct LatencySample {
    double t = 0.0;       // submission time
    double latency = 0.0; // seconds of simulated inference time
    bool attacked = false;
};

/// Complete record of one simulated run.
struct RunLog {
    std::string fingerprint;
    std::uint64_t seed = 0;
    double dt = 0.1;
    double duration = 0.0;
    double ego_length = 5.0;
    std::optional<double> bv_length;
    std::optional<double> stop_bar_x;
    std::optional<double> signal_offset;

    std::vector<TickRecord> ticks;
    std::vector<RunEvent> events;
    std::vector<LatencySample> latency_samples;
    int completions = 0; // observations delivered to the controller
    int drops = 0;       // frames skipped because the pipeline was busy
    bool collided = false;
    std::optional<double> collision_t;

    void validate() const {
        if (dt <= 0.0) throw SimError("RunLog: dt must be positive");
        for (std::size_t k = 0; k + 1 < ticks.size(); ++k) {
            double expect = ticks[k].t + dt;
            if (std::fabs(ticks[k + 1].t - expect) > 1e-9)
                throw SimError("RunLog: ticks must increase by exactly dt");
        }
        for (const RunEvent& e : events) {
            bool found = false;
            for (const TickRecord& r : ticks)
                if (std::fabs(r.t - e.t) <= 1e-9) {
                    found = true;
                    break;
                }
            if (!found) throw SimError("RunLog: event time not on the tick grid");
        }
    }
};

namespace detail {

inline nlohmann::json opt_num(const std::optional<double>& v) {
    if (v) return *v;
    return nullptr;
}

inline std::optional<double> num_opt(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<double>();
}

} // namespace detail

inline const char* signal_color_name(SignalColor c) {
    return c == SignalColor::Green ? "green" : "red";
}

inline SignalColor signal_color_from_name(const std::string& s) {
    if (s == "green") return SignalColor::Green;
    if (s == "red") return SignalColor::Red;
    throw SimError("RunLog: unknown signal color '" + s + "'");
}

inline nlohmann::json tick_to_json(const TickRecord& r) {
    nlohmann::json j;
    j["record"] = "tick";
    j["t"] = r.t;
    j["ego.x"] = r.ego_x;
    j["ego.v"] = r.ego_v;
    j["ego.u"] = r.ego_u;
    j["bv.x"] = detail::opt_num(r.bv_x);
    j["bv.v"] = detail::opt_num(r.bv_v);
    j["signal.color"] = r.signal_color ? nlohmann::json(signal_color_name(*r.signal_color))
                                       : nlohmann::json(nullptr);
    j["obs.capture_t"] = detail::opt_num(r.obs_capture_t);
    j["obs.age"] = detail::opt_num(r.obs_age);
    j["inference_busy"] = r.inference_busy;
    j["attack_active"] = r.attack_active;
    j["converged"] = r.converged;
    j["planned_v"] = detail::opt_num(r.planned_v);
    j["gap.true"] = detail::opt_num(r.gap_true);
    j["gap.perceived"] = detail::opt_num(r.gap_perceived);
    j["events"] = r.events;
    return j;
}

inline TickRecord tick_from_json(const nlohmann::json& j) {
    TickRecord r;
    r.t = j.at("t").get<double>();
    r.ego_x = j.at("ego.x").get<double>();
    r.ego_v = j.at("ego.v").get<double>();
    r.ego_u = j.at("ego.u").get<double>();
    r.bv_x = detail::num_opt(j, "bv.x");
    r.bv_v = detail::num_opt(j, "bv.v");
    if (!j.at("signal.color").is_null())
        r.signal_color = signal_color_from_name(j.at("signal.color").get<std::string>());
    r.obs_capture_t = detail::num_opt(j, "obs.capture_t");
    r.obs_age = detail::num_opt(j, "obs.age");
    r.inference_busy = j.at("inference_busy").get<bool>();
    r.attack_active = j.at("attack_active").get<bool>();
    r.converged = j.at("converged").get<bool>();
    r.planned_v = detail::num_opt(j, "planned_v");
    r.gap_true = detail::num_opt(j, "gap.true");
    r.gap_perceived = detail::num_opt(j, "gap.perceived");
    for (const auto& e : j.at("events")) r.events.push_back(e.get<std::string>());
    return r;
}

/// Line-delimited serialization: one header record, one record per tick,
/// one footer record. nlohmann::json keeps object keys sorted and prints
/// shortest round-trip doubles, which makes the bytes reproducible.
inline std::string run_log_to_jsonl(const RunLog& log) {
    std::ostringstream out;
    nlohmann::json h;
    h["record"] = "header";
    h["fingerprint"] = log.fingerprint;
    h["seed"] = log.seed;
    h["dt"] = log.dt;
    h["duration"] = log.duration;
    h["ego_length"] = log.ego_length;
    h["bv_length"] = detail::opt_num(log.bv_length);
    h["stop_bar_x"] = detail::opt_num(log.stop_bar_x);
    h["signal_offset"] = detail::opt_num(log.signal_offset);
    out << h.dump() << '\n';
    for (const TickRecord& r : log.ticks) out << tick_to_json(r).dump() << '\n';
    nlohmann::json f;
    f["record"] = "footer";
    f["completions"] = log.completions;
    f["drops"] = log.drops;
    f["collided"] = log.collided;
    f["collision_t"] = detail::opt_num(log.collision_t);
    nlohmann::json evs = nlohmann::json::array();
    for (const RunEvent& e : log.events) evs.push_back({{"t", e.t}, {"type", e.type}});
    f["events"] = evs;
    nlohmann::json ls = nlohmann::json::array();
    for (const LatencySample& s : log.latency_samples)
        ls.push_back({{"attacked", s.attacked}, {"latency", s.latency}, {"t", s.t}});
    f["latency_samples"] = ls;
    out << f.dump() << '\n';
    return out.str();
}

inline RunLog run_log_from_jsonl(std::istream& in) {
    RunLog log;
    std::string line;
    bool saw_header = false, saw_footer = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        std::string kind = j.at("record").get<std::string>();
        if (kind == "header") {
            if (saw_header) throw SimError("RunLog: duplicate header record");
            saw_header = true;
            log.fingerprint = j.at("fingerprint").get<std::string>();
            log.seed = j.at("seed").get<std::uint64_t>();
            log.dt = j.at("dt").get<double>();
            log.duration = j.at("duration").get<double>();
            log.ego_length = j.at("ego_length").get<double>();
            log.bv_length = detail::num_opt(j, "bv_length");
            log.stop_bar_x = detail::num_opt(j, "stop_bar_x");
            log.signal_offset = detail::num_opt(j, "signal_offset");
        } else if (kind == "tick") {
            if (!saw_header) throw SimError("RunLog: tick before header");
            if (saw_footer) throw SimError("RunLog: tick after footer");
            log.ticks.push_back(tick_from_json(j));
        } else if (kind == "footer") {
            if (!saw_header) throw SimError("RunLog: footer before header");
            if (saw_footer) throw SimError("RunLog: duplicate footer record");
            saw_footer = true;
            log.completions = j.at("completions").get<int>();
            log.drops = j.at("drops").get<int>();
            log.collided = j.at("collided").get<bool>();
            log.collision_t = detail::num_opt(j, "collision_t");
            for (const auto& e : j.at("events"))
                log.events.push_back({e.at("type").get<std::string>(), e.at("t").get<double>()});
            for (const auto& s : j.at("latency_samples"))
                log.latency_samples.push_back({s.at("t").get<double>(),
                                               s.at("latency").get<double>(),
                                               s.at("attacked").get<bool>()});
        } else {
            throw SimError("RunLog: unknown record kind '" + kind + "'");
        }
    }
    if (!saw_header || !saw_footer) throw SimError("RunLog: missing header or footer record");
    log.validate();
    return log;
}

inline void save_run_log(const RunLog& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SimError("RunLog: cannot open '" + path + "' for writing");
    out << run_log_to_jsonl(log);
    if (!out) throw SimError("RunLog: write failed for '" + path + "'");
}

inline RunLog load_run_log(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SimError("RunLog: cannot open '" + path + "' for reading");
    return run_log_from_jsonl(in);
}

} // namespace latsim
