#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latsim/runlog.hpp"
#include "latsim/types.hpp"

namespace latsim {

struct HistogramBin {
    double lo = 0.0;
    double hi = 0.0;
    std::int64_t count = 0;
};

struct RunOutcome {
    std::uint64_t seed = 0;
    bool collided = false;
    int red_light_runs = 0;
    int delayed_starts = 0;
    int completions = 0;
    int drops = 0;
};

struct BatchSummary {
    int runs = 0;
    double collision_rate = 0.0;
    int red_light_runs = 0;
    int delayed_starts = 0;
    std::vector<HistogramBin> latency_histogram;
    std::vector<RunOutcome> outcomes;
};

/// First tick where the bumper-to-bumper gap to a leader ahead reaches
/// zero. One event per run: the run is over once contact happens.
inline std::vector<RunEvent> detect_collision(const RunLog& log) {
    log.validate();
    std::vector<RunEvent> out;
    if (!log.bv_length) return out;
    for (const TickRecord& r : log.ticks) {
        if (!r.bv_x) continue;
        double gap = (*r.bv_x - *log.bv_length) - r.ego_x;
        if (gap <= 0.0 && *r.bv_x >= r.ego_x) {
            out.push_back({"collision", r.t});
            break;
        }
    }
    return out;
}

/// Ego front bumper crossing the stop bar on a tick whose actual signal
/// color is red. The color comes from the logged actual phase, so
/// re-analysis of a reloaded log is exact.
inline std::vector<RunEvent> detect_red_light_run(const RunLog& log, double stop_bar_x) {
    log.validate();
    std::vector<RunEvent> out;
    for (std::size_t k = 1; k < log.ticks.size(); ++k) {
        const TickRecord& prev = log.ticks[k - 1];
        const TickRecord& cur = log.ticks[k];
        if (prev.ego_x < stop_bar_x && cur.ego_x >= stop_bar_x) {
            if (cur.signal_color && *cur.signal_color == SignalColor::Red)
                out.push_back({"red_light_run", cur.t});
            break; // one crossing per run in these scenarios
        }
    }
    return out;
}

/// Ego still stopped near the stop bar although the actual signal has
/// been green for longer than the threshold. At most one event per green
/// phase; an infinite threshold disables detection.
inline std::vector<RunEvent> detect_delayed_start(const RunLog& log, double stop_bar_x,
                                                  double threshold = 2.0) {
    log.validate();
    std::vector<RunEvent> out;
    if (!std::isfinite(threshold)) return out;
    std::optional<double> green_onset;
    bool fired_this_green = false;
    for (const TickRecord& r : log.ticks) {
        if (!r.signal_color) continue;
        if (*r.signal_color == SignalColor::Red) {
            green_onset.reset();
            continue;
        }
        if (!green_onset) {
            // First green tick after red, or the log starts mid-green; the
            // earliest visible green tick bounds the true onset from above.
            green_onset = r.t;
            fired_this_green = false;
        }
        if (fired_this_green) continue;
        double elapsed = r.t - *green_onset;
        double dist = stop_bar_x - r.ego_x;
        if (elapsed > threshold && r.ego_v < 0.1 && dist >= 0.0 && dist <= 10.0) {
            out.push_back({"delayed_start", r.t});
            fired_this_green = true;
        }
    }
    return out;
}

/// Half-open bins [k w, (k+1) w) covering every sample.
inline std::vector<HistogramBin> latency_histogram(const std::vector<double>& samples,
                                                   double bin_width) {
    if (!(bin_width > 0.0)) throw SimError("latency_histogram: bin_width must be positive");
    std::vector<HistogramBin> bins;
    if (samples.empty()) return bins;
    std::map<std::int64_t, std::int64_t> counts;
    for (double s : samples) counts[static_cast<std::int64_t>(std::floor(s / bin_width))]++;
    for (const auto& [k, c] : counts)
        bins.push_back({static_cast<double>(k) * bin_width,
                        static_cast<double>(k + 1) * bin_width, c});
    return bins;
}

enum class SeriesKind { TimeSpace, SpeedProfile, Gap };

namespace detail {

inline void append_number(std::string& row, double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    row.append(buf, res.ptr);
}

inline void append_opt(std::string& row, const std::optional<double>& v) {
    if (v) append_number(row, *v);
}

} // namespace detail

/// Comma-separated series matching the run's figures. Row count equals
/// tick count; missing values are empty cells.
inline std::string export_series_text(const RunLog& log, SeriesKind kind) {
    log.validate();
    std::string out;
    auto finish_row = [&out](std::string& row) {
        out += row;
        out += '\n';
        row.clear();
    };
    std::string row;
    switch (kind) {
        case SeriesKind::TimeSpace: out = "t,ego_x,bv_x,signal_color\n"; break;
        case SeriesKind::SpeedProfile: out = "t,ego_v,planned_v\n"; break;
        case SeriesKind::Gap: out = "t,true_gap,perceived_gap\n"; break;
    }
    for (const TickRecord& r : log.ticks) {
        detail::append_number(row, r.t);
        row += ',';
        switch (kind) {
            case SeriesKind::TimeSpace:
                detail::append_number(row, r.ego_x);
                row += ',';
                detail::append_opt(row, r.bv_x);
                row += ',';
                if (r.signal_color) row += signal_color_name(*r.signal_color);
                break;
            case SeriesKind::SpeedProfile:
                detail::append_number(row, r.ego_v);
                row += ',';
                detail::append_opt(row, r.planned_v);
                break;
            case SeriesKind::Gap:
                detail::append_opt(row, r.gap_true);
                row += ',';
                detail::append_opt(row, r.gap_perceived);
                break;
        }
        finish_row(row);
    }
    return out;
}

inline void export_series(const RunLog& log, SeriesKind kind, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SimError("export_series: cannot open '" + path + "' for writing");
    out << export_series_text(log, kind);
    if (!out) throw SimError("export_series: write failed for '" + path + "'");
}

/// Pool per-run outcomes and latency samples. Event counts come from the
/// logs' own event lists, which run_scenario populates.
inline BatchSummary aggregate_batch(const std::vector<RunLog>& logs,
                                    double histogram_bin_width = 0.25) {
    if (logs.empty()) throw SimError("aggregate_batch: need at least one log");
    BatchSummary s;
    s.runs = static_cast<int>(logs.size());
    int collided = 0;
    std::vector<double> pooled;
    for (const RunLog& log : logs) {
        RunOutcome o;
        o.seed = log.seed;
        o.collided = log.collided;
        o.completions = log.completions;
        o.drops = log.drops;
        for (const RunEvent& e : log.events) {
            if (e.type == "red_light_run") ++o.red_light_runs;
            if (e.type == "delayed_start") ++o.delayed_starts;
        }
        collided += o.collided ? 1 : 0;
        s.red_light_runs += o.red_light_runs;
        s.delayed_starts += o.delayed_starts;
        for (const LatencySample& l : log.latency_samples) pooled.push_back(l.latency);
        s.outcomes.push_back(o);
    }
    s.collision_rate = static_cast<double>(collided) / static_cast<double>(s.runs);
    s.latency_histogram = latency_histogram(pooled, histogram_bin_width);
    return s;
}

/// Canonical JSON form of a batch summary, shared by the CLI output and
/// byte-level reproducibility checks.
inline nlohmann::json summary_to_json(const BatchSummary& s) {
    nlohmann::json j;
    j["runs"] = s.runs;
    j["collision_rate"] = s.collision_rate;
    j["red_light_runs"] = s.red_light_runs;
    j["delayed_starts"] = s.delayed_starts;
    nlohmann::json hist = nlohmann::json::array();
    for (const HistogramBin& b : s.latency_histogram)
        hist.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}});
    j["latency_histogram"] = hist;
    nlohmann::json outs = nlohmann::json::array();
    for (const RunOutcome& o : s.outcomes)
        outs.push_back({{"seed", o.seed},
                        {"collided", o.collided},
                        {"red_light_runs", o.red_light_runs},
                        {"delayed_starts", o.delayed_starts},
                        {"completions", o.completions},
                        {"drops", o.drops}});
    j["outcomes"] = outs;
    return j;
}

/// Smallest ground-truth gap over the run, if a leader was ever present.
inline std::optional<double> min_true_gap(const RunLog& log) {
    std::optional<double> m;
    for (const TickRecord& r : log.ticks)
        if (r.gap_true && (!m || *r.gap_true < *m)) m = *r.gap_true;
    return m;
}

/// Largest age of the observation in use at any tick.
inline std::optional<double> max_observation_age(const RunLog& log) {
    std::optional<double> m;
    for (const TickRecord& r : log.ticks)
        if (r.obs_age && (!m || *r.obs_age > *m)) m = *r.obs_age;
    return m;
}

} // namespace latsim
