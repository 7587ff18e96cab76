// Command-line front end: single runs, batches, and the attack demo.
// Exit codes: 0 success, 1 config error, 2 I/O error, 3 internal error.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "latsim/attack.hpp"
#include "latsim/batch.hpp"
#include "latsim/config.hpp"
#include "latsim/detector.hpp"
#include "latsim/metrics.hpp"
#include "latsim/sim.hpp"

namespace fs = std::filesystem;
using namespace latsim;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kIoError = 2;
constexpr int kInternalError = 3;

fs::path output_root() {
    if (const char* env = std::getenv("LATSIM_OUT_ROOT")) return fs::path(env);
    return fs::path("out");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SimError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw SimError("write failed for '" + path.string() + "'");
}

void print_warnings(const ParsedConfig& pc) {
    for (const std::string& w : pc.warnings) std::cerr << "warning: " << w << "\n";
}

nlohmann::json run_summary_json(const RunLog& log) {
    nlohmann::json j;
    j["fingerprint"] = log.fingerprint;
    j["seed"] = log.seed;
    j["collided"] = log.collided;
    j["collision_t"] = detail::opt_num(log.collision_t);
    bool rlr = false, ds = false;
    nlohmann::json events = nlohmann::json::array();
    for (const RunEvent& e : log.events) {
        events.push_back({{"t", e.t}, {"type", e.type}});
        rlr = rlr || e.type == "red_light_run";
        ds = ds || e.type == "delayed_start";
    }
    j["red_light_run"] = rlr;
    j["delayed_start"] = ds;
    j["events"] = events;
    j["completions"] = log.completions;
    j["drops"] = log.drops;
    j["min_true_gap"] = detail::opt_num(min_true_gap(log));
    j["max_observation_age"] = detail::opt_num(max_observation_age(log));
    return j;
}

void write_run_artifacts(const RunLog& log, const fs::path& dir) {
    fs::create_directories(dir);
    save_run_log(log, (dir / "run_log.jsonl").string());
    export_series(log, SeriesKind::TimeSpace, (dir / "time_space.csv").string());
    export_series(log, SeriesKind::SpeedProfile, (dir / "speed_profile.csv").string());
    export_series(log, SeriesKind::Gap, (dir / "gap.csv").string());
    write_text(dir / "summary.json", run_summary_json(log).dump(2) + "\n");
}

/// Apply a seed override by editing the resolved form and re-resolving, so
/// the fingerprint and echo always describe the effective configuration.
ParsedConfig with_seed(const ParsedConfig& pc, std::uint64_t seed) {
    nlohmann::json root = config_to_json(pc.config);
    root["sim"]["seed"] = seed;
    return resolve_config(root);
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<std::string> out_dir) {
    ParsedConfig pc;
    try {
        pc = parse_config(config_path);
        if (seed) pc = with_seed(pc, *seed);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
    print_warnings(pc);

    RunLog log;
    try {
        log = run_scenario(pc.config, pc.fingerprint);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternalError;
    }

    fs::path dir = out_dir ? fs::path(*out_dir)
                           : output_root() / ("run-" + pc.fingerprint + "-s" +
                                              std::to_string(pc.config.seed));
    try {
        write_run_artifacts(log, dir);
        write_text(dir / "resolved_config.json", config_echo(pc));
    } catch (const std::exception& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIoError;
    }

    std::cout << "run complete: seed " << log.seed << ", " << log.ticks.size() << " ticks, "
              << log.completions << " completions";
    if (log.collided) std::cout << ", collision at t=" << *log.collision_t << " s";
    std::cout << "\nartifacts in " << dir.string() << "\n";
    return kOk;
}

int cmd_batch(const std::string& config_path, int runs, std::optional<std::uint64_t> base_seed,
              std::optional<std::string> out_dir) {
    ParsedConfig pc;
    try {
        pc = parse_config(config_path);
        if (runs < 1) throw SimError("batch: --runs must be >= 1");
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kConfigError;
    }
    print_warnings(pc);
    std::uint64_t seed0 = base_seed ? *base_seed : pc.config.seed;

    BatchResult batch;
    try {
        batch = run_batch(pc.config, runs, seed0, pc.fingerprint);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternalError;
    }

    fs::path dir = out_dir ? fs::path(*out_dir)
                           : output_root() / ("batch-" + pc.fingerprint + "-s" +
                                              std::to_string(seed0));
    bool io_failed = false;
    for (std::size_t i = 0; i < batch.logs.size(); ++i) {
        char sub[16];
        std::snprintf(sub, sizeof(sub), "run_%03zu", i);
        try {
            write_run_artifacts(batch.logs[i], dir / sub);
        } catch (const std::exception& e) {
            // Keep writing the remaining runs; report the failure at the end.
            std::cerr << "i/o error: " << e.what() << "\n";
            io_failed = true;
        }
    }
    try {
        write_text(dir / "batch_summary.json", summary_to_json(batch.summary).dump(2) + "\n");
        write_text(dir / "resolved_config.json", config_echo(pc));
    } catch (const std::exception& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        io_failed = true;
    }
    if (io_failed) return kIoError;

    std::cout << "batch complete: " << runs << " runs, seeds " << seed0 << ".."
              << seed0 + static_cast<std::uint64_t>(runs - 1) << ", collision rate "
              << batch.summary.collision_rate << "\nartifacts in " << dir.string() << "\n";
    return kOk;
}

int cmd_attack_demo(std::uint64_t detector_seed, double epsilon, int iters,
                    std::optional<std::string> out_dir) {
    if (epsilon < 0.0) {
        std::cerr << "config error: --epsilon must be >= 0\n";
        return kConfigError;
    }
    if (iters < 1) {
        std::cerr << "config error: --iters must be >= 1\n";
        return kConfigError;
    }

    nlohmann::json report;
    std::optional<ToyDetector> det;
    AttackResult ar;
    double per_token = 0.0;
    bool hit_cap = false;
    try {
        DetectorConfig dc;
        dc.seed = detector_seed;
        det.emplace(dc);
        ar = eos_suppression_attack(*det, det->reference_image(), epsilon, iters);
        hit_cap = det->decode(ar.perturbation.apply(det->reference_image())).hit_cap;
        per_token = calibrate_latency(*det, 0.1);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kInternalError;
    }

    report["detector_seed"] = detector_seed;
    report["epsilon"] = epsilon;
    report["iters"] = iters;
    report["benign_count"] = ar.benign_count;
    report["attacked_count"] = ar.attacked_count;
    report["hit_cap"] = hit_cap;
    report["amplification"] = static_cast<double>(ar.attacked_count) /
                              static_cast<double>(ar.benign_count);
    report["accepted_steps"] = ar.accepted_steps;
    report["loss_trace"] = ar.loss_trace;
    report["linf"] = ar.perturbation.linf();
    report["per_token_cost"] = per_token;
    report["benign_latency"] = per_token * ar.benign_count;
    report["attacked_latency"] = per_token * ar.attacked_count;
    nlohmann::json warnings = nlohmann::json::array();
    if (epsilon > 0.03 + 1e-12) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%g", epsilon);
        warnings.push_back("perturbation budget " + std::string(buf) +
                           " exceeds the conventional imperceptibility budget 0.03");
    }
    report["_warnings"] = warnings;
    for (const auto& w : warnings) std::cerr << "warning: " << w.get<std::string>() << "\n";

    fs::path dir = out_dir ? fs::path(*out_dir) : output_root() / "attack-demo";
    try {
        fs::create_directories(dir);
        write_text(dir / "attack_report.json", report.dump(2) + "\n");
        det->save((dir / "detector_weights.bin").string());
    } catch (const std::exception& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kIoError;
    }

    std::cout << "attack demo: decode " << ar.benign_count << " -> " << ar.attacked_count
              << " tokens, attacked latency " << per_token * ar.attacked_count
              << " s\nartifacts in " << dir.string() << "\n";
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"inference-latency attack impact simulator"};
    app.require_subcommand(1);

    std::string run_config;
    std::uint64_t run_seed = 0;
    std::string run_out;
    CLI::App* run = app.add_subcommand("run", "execute one scenario from a config file");
    run->add_option("--config", run_config, "scenario config file")->required();
    CLI::Option* run_seed_opt =
        run->add_option("--seed", run_seed, "override the config's RNG seed");
    CLI::Option* run_out_opt = run->add_option("--out", run_out, "output directory");

    std::string batch_config;
    int batch_runs = 40;
    std::uint64_t batch_seed = 0;
    std::string batch_out;
    CLI::App* batch = app.add_subcommand("batch", "execute a seeded batch of runs");
    batch->add_option("--config", batch_config, "scenario config file")->required();
    batch->add_option("--runs", batch_runs, "number of runs (default 40)");
    CLI::Option* batch_seed_opt =
        batch->add_option("--base-seed", batch_seed, "first seed (default: config seed)");
    CLI::Option* batch_out_opt = batch->add_option("--out", batch_out, "output directory");

    std::uint64_t demo_seed = 3;
    double demo_eps = 0.03;
    int demo_iters = 50;
    std::string demo_out;
    CLI::App* demo =
        app.add_subcommand("attack-demo", "run the slowdown attack on the toy detector");
    demo->add_option("--seed", demo_seed, "detector weight seed (default 3)");
    demo->add_option("--epsilon", demo_eps, "L-infinity perturbation budget (default 0.03)");
    demo->add_option("--iters", demo_iters, "attack iterations (default 50)");
    CLI::Option* demo_out_opt = demo->add_option("--out", demo_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    if (app.got_subcommand(run)) {
        std::optional<std::uint64_t> seed;
        if (run_seed_opt->count() > 0) seed = run_seed;
        std::optional<std::string> out;
        if (run_out_opt->count() > 0) out = run_out;
        return cmd_run(run_config, seed, out);
    }
    if (app.got_subcommand(batch)) {
        std::optional<std::uint64_t> seed;
        if (batch_seed_opt->count() > 0) seed = batch_seed;
        std::optional<std::string> out;
        if (batch_out_opt->count() > 0) out = batch_out;
        return cmd_batch(batch_config, batch_runs, seed, out);
    }
    std::optional<std::string> out;
    if (demo_out_opt->count() > 0) out = demo_out;
    return cmd_attack_demo(demo_seed, demo_eps, demo_iters, out);
}
