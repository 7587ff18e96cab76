#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latsim/config.hpp"
#include "latsim/metrics.hpp"
#include "latsim/sim.hpp"

namespace latsim {

struct BatchResult {
    std::vector<RunLog> logs;
    BatchSummary summary;
};

/// Run `runs` copies of the scenario under seeds base_seed .. base_seed +
/// runs - 1. Runs are independent; executing them sequentially keeps the
/// batch bit-reproducible with no further machinery.
inline BatchResult run_batch(const SimConfig& base, int runs, std::uint64_t base_seed,
                             const std::string& fingerprint = "") {
    if (runs < 1) throw SimError("run_batch: need at least one run");
    BatchResult out;
    out.logs.reserve(static_cast<std::size_t>(runs));
    for (int i = 0; i < runs; ++i) {
        SimConfig cfg = base;
        cfg.seed = base_seed + static_cast<std::uint64_t>(i);
        out.logs.push_back(run_scenario(cfg, fingerprint));
    }
    out.summary = aggregate_batch(out.logs, base.histogram_bin_width);
    return out;
}

} // namespace latsim
