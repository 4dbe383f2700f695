#pragma once

// Pre-training grid over the target knobs. Each cell gets its own directory
// holding metrics.log, status.txt and, when it completes, checkpoint.bin.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pointmpm/harness/checkpoint.hpp"
#include "pointmpm/harness/config.hpp"
#include "pointmpm/harness/dataset.hpp"
#include "pointmpm/harness/metrics.hpp"
#include "pointmpm/harness/training.hpp"

namespace pointmpm::harness {

inline const std::vector<double> kTauGrid{0.005, 0.05, 0.5, 5.0};
inline const std::vector<double> kOmegaGrid{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};

struct AblationCell {
    std::string name;
    Config cfg;
};

/// `axis` is "tau" (omega schedule at its default), "omega" (every omega
/// floor with warm-up on and off) or "all".
inline std::vector<AblationCell> ablation_cells(const Config& base, const std::string& axis = "all") {
    if (axis != "tau" && axis != "omega" && axis != "all")
        throw ConfigError("unknown ablation axis '" + axis + "' (expected tau, omega or all)");
    std::vector<AblationCell> cells;
    if (axis != "omega") {
        for (double tau : kTauGrid) {
            Config c = base;
            c.tau = tau;
            cells.push_back({"tau_" + format_number(tau), c});
        }
    }
    if (axis != "tau") {
        for (bool warm : {true, false}) {
            for (double omega : kOmegaGrid) {
                Config c = base;
                c.omega_floor = omega;
                c.warmup = warm;
                cells.push_back({"omega_" + format_number(omega) + (warm ? "_warmup_on" : "_warmup_off"), c});
            }
        }
    }
    for (auto& cell : cells) cell.cfg.validate();
    return cells;
}

struct CellOutcome {
    std::string name;
    bool completed = false;
    std::size_t epochs = 0;
    std::string last_record;
    std::string diagnostic;
};

/// Runs every cell to completion or to the non-finite guard. An aborted cell
/// keeps the records it logged before the abort.
template <typename T>
std::vector<CellOutcome> run_ablation(const std::vector<AblationCell>& cells, const Dataset& ds,
                                      const Checkpoint& dvae, const std::filesystem::path& dir) {
    std::vector<CellOutcome> out;
    for (const auto& cell : cells) {
        const auto cell_dir = dir / cell.name;
        std::filesystem::create_directories(cell_dir);
        CellOutcome res{cell.name};
        {
            MetricsLog log(cell_dir / "metrics.log");
            try {
                save_checkpoint(cell_dir / "checkpoint.bin", pretrain<T>(cell.cfg, ds, dvae, log));
                res.completed = true;
            } catch (const TrainingAborted& e) {
                res.diagnostic = e.what();
            }
            res.epochs = log.lines().size();
            if (!log.lines().empty()) res.last_record = log.lines().back();
        }
        std::ofstream status(cell_dir / "status.txt", std::ios::binary | std::ios::trunc);
        status << "status=" << (res.completed ? "completed" : "aborted") << "\n";
        status << "epochs=" << res.epochs << "\n";
        if (!res.completed) status << "diagnostic=" << res.diagnostic << "\n";
        if (!status) throw FormatError("cannot write '" + (cell_dir / "status.txt").string() + "'");
        out.push_back(std::move(res));
    }
    return out;
}

} // namespace pointmpm::harness
