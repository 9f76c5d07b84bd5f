#pragma once

#include <string>
#include <vector>

#include "omd/config.hpp"

namespace omd {

struct ExperimentOptions {
    bool fast = false;
    int workers = 1;
    std::string out_dir = "out";
    bool resume = false;  // skip runs whose sidecar matches the current config
};

struct ExperimentSummary {
    int jobs_total = 0;
    int jobs_failed = 0;
    int jobs_skipped = 0;
    std::string aggregate_path;
};

std::vector<std::string> list_experiments();

/// Runs every (sweep point, seed) job of config.experiment as independent
/// parallel jobs, one CSV + metadata sidecar per job, then writes an
/// aggregate CSV by reading the per-job files back. A failed job leaves a
/// .FAILED marker next to its outputs and does not stop the sweep.
ExperimentSummary run_experiment(const RunConfig& config, const ExperimentOptions& options);

/// Re-aggregates per-run CSVs found under in_dir (mean and standard error
/// of the final metric per sweep cell). All records must carry the same
/// config hash.
void aggregate_directory(const std::string& in_dir, const std::string& out_file);

}  // namespace omd
