#include <iostream>

#include <CLI11.hpp>

#include "omd/config.hpp"
#include "omd/experiments.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Control-oriented model-based RL toolkit"};
    app.require_subcommand(1);

    // run <experiment> --config <file> [--fast] [--workers N] [--out DIR]
    auto* run = app.add_subcommand("run", "Run a named experiment");
    std::string experiment;
    std::string config_path;
    omd::ExperimentOptions opt;
    run->add_option("experiment", experiment, "Experiment name (see list-experiments)")
        ->required();
    run->add_option("--config", config_path, "JSON config file");
    run->add_flag("--fast", opt.fast, "Desk-scale profile: 60k CartPole steps, 3 seeds");
    run->add_option("--workers", opt.workers, "Parallel worker count")->default_val(1);
    run->add_option("--out", opt.out_dir, "Output directory")->default_val("out");
    run->add_flag("--resume", opt.resume,
                  "Skip runs whose outputs already match the current config");

    auto* agg = app.add_subcommand("aggregate", "Aggregate per-run CSVs from a directory");
    std::string in_dir, out_file;
    agg->add_option("--in", in_dir, "Directory of per-run CSVs")->required();
    agg->add_option("--out", out_file, "Aggregate CSV path")->required();

    app.add_subcommand("list-experiments", "List experiment names");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            omd::RunConfig config =
                config_path.empty() ? omd::RunConfig{} : omd::RunConfig::load(config_path);
            config.experiment = experiment;
            config.validate();
            omd::ExperimentSummary s = omd::run_experiment(config, opt);
            std::cout << "jobs: " << s.jobs_total << ", failed: " << s.jobs_failed
                      << ", skipped: " << s.jobs_skipped << "\n"
                      << "aggregate: " << s.aggregate_path << "\n";
            return s.jobs_failed == 0 ? 0 : 1;
        }
        if (agg->parsed()) {
            omd::aggregate_directory(in_dir, out_file);
            std::cout << "aggregate: " << out_file << "\n";
            return 0;
        }
        for (const auto& name : omd::list_experiments()) std::cout << name << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
