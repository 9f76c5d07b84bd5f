#include "omd/experiments.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "omd/agent.hpp"
#include "omd/analysis.hpp"
#include "omd/csvio.hpp"
#include "omd/env.hpp"
#include "omd/generators.hpp"
#include "omd/mdp_io.hpp"
#include "omd/rng.hpp"
#include "omd/tabular.hpp"

namespace omd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Cell = std::vector<std::pair<std::string, std::string>>;

std::string cell_tag(const Cell& cell, uint64_t seed) {
    std::string s;
    for (const auto& [k, v] : cell) {
        std::string vv = v;
        for (char& c : vv) {
            if (c == '.') c = 'p';
            if (!isalnum(static_cast<unsigned char>(c)) && c != 'p') c = '_';
        }
        s += k + vv + "__";
    }
    s += "seed" + std::to_string(seed);
    return s;
}

std::string cell_key(const Cell& cell) {
    std::string s;
    for (const auto& [k, v] : cell) s += k + "=" + v + ";";
    return s;
}

struct Job {
    Cell cell;
    uint64_t seed = 0;
    std::function<void(const std::string& csv_path)> run;
};

void write_sidecar(const std::string& csv_path, const RunConfig& config, const Cell& cell,
                   uint64_t seed) {
    json meta;
    meta["config_hash"] = config.hash();
    meta["version"] = kVersionString;
    meta["experiment"] = config.experiment;
    json c = json::object();
    for (const auto& [k, v] : cell) c[k] = v;
    meta["cell"] = c;
    meta["cell_key"] = cell_key(cell);
    meta["seed"] = seed;
    std::ofstream out(csv_path + ".meta.json");
    out << meta.dump(2) << "\n";
}

bool sidecar_matches(const std::string& csv_path, const RunConfig& config) {
    std::ifstream in(csv_path + ".meta.json");
    if (!in || !fs::exists(csv_path)) return false;
    try {
        json meta = json::parse(in);
        return meta.at("config_hash").get<uint64_t>() == config.hash();
    } catch (...) {
        return false;
    }
}

// ---------------------------------------------------------------------------
// Per-run writers
// ---------------------------------------------------------------------------

void write_tabular_csv(const std::string& path, const TabularTrainResult& result) {
    CsvWriter csv(path, {"step", "J", "avg_kl", "theta_norm"});
    for (size_t i = 0; i < result.j_curve.size(); ++i) {
        csv.write_row(std::vector<double>{static_cast<double>(result.j_curve[i].first),
                                          result.j_curve[i].second, result.kl_curve[i].second,
                                          result.norm_curve[i].second});
    }
}

void write_agent_csv(const std::string& path, const TrainOutput& result) {
    CsvWriter csv(path, {"step", "eval_return_mean", "eval_return_stderr", "model_mse",
                         "inner_loss", "outer_loss"});
    for (const RunRow& r : result.rows) {
        csv.write_row(std::vector<double>{static_cast<double>(r.step), r.eval_return_mean,
                                          r.eval_return_stderr, r.model_mse, r.inner_loss,
                                          r.outer_loss});
    }
}

TabularMDP experiment_mdp(const RunConfig& config) {
    return config.mdp_file.empty() ? default_two_state_mdp() : load_mdp(config.mdp_file);
}

AgentConfig agent_config(const RunConfig& config) {
    AgentConfig a;
    a.total_steps = config.steps;
    a.eval_interval = config.eval_interval;
    a.eval_episodes = config.eval_episodes;
    a.gamma = config.gamma;
    a.alpha = config.alpha;
    a.batch_size = config.batch_size;
    a.buffer_capacity = config.buffer_capacity;
    a.warmup_steps = config.warmup_steps;
    a.k_inner = config.k_inner;
    a.lr_theta = config.lr_theta;
    a.lr_w = config.lr_w;
    a.ema_tau = config.tau;
    a.q_hidden = config.q_hidden;
    a.model_hidden = config.model_hidden;
    a.double_q = config.double_q;
    a.use_identity_inverse = config.use_identity_inverse;
    a.explore = config.explore == "softmax" ? ExploreMode::Softmax : ExploreMode::EpsilonGreedy;
    a.epsilon = config.epsilon;
    a.vep_value_fns = config.vep_value_fns;
    return a;
}

AgentKind agent_kind(const std::string& name) {
    if (name == "omd") return AgentKind::Omd;
    if (name == "mle") return AgentKind::Mle;
    if (name == "vep") return AgentKind::Vep;
    throw std::invalid_argument("unknown agent '" + name + "'");
}

EnvFactory cartpole_factory(int n_distractors) {
    return [n_distractors](uint64_t seed) -> std::unique_ptr<Env> {
        auto base = std::make_unique<CartPole>(seed);
        if (n_distractors == 0) return base;
        return std::make_unique<DistractorWrapper>(std::move(base), n_distractors,
                                                   derive_seed(seed, "distractor_stream"));
    };
}

std::string fmt(double v) {
    std::ostringstream oss;
    oss << v;
    return oss.str();
}

// ---------------------------------------------------------------------------
// Job builders per experiment
// ---------------------------------------------------------------------------

std::vector<Job> build_jobs(const RunConfig& config) {
    std::vector<Job> jobs;
    const std::string exp = config.experiment;

    auto tabular_job = [&](const Cell& cell, uint64_t seed, TabularAgentKind kind,
                           double kappa, double sigma, bool identity) {
        const TabularMDP mdp = experiment_mdp(config);
        TabularTrainOptions opt;
        opt.steps = config.tabular_steps;
        opt.learning_rate = config.tabular_lr;
        opt.alpha = config.tabular_alpha;
        opt.kappa = kappa;
        opt.seed = seed;
        opt.noise_sigma = sigma;
        opt.use_identity_inverse = identity;
        jobs.push_back(Job{cell, seed, [mdp, kind, opt](const std::string& path) {
                               write_tabular_csv(path, train_tabular(mdp, kind, opt));
                           }});
    };

    auto cartpole_job = [&](const Cell& cell, uint64_t seed, const std::string& agent,
                            AgentConfig acfg, int n_distractors) {
        jobs.push_back(Job{cell, seed,
                           [acfg, agent, n_distractors, seed](const std::string& path) {
                               TrainOutput out = train_agent(cartpole_factory(n_distractors),
                                                             agent_kind(agent), acfg, seed);
                               write_agent_csv(path, out);
                           }});
    };

    if (exp == "cartpole") {
        for (uint64_t seed : config.seeds) {
            cartpole_job({{"agent", config.agent}}, seed, config.agent, agent_config(config),
                         config.n_distractors);
        }
    } else if (exp == "fig3") {
        for (double kappa : config.kappa_grid) {
            for (uint64_t seed : config.seeds) {
                tabular_job({{"kappa", fmt(kappa)}, {"agent", "omd"}}, seed,
                            TabularAgentKind::OmdReturn, kappa, 0.0, false);
                tabular_job({{"kappa", fmt(kappa)}, {"agent", "mle"}}, seed,
                            TabularAgentKind::Mle, kappa, 0.0, false);
            }
        }
    } else if (exp == "bounds") {
        for (double kappa : config.bounds_kappa_grid) {
            for (uint64_t seed : config.seeds) {
                const TabularMDP mdp = experiment_mdp(config);
                TabularTrainOptions opt;
                opt.steps = config.tabular_steps;
                opt.learning_rate = config.tabular_lr;
                opt.alpha = config.tabular_alpha;
                opt.kappa = kappa;
                opt.seed = seed;
                Cell cell{{"kappa", fmt(kappa)}};
                jobs.push_back(Job{cell, seed, [mdp, opt, kappa](const std::string& path) {
                    TabularTrainResult omd =
                        train_tabular(mdp, TabularAgentKind::OmdBellman, opt);
                    TabularTrainResult mle = train_tabular(mdp, TabularAgentKind::Mle, opt);
                    BoundReport rep =
                        compute_bound_report(mdp, mle.theta_final, omd.theta_final, 1e-6);
                    CsvWriter csv(path, {"kappa", "eps_p", "eps_r", "eps_omd", "q_err_mle",
                                         "q_err_omd", "bound_mle", "bound_omd", "r_max",
                                         "reward_shift", "j_omd", "j_mle"});
                    csv.write_row(std::vector<double>{
                        kappa, rep.eps_p, rep.eps_r, rep.eps_omd, rep.q_err_mle, rep.q_err_omd,
                        rep.bound_mle, rep.bound_omd, rep.r_max, rep.reward_shift,
                        omd.j_curve.back().second, mle.j_curve.back().second});
                }});
            }
        }
    } else if (exp == "appendixC") {
        for (double sigma : config.sigma_grid) {
            for (const char* mode : {"exact", "identity"}) {
                const bool identity = std::string(mode) == "identity";
                for (uint64_t seed : config.seeds) {
                    tabular_job({{"sigma", fmt(sigma)}, {"mode", mode}}, seed,
                                TabularAgentKind::OmdReturn, config.kappa, sigma, identity);
                }
            }
        }
    } else if (exp == "appendixE") {
        for (int k : config.k_grid) {
            AgentConfig acfg = agent_config(config);
            acfg.k_inner = k;
            for (uint64_t seed : config.seeds) {
                cartpole_job({{"K", std::to_string(k)}}, seed, "omd", acfg,
                             config.n_distractors);
            }
        }
        {
            AgentConfig acfg = agent_config(config);
            acfg.double_q = false;
            for (uint64_t seed : config.seeds) {
                cartpole_job({{"variant", "double_q_off"}}, seed, "omd", acfg,
                             config.n_distractors);
            }
        }
        {
            AgentConfig acfg = agent_config(config);
            acfg.use_identity_inverse = false;
            for (uint64_t seed : config.seeds) {
                cartpole_job({{"variant", "exact_jacobian"}}, seed, "omd", acfg,
                             config.n_distractors);
            }
        }
    } else if (exp == "fig5_hidden") {
        for (int hidden : config.hidden_grid) {
            for (const std::string& agent : config.agents) {
                AgentConfig acfg = agent_config(config);
                acfg.model_hidden = hidden;
                for (uint64_t seed : config.seeds) {
                    cartpole_job({{"hidden", std::to_string(hidden)}, {"agent", agent}}, seed,
                                 agent, acfg, config.n_distractors);
                }
            }
        }
    } else if (exp == "fig5_distractors") {
        for (int n : config.distractor_grid) {
            for (const std::string& agent : config.agents) {
                for (uint64_t seed : config.seeds) {
                    cartpole_job({{"distractors", std::to_string(n)}, {"agent", agent}}, seed,
                                 agent, agent_config(config), n);
                }
            }
        }
    } else if (exp == "fig4_mse") {
        for (int hidden : {1, 3}) {
            for (const char* agent : {"omd", "mle"}) {
                AgentConfig acfg = agent_config(config);
                acfg.model_hidden = hidden;
                for (uint64_t seed : config.seeds) {
                    cartpole_job({{"hidden", std::to_string(hidden)}, {"agent", agent}}, seed,
                                 agent, acfg, config.n_distractors);
                }
            }
        }
    } else {
        throw std::invalid_argument("unknown experiment '" + exp + "'");
    }
    return jobs;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct RunRecordFile {
    Cell cell;
    std::string cell_key;
    uint64_t seed = 0;
    uint64_t config_hash = 0;
    CsvTable table;
};

std::vector<RunRecordFile> read_records(const std::string& dir) {
    std::vector<RunRecordFile> records;
    std::vector<fs::path> paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".csv" &&
            entry.path().filename() != "aggregate.csv" &&
            fs::exists(entry.path().string() + ".meta.json")) {
            paths.push_back(entry.path());
        }
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        std::ifstream meta_in(p.string() + ".meta.json");
        json meta = json::parse(meta_in);
        RunRecordFile rec;
        rec.seed = meta.at("seed").get<uint64_t>();
        rec.config_hash = meta.at("config_hash").get<uint64_t>();
        rec.cell_key = meta.at("cell_key").get<std::string>();
        for (const auto& [k, v] : meta.at("cell").items()) {
            rec.cell.emplace_back(k, v.get<std::string>());
        }
        rec.table = read_csv(p.string());
        records.push_back(std::move(rec));
    }
    return records;
}

double final_metric(const CsvTable& table, std::string* metric_name) {
    int col = table.column("J");
    if (col >= 0) {
        if (metric_name) *metric_name = "final_J";
    } else {
        col = table.column("eval_return_mean");
        if (col >= 0 && metric_name) *metric_name = "final_return";
        if (col < 0) {
            col = table.column("q_err_omd");
            if (metric_name) *metric_name = "q_err_omd";
        }
    }
    if (col < 0 || table.rows.empty()) {
        throw std::runtime_error("aggregate: no recognized metric column");
    }
    return std::stod(table.rows.back()[col]);
}

void write_aggregate(const std::string& dir, const std::vector<RunRecordFile>& records,
                     const std::string& out_file) {
    if (records.empty()) throw std::runtime_error("aggregate: no records under " + dir);
    const uint64_t hash = records.front().config_hash;
    for (const auto& r : records) {
        if (r.config_hash != hash) {
            throw std::runtime_error("aggregate: mismatched configs in one aggregation");
        }
    }
    // Group by cell key, keep first-seen order.
    std::vector<std::string> order;
    std::map<std::string, std::vector<const RunRecordFile*>> groups;
    for (const auto& r : records) {
        if (!groups.count(r.cell_key)) order.push_back(r.cell_key);
        groups[r.cell_key].push_back(&r);
    }

    // Column set: the union of cell keys, then metric stats.
    std::vector<std::string> cell_cols;
    for (const auto& r : records) {
        for (const auto& [k, v] : r.cell) {
            if (std::find(cell_cols.begin(), cell_cols.end(), k) == cell_cols.end()) {
                cell_cols.push_back(k);
            }
        }
    }
    std::string metric_name;
    final_metric(records.front().table, &metric_name);

    std::vector<std::string> header = cell_cols;
    header.insert(header.end(),
                  {metric_name + "_mean", metric_name + "_stderr", "n_seeds"});
    // The bounds experiment carries its full report into the aggregate.
    const bool bounds = records.front().table.column("q_err_omd") >= 0;
    std::vector<std::string> extra;
    if (bounds) {
        extra = {"eps_p", "eps_r", "eps_omd", "q_err_mle", "q_err_omd", "bound_mle",
                 "bound_omd", "r_max", "j_omd", "j_mle", "seed"};
        header = cell_cols;
        header.insert(header.end(), extra.begin(), extra.end());
    }

    CsvWriter csv(out_file, header);
    for (const auto& key : order) {
        const auto& group = groups[key];
        if (bounds) {
            // One row per record: criterion checks need every trained model.
            for (const RunRecordFile* r : group) {
                std::vector<std::string> row;
                for (const auto& col : cell_cols) {
                    std::string v;
                    for (const auto& [k, val] : r->cell) {
                        if (k == col) v = val;
                    }
                    row.push_back(v);
                }
                for (const auto& col : extra) {
                    if (col == "seed") {
                        row.push_back(std::to_string(r->seed));
                        continue;
                    }
                    const int c = r->table.column(col);
                    row.push_back(c >= 0 ? r->table.rows.back()[c] : "");
                }
                csv.write_row(row);
            }
            continue;
        }
        std::vector<double> finals;
        for (const RunRecordFile* r : group) {
            finals.push_back(final_metric(r->table, nullptr));
        }
        MeanStderr ms = mean_stderr(finals);
        if (ms.n == 1) {
            std::cerr << "aggregate: single seed for cell '" << key
                      << "', standard error reported as 0\n";
        }
        std::vector<std::string> row;
        for (const auto& col : cell_cols) {
            std::string v;
            for (const auto& [k, val] : group.front()->cell) {
                if (k == col) v = val;
            }
            row.push_back(v);
        }
        row.push_back(format_double(ms.mean));
        row.push_back(format_double(ms.stderr_));
        row.push_back(std::to_string(ms.n));
        csv.write_row(row);
    }
}

}  // namespace

std::vector<std::string> list_experiments() {
    return {"cartpole", "fig3", "bounds", "appendixC", "appendixE",
            "fig5_hidden", "fig5_distractors", "fig4_mse"};
}

ExperimentSummary run_experiment(const RunConfig& config_in, const ExperimentOptions& options) {
    RunConfig config = config_in;
    if (options.fast) config.apply_fast_profile();
    config.validate();

    const fs::path dir = fs::path(options.out_dir) / config.experiment;
    fs::create_directories(dir);
    {
        std::ofstream cfg_out(dir / "config.json");
        cfg_out << config.to_json() << "\n";
    }

    std::vector<Job> jobs = build_jobs(config);
    ExperimentSummary summary;
    summary.jobs_total = static_cast<int>(jobs.size());

    std::atomic<size_t> next{0};
    std::atomic<int> failed{0};
    std::atomic<int> skipped{0};
    std::mutex log_mutex;
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const Job& job = jobs[i];
            const std::string csv_path = (dir / (cell_tag(job.cell, job.seed) + ".csv")).string();
            if (options.resume && sidecar_matches(csv_path, config)) {
                skipped.fetch_add(1);
                continue;
            }
            try {
                job.run(csv_path);
                write_sidecar(csv_path, config, job.cell, job.seed);
                std::lock_guard<std::mutex> lock(log_mutex);
                std::cerr << "[" << config.experiment << "] done " << cell_tag(job.cell, job.seed)
                          << " (" << (i + 1) << "/" << jobs.size() << ")\n";
            } catch (const std::exception& e) {
                failed.fetch_add(1);
                std::ofstream marker(csv_path + ".FAILED");
                marker << e.what() << "\n";
                std::lock_guard<std::mutex> lock(log_mutex);
                std::cerr << "[" << config.experiment << "] FAILED "
                          << cell_tag(job.cell, job.seed) << ": " << e.what() << "\n";
            }
        }
    };

    const int n_workers = std::max(1, options.workers);
    std::vector<std::thread> pool;
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    summary.jobs_failed = failed.load();
    summary.jobs_skipped = skipped.load();

    const std::string agg = (dir / "aggregate.csv").string();
    write_aggregate(dir.string(), read_records(dir.string()), agg);
    summary.aggregate_path = agg;
    return summary;
}

void aggregate_directory(const std::string& in_dir, const std::string& out_file) {
    write_aggregate(in_dir, read_records(in_dir), out_file);
}

}  // namespace omd
