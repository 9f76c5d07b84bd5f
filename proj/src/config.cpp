#include "omd/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace omd {

using nlohmann::json;

RunConfig::RunConfig() {
    // Logarithmic grid over [0.5, 50] with 12 points.
    const int n = 12;
    const double lo = std::log(0.5), hi = std::log(50.0);
    for (int i = 0; i < n; ++i) {
        kappa_grid.push_back(std::exp(lo + (hi - lo) * i / (n - 1)));
    }
}

namespace {

void check(bool ok, const std::string& field, const std::string& why) {
    if (!ok) throw std::invalid_argument("RunConfig: field '" + field + "' " + why);
}

}  // namespace

void RunConfig::validate() const {
    static const std::set<std::string> kExperiments = {
        "cartpole", "fig3", "bounds", "appendixC", "appendixE",
        "fig5_hidden", "fig5_distractors", "fig4_mse"};
    check(kExperiments.count(experiment) == 1, "experiment",
          "must be one of cartpole|fig3|bounds|appendixC|appendixE|fig5_hidden|"
          "fig5_distractors|fig4_mse");
    check(agent == "omd" || agent == "mle" || agent == "vep", "agent",
          "must be omd|mle|vep");
    check(!agents.empty(), "agents", "must be nonempty");
    for (const auto& a : agents) {
        check(a == "omd" || a == "mle" || a == "vep", "agents", "entries must be omd|mle|vep");
    }
    check(!seeds.empty(), "seeds", "must be nonempty");
    check(gamma >= 0.0 && gamma < 1.0, "gamma", "must be in [0,1)");
    check(alpha > 0.0, "alpha", "must be positive");
    check(lr_theta > 0.0, "lr_theta", "must be positive");
    check(lr_w > 0.0, "lr_w", "must be positive");
    check(tau > 0.0 && tau < 1.0, "tau", "must be in (0,1)");
    check(k_inner >= 1, "k_inner", "must be >= 1");
    check(q_hidden >= 1, "q_hidden", "must be >= 1");
    check(model_hidden >= 1, "model_hidden", "must be >= 1");
    check(n_distractors >= 0, "n_distractors", "must be >= 0");
    check(steps >= 1, "steps", "must be >= 1");
    check(eval_interval >= 1, "eval_interval", "must be >= 1");
    check(eval_episodes >= 1, "eval_episodes", "must be >= 1");
    check(batch_size >= 1, "batch_size", "must be >= 1");
    check(buffer_capacity >= batch_size, "buffer_capacity", "must be >= batch_size");
    check(warmup_steps >= 0, "warmup_steps", "must be >= 0");
    check(epsilon >= 0.0 && epsilon <= 1.0, "epsilon", "must be in [0,1]");
    check(explore == "epsilon_greedy" || explore == "softmax", "explore",
          "must be epsilon_greedy|softmax");
    check(vep_value_fns >= 1, "vep_value_fns", "must be >= 1");
    check(kappa > 0.0, "kappa", "must be positive");
    check(tabular_steps >= 1, "tabular_steps", "must be >= 1");
    check(tabular_lr > 0.0, "tabular_lr", "must be positive");
    check(tabular_alpha > 0.0, "tabular_alpha", "must be positive");
    check(noise_sigma >= 0.0, "noise_sigma", "must be >= 0");
    check(!kappa_grid.empty(), "kappa_grid", "must be nonempty");
    for (double k : kappa_grid) check(k > 0.0, "kappa_grid", "entries must be positive");
    check(!bounds_kappa_grid.empty(), "bounds_kappa_grid", "must be nonempty");
    for (double k : bounds_kappa_grid) {
        check(k > 0.0, "bounds_kappa_grid", "entries must be positive");
    }
    check(!sigma_grid.empty(), "sigma_grid", "must be nonempty");
    for (double s : sigma_grid) check(s >= 0.0, "sigma_grid", "entries must be >= 0");
    check(!hidden_grid.empty(), "hidden_grid", "must be nonempty");
    for (int h : hidden_grid) check(h >= 1, "hidden_grid", "entries must be >= 1");
    check(!distractor_grid.empty(), "distractor_grid", "must be nonempty");
    for (int d : distractor_grid) check(d >= 0, "distractor_grid", "entries must be >= 0");
    check(!k_grid.empty(), "k_grid", "must be nonempty");
    for (int k : k_grid) check(k >= 1, "k_grid", "entries must be >= 1");
}

std::string RunConfig::to_json() const {
    json j;
    j["experiment"] = experiment;
    j["agent"] = agent;
    j["agents"] = agents;
    j["seeds"] = seeds;
    j["gamma"] = gamma;
    j["alpha"] = alpha;
    j["lr_theta"] = lr_theta;
    j["lr_w"] = lr_w;
    j["tau"] = tau;
    j["k_inner"] = k_inner;
    j["q_hidden"] = q_hidden;
    j["model_hidden"] = model_hidden;
    j["n_distractors"] = n_distractors;
    j["steps"] = steps;
    j["eval_interval"] = eval_interval;
    j["eval_episodes"] = eval_episodes;
    j["batch_size"] = batch_size;
    j["buffer_capacity"] = buffer_capacity;
    j["warmup_steps"] = warmup_steps;
    j["epsilon"] = epsilon;
    j["explore"] = explore;
    j["double_q"] = double_q;
    j["use_identity_inverse"] = use_identity_inverse;
    j["vep_value_fns"] = vep_value_fns;
    j["kappa"] = kappa;
    j["tabular_steps"] = tabular_steps;
    j["tabular_lr"] = tabular_lr;
    j["tabular_alpha"] = tabular_alpha;
    j["noise_sigma"] = noise_sigma;
    j["mdp_file"] = mdp_file;
    j["kappa_grid"] = kappa_grid;
    j["bounds_kappa_grid"] = bounds_kappa_grid;
    j["sigma_grid"] = sigma_grid;
    j["hidden_grid"] = hidden_grid;
    j["distractor_grid"] = distractor_grid;
    j["k_grid"] = k_grid;
    return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("RunConfig: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw std::invalid_argument("RunConfig: top level must be an object");

    static const std::set<std::string> kKnown = {
        "experiment", "agent", "agents", "seeds", "gamma", "alpha", "lr_theta", "lr_w", "tau",
        "k_inner", "q_hidden", "model_hidden", "n_distractors", "steps", "eval_interval",
        "eval_episodes", "batch_size", "buffer_capacity", "warmup_steps", "epsilon",
        "explore", "double_q", "use_identity_inverse", "vep_value_fns", "kappa",
        "tabular_steps", "tabular_lr", "tabular_alpha", "noise_sigma", "mdp_file",
        "kappa_grid", "bounds_kappa_grid", "sigma_grid", "hidden_grid", "distractor_grid",
        "k_grid"};
    for (const auto& [key, value] : j.items()) {
        if (!kKnown.count(key)) {
            throw std::invalid_argument("RunConfig: unknown key '" + key + "'");
        }
    }

    RunConfig c;
    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) field = j[key].get<std::decay_t<decltype(field)>>();
    };
    get("experiment", c.experiment);
    get("agent", c.agent);
    get("agents", c.agents);
    get("seeds", c.seeds);
    get("gamma", c.gamma);
    get("alpha", c.alpha);
    get("lr_theta", c.lr_theta);
    get("lr_w", c.lr_w);
    get("tau", c.tau);
    get("k_inner", c.k_inner);
    get("q_hidden", c.q_hidden);
    get("model_hidden", c.model_hidden);
    get("n_distractors", c.n_distractors);
    get("steps", c.steps);
    get("eval_interval", c.eval_interval);
    get("eval_episodes", c.eval_episodes);
    get("batch_size", c.batch_size);
    get("buffer_capacity", c.buffer_capacity);
    get("warmup_steps", c.warmup_steps);
    get("epsilon", c.epsilon);
    get("explore", c.explore);
    get("double_q", c.double_q);
    get("use_identity_inverse", c.use_identity_inverse);
    get("vep_value_fns", c.vep_value_fns);
    get("kappa", c.kappa);
    get("tabular_steps", c.tabular_steps);
    get("tabular_lr", c.tabular_lr);
    get("tabular_alpha", c.tabular_alpha);
    get("noise_sigma", c.noise_sigma);
    get("mdp_file", c.mdp_file);
    get("kappa_grid", c.kappa_grid);
    get("bounds_kappa_grid", c.bounds_kappa_grid);
    get("sigma_grid", c.sigma_grid);
    get("hidden_grid", c.hidden_grid);
    get("distractor_grid", c.distractor_grid);
    get("k_grid", c.k_grid);
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("RunConfig: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

uint64_t RunConfig::hash() const {
    const std::string s = to_json();
    uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

void RunConfig::apply_fast_profile() {
    steps = 60000;
    if (seeds.size() > 3) seeds.resize(3);
}

}  // namespace omd
