#include "omd/mdp_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace omd {

namespace {

using nlohmann::json;

double require_number(const json& j, const std::string& where) {
    if (!j.is_number()) throw std::invalid_argument("MDP file: " + where + " must be a number");
    return j.get<double>();
}

}  // namespace

TabularMDP parse_mdp(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("MDP file: invalid JSON: ") + e.what());
    }
    for (const char* key : {"n_states", "n_actions", "gamma", "rho0", "rewards", "transitions"}) {
        if (!j.contains(key)) {
            throw std::invalid_argument(std::string("MDP file: missing field '") + key + "'");
        }
    }
    TabularMDP mdp;
    if (!j["n_states"].is_number_integer() || !j["n_actions"].is_number_integer()) {
        throw std::invalid_argument("MDP file: n_states and n_actions must be integers");
    }
    mdp.n_states = j["n_states"].get<int>();
    mdp.n_actions = j["n_actions"].get<int>();
    if (mdp.n_states <= 0 || mdp.n_actions <= 0) {
        throw std::invalid_argument("MDP file: n_states and n_actions must be positive");
    }
    mdp.gamma = require_number(j["gamma"], "gamma");

    const auto& rho = j["rho0"];
    if (!rho.is_array() || rho.size() != static_cast<size_t>(mdp.n_states)) {
        throw std::invalid_argument("MDP file: rho0 must be an array of n_states numbers");
    }
    for (size_t s = 0; s < rho.size(); ++s) {
        mdp.rho0.push_back(require_number(rho[s], "rho0[" + std::to_string(s) + "]"));
    }

    const auto& rw = j["rewards"];
    if (!rw.is_array() || rw.size() != static_cast<size_t>(mdp.n_states)) {
        throw std::invalid_argument("MDP file: rewards must have n_states rows");
    }
    for (size_t s = 0; s < rw.size(); ++s) {
        if (!rw[s].is_array() || rw[s].size() != static_cast<size_t>(mdp.n_actions)) {
            throw std::invalid_argument("MDP file: rewards[" + std::to_string(s) +
                                        "] must have n_actions entries");
        }
        for (size_t a = 0; a < rw[s].size(); ++a) {
            mdp.rewards.push_back(require_number(
                rw[s][a], "rewards[" + std::to_string(s) + "][" + std::to_string(a) + "]"));
        }
    }

    const auto& tr = j["transitions"];
    if (!tr.is_array() || tr.size() != static_cast<size_t>(mdp.n_states)) {
        throw std::invalid_argument("MDP file: transitions must have n_states rows");
    }
    for (size_t s = 0; s < tr.size(); ++s) {
        if (!tr[s].is_array() || tr[s].size() != static_cast<size_t>(mdp.n_actions)) {
            throw std::invalid_argument("MDP file: transitions[" + std::to_string(s) +
                                        "] must have n_actions rows");
        }
        for (size_t a = 0; a < tr[s].size(); ++a) {
            const auto& row = tr[s][a];
            if (!row.is_array() || row.size() != static_cast<size_t>(mdp.n_states)) {
                throw std::invalid_argument("MDP file: transitions[" + std::to_string(s) + "][" +
                                            std::to_string(a) + "] must have n_states entries");
            }
            for (size_t s2 = 0; s2 < row.size(); ++s2) {
                mdp.transitions.push_back(require_number(
                    row[s2], "transitions[" + std::to_string(s) + "][" + std::to_string(a) +
                                 "][" + std::to_string(s2) + "]"));
            }
        }
    }

    mdp.validate();
    return mdp;
}

TabularMDP load_mdp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("MDP file: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_mdp(ss.str());
}

std::string mdp_to_json(const TabularMDP& mdp) {
    json j;
    j["n_states"] = mdp.n_states;
    j["n_actions"] = mdp.n_actions;
    j["gamma"] = mdp.gamma;
    j["rho0"] = mdp.rho0;
    json rw = json::array();
    for (int s = 0; s < mdp.n_states; ++s) {
        json row = json::array();
        for (int a = 0; a < mdp.n_actions; ++a) row.push_back(mdp.r(s, a));
        rw.push_back(row);
    }
    j["rewards"] = rw;
    json tr = json::array();
    for (int s = 0; s < mdp.n_states; ++s) {
        json per_s = json::array();
        for (int a = 0; a < mdp.n_actions; ++a) {
            json row = json::array();
            for (int s2 = 0; s2 < mdp.n_states; ++s2) row.push_back(mdp.p(s, a, s2));
            per_s.push_back(row);
        }
        tr.push_back(per_s);
    }
    j["transitions"] = tr;
    return j.dump(2);
}

void save_mdp(const std::string& path, const TabularMDP& mdp) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("MDP file: cannot write '" + path + "'");
    out << mdp_to_json(mdp) << "\n";
}

}  // namespace omd
