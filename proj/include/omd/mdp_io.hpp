#pragma once

#include <string>

#include "omd/mdp.hpp"

namespace omd {

/// MDP file format: a JSON object with fields
///   n_states (int), n_actions (int), gamma (number),
///   rho0 (array of n_states numbers),
///   rewards (n_states x n_actions array),
///   transitions (n_states x n_actions x n_states array).
/// The loader validates every invariant and reports the first violation
/// with its indices.
TabularMDP load_mdp(const std::string& path);
TabularMDP parse_mdp(const std::string& json_text);
void save_mdp(const std::string& path, const TabularMDP& mdp);
std::string mdp_to_json(const TabularMDP& mdp);

}  // namespace omd
