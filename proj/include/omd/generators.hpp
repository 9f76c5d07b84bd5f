#pragma once

#include <cstdint>
#include <utility>

#include "omd/mdp.hpp"

namespace omd {

/// Seeded random finite MDP: Dirichlet(1,...,1) transition rows, rewards
/// uniform in reward_range, Dirichlet rho0.
TabularMDP random_tabular_mdp(int n_states, int n_actions, uint64_t seed,
                              std::pair<double, double> reward_range = {-1.0, 1.0},
                              double gamma = 0.9);

/// Repo-chosen default 2-state, 2-action MDP used by the tabular
/// experiments. This instance is NOT taken from any published source; it is
/// constructed so that myopic reward-matching is a poor policy: state 0 must
/// forgo its small immediate reward to reach state 1 where the large reward
/// lives. gamma = 0.9, uniform initial distribution.
TabularMDP default_two_state_mdp();

}  // namespace omd
