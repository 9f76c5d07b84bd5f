#include "omd/generators.hpp"

#include <random>

#include "omd/rng.hpp"

namespace omd {

TabularMDP random_tabular_mdp(int n_states, int n_actions, uint64_t seed,
                              std::pair<double, double> reward_range, double gamma) {
    if (n_states < 1 || n_actions < 1) {
        throw std::invalid_argument("random_tabular_mdp: sizes must be >= 1");
    }
    auto rng = make_rng(seed, "random_tabular_mdp");
    std::exponential_distribution<double> exp_dist(1.0);
    std::uniform_real_distribution<double> rew(reward_range.first, reward_range.second);

    TabularMDP mdp;
    mdp.n_states = n_states;
    mdp.n_actions = n_actions;
    mdp.gamma = gamma;
    const size_t sa = static_cast<size_t>(n_states) * n_actions;
    mdp.transitions.resize(sa * n_states);
    mdp.rewards.resize(sa);
    for (size_t row = 0; row < sa; ++row) {
        double sum = 0.0;
        double* p = mdp.transitions.data() + row * n_states;
        for (int s2 = 0; s2 < n_states; ++s2) {
            p[s2] = exp_dist(rng);
            sum += p[s2];
        }
        for (int s2 = 0; s2 < n_states; ++s2) p[s2] /= sum;
        mdp.rewards[row] = rew(rng);
    }
    mdp.rho0.resize(n_states);
    double sum = 0.0;
    for (int s = 0; s < n_states; ++s) {
        mdp.rho0[s] = exp_dist(rng);
        sum += mdp.rho0[s];
    }
    for (int s = 0; s < n_states; ++s) mdp.rho0[s] /= sum;
    mdp.validate();
    return mdp;
}

TabularMDP default_two_state_mdp() {
    // State 0 is a costly holding pen: action 0 ("stall") looks better on
    // immediate reward but keeps the agent there, action 1 ("escape") costs
    // slightly more now and leads to state 1 where action 0 ("work") pays.
    // The large negative magnitudes make a norm-limited likelihood fit
    // spend its budget on reproducing reward values instead of the
    // decision-relevant dynamics.
    TabularMDP mdp;
    mdp.n_states = 2;
    mdp.n_actions = 2;
    mdp.gamma = 0.9;
    mdp.rho0 = {0.5, 0.5};
    // rewards[s][a]
    mdp.rewards = {
        -1.2, -1.4,  // state 0: both actions hurt, stalling hurts less
        1.0, 0.1,    // state 1: working pays, leaving pays little
    };
    // transitions[s][a][s']
    mdp.transitions = {
        0.9, 0.1,    // s0, stall: mostly stay in 0
        0.1, 0.9,    // s0, escape: mostly move to 1
        0.05, 0.95,  // s1, work: mostly stay in 1
        0.95, 0.05,  // s1, leave: mostly fall back to 0
    };
    mdp.validate();
    return mdp;
}

}  // namespace omd
