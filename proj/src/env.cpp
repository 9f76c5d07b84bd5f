#include "omd/env.hpp"

#include <cmath>
#include <stdexcept>

#include "omd/rng.hpp"

namespace omd {

namespace {

constexpr double kGravity = 9.8;
constexpr double kMassCart = 1.0;
constexpr double kMassPole = 0.1;
constexpr double kTotalMass = kMassCart + kMassPole;
constexpr double kHalfLength = 0.5;
constexpr double kPoleMassLength = kMassPole * kHalfLength;
constexpr double kForceMag = 10.0;
constexpr double kDt = 0.02;
constexpr double kXThreshold = 2.4;
const double kThetaThreshold = 12.0 * 2.0 * M_PI / 360.0;

}  // namespace

CartPole::CartPole(uint64_t seed, int max_steps)
    : rng_(make_rng(seed, "cartpole")), max_steps_(max_steps) {}

std::vector<double> CartPole::reset() {
    std::uniform_real_distribution<double> u(-0.05, 0.05);
    x_ = u(rng_);
    x_dot_ = u(rng_);
    theta_ = u(rng_);
    theta_dot_ = u(rng_);
    steps_ = 0;
    done_ = false;
    return {x_, x_dot_, theta_, theta_dot_};
}

void CartPole::set_state(const std::vector<double>& s) {
    if (s.size() != 4) throw std::invalid_argument("CartPole::set_state: need 4 values");
    x_ = s[0];
    x_dot_ = s[1];
    theta_ = s[2];
    theta_dot_ = s[3];
    done_ = false;
}

StepResult CartPole::step(int action) {
    if (action != 0 && action != 1) {
        throw std::invalid_argument("CartPole::step: action out of range");
    }
    if (done_) throw std::runtime_error("CartPole::step: episode is over, call reset()");

    const double force = action == 1 ? kForceMag : -kForceMag;
    const double costh = std::cos(theta_);
    const double sinth = std::sin(theta_);
    const double temp =
        (force + kPoleMassLength * theta_dot_ * theta_dot_ * sinth) / kTotalMass;
    const double theta_acc =
        (kGravity * sinth - costh * temp) /
        (kHalfLength * (4.0 / 3.0 - kMassPole * costh * costh / kTotalMass));
    const double x_acc = temp - kPoleMassLength * theta_acc * costh / kTotalMass;

    x_ += kDt * x_dot_;
    x_dot_ += kDt * x_acc;
    theta_ += kDt * theta_dot_;
    theta_dot_ += kDt * theta_acc;
    ++steps_;

    const bool failed = std::fabs(x_) > kXThreshold || std::fabs(theta_) > kThetaThreshold;
    done_ = failed || steps_ >= max_steps_;
    return {{x_, x_dot_, theta_, theta_dot_}, 1.0, done_};
}

DistractorWrapper::DistractorWrapper(std::unique_ptr<Env> base, int n_distractors, uint64_t seed)
    : base_(std::move(base)), n_(n_distractors), rng_(make_rng(seed, "distractors")) {
    if (n_ < 0) throw std::invalid_argument("DistractorWrapper: n_distractors must be >= 0");
}

std::vector<double> DistractorWrapper::augment(std::vector<double> s) {
    s.reserve(s.size() + n_);
    for (int i = 0; i < n_; ++i) s.push_back(normal_(rng_));
    return s;
}

std::vector<double> DistractorWrapper::reset() { return augment(base_->reset()); }

StepResult DistractorWrapper::step(int action) {
    StepResult r = base_->step(action);
    r.state = augment(std::move(r.state));
    return r;
}

}  // namespace omd
