#include <lidar_weather/errors.hpp>
#include <lidar_weather/nnet/adam.hpp>

#include <cmath>
#include <string>

namespace lidar_weather::nnet
{

AdamState::AdamState(Eigen::Index size, const AdamConfig& cfg)
    : config(cfg), learning_rate(cfg.alpha), m(Eigen::VectorXd::Zero(size)), v(Eigen::VectorXd::Zero(size))
{
    if (!(cfg.alpha >= 0.0) || !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0) ||
        !(cfg.epsilon > 0.0) || !(cfg.epoch_decay > 0.0))
        throw InvalidArgument("invalid Adam hyperparameters");
}

void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads, AdamState& state)
{
    if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
        throw InvalidArgument("Adam: parameter, gradient and moment sizes differ (" + std::to_string(params.size()) +
                              ", " + std::to_string(grads.size()) + ", " + std::to_string(state.m.size()) + ")");
    if (!grads.allFinite())
        throw NumericalError("Adam: non-finite gradient");
    const AdamConfig& c = state.config;
    ++state.step;
    state.m = c.beta1 * state.m + (1.0 - c.beta1) * grads;
    state.v = c.beta2 * state.v + (1.0 - c.beta2) * grads.cwiseAbs2();
    const double t = static_cast<double>(state.step);
    const double m_corr = 1.0 - std::pow(c.beta1, t);
    const double v_corr = 1.0 - std::pow(c.beta2, t);
    params.array() -= state.learning_rate * (state.m.array() / m_corr) /
                      ((state.v.array() / v_corr).sqrt() + c.epsilon);
}

} // namespace lidar_weather::nnet
