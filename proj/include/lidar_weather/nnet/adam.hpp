#pragma once

#include <Eigen/Core>

namespace lidar_weather::nnet
{

struct AdamConfig
{
    double alpha = 4e-8;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double epoch_decay = 0.90; // learning rate factor applied at every epoch boundary
};

struct AdamState
{
    AdamConfig config;
    long step = 0;
    double learning_rate = 0.0;
    Eigen::VectorXd m;
    Eigen::VectorXd v;

    AdamState() = default;
    AdamState(Eigen::Index size, const AdamConfig& config);

    void end_epoch() noexcept { learning_rate *= config.epoch_decay; }
};

// Bias-corrected Adam update. Throws NumericalError on non-finite gradients
// (parameters and state are left untouched in that case).
void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads, AdamState& state);

} // namespace lidar_weather::nnet
