#pragma once

#include <lidar_weather/core.hpp>
#include <lidar_weather/eval.hpp>
#include <lidar_weather/nnet/adam.hpp>
#include <lidar_weather/nnet/weathernet.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace lidar_weather::nnet
{

struct TrainSample
{
    RangeImage image;
    LabelImage labels;
};

struct TrainConfig
{
    int epochs = 30;
    int batch_size = 20;
    AdamConfig adam;
    LossOptions loss;
    std::uint64_t seed = 0;
    int workers = 1;
    std::string checkpoint_dir; // empty: no per-epoch checkpoints

    // Desk-scale preset for reduced widths on one core: 40 epochs, batch 4, alpha 3e-3, decay 0.95.
    static TrainConfig desk();
    void validate() const;
};

struct EpochStats
{
    int epoch = 0;              // 1-based
    double loss = 0.0;          // mean per labeled pixel over the epoch
    double learning_rate = 0.0; // rate used during the epoch
    double val_mean_iou = -1.0; // -1 when there is no validation set
};

struct TrainResult
{
    std::vector<EpochStats> epochs;
};

// Inverse-frequency weights over labeled pixels, normalized so Valid has weight 1,
// raised to `power` (0.5 softens the imbalance). Absent classes get weight 1.
std::array<double, kNumClasses> balanced_class_weights(const std::vector<TrainSample>& samples, double power = 0.5);

ConfusionMatrix evaluate(const WeatherNet& net, const std::vector<TrainSample>& samples);

// Minimizes weighted softmax cross-entropy with Adam. Deterministic for a fixed seed
// regardless of the worker count. Throws NumericalError naming the epoch and batch
// on a non-finite loss or gradient.
TrainResult train(WeatherNet& net, const std::vector<TrainSample>& train_set, const std::vector<TrainSample>& val_set,
                  const TrainConfig& config, const std::function<void(const EpochStats&)>& on_epoch = {});

} // namespace lidar_weather::nnet
