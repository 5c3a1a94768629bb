#pragma once

#include <lidar_weather/filters.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

// Subcommand implementations behind the command-line tool. Each returns a JSON
// summary document (as text) and writes its artifacts to disk.
namespace lidar_weather::pipeline
{

struct SynthOptions
{
    std::string manifest; // dataset manifest; when empty, `scene` is raycast into one frame
    std::string scene = "chamber0";
    std::string output;
    std::uint64_t seed = 0;
};

struct AugmentOptions
{
    std::string input; // frame file or directory of frames
    std::string output;
    std::string preset = "rain"; // see weather_preset()
    std::string params;          // optional WeatherParams JSON document, applied after the preset
    std::optional<double> beta;
    std::optional<double> scatter_rate;
    std::optional<double> visibility;
    std::uint64_t seed = 0;
};

struct AutolabelOptions
{
    std::string reference; // directory of clear frames, or a stack base path (<base>.json)
    std::string input;
    std::string output;
    std::string save_stack; // optional base path to persist the reference stack
    double delta_r = 0.35;
    std::string weather_class = "fog";
    bool self_check = false;
    int crop_width = 400;
};

struct FilterOptions
{
    std::string method = "dror"; // dror, ror or sor
    std::string input;
    std::string output;
    std::string sensor; // optional sensor JSON; default: 32 rings over [-25, 15] deg at the frame width
    DrorParams dror;
    double radius = 0.5;
    int min_neighbors = 3;
    int k = 8;
    double std_multiplier = 1.0;
    std::string weather_class = "fog";
};

struct TrainOptions
{
    std::string dataset;
    std::string output; // checkpoint path
    std::string config; // optional training JSON document
    std::string preset = "desk"; // desk (reduced widths, alpha 3e-3) or reference (full widths, alpha 4e-8)
    std::optional<std::vector<int>> widths;
    std::optional<int> epochs;
    std::optional<int> batch_size;
    std::optional<double> learning_rate;
    std::optional<std::string> class_weights; // "auto", "none" or "w_valid,w_rain,w_fog"
    std::optional<int> crop_width;            // training tile width
    int fov_width = 400;                      // forward field of view used for training and validation
    std::string checkpoint_dir;
    std::uint64_t seed = 0;
    int workers = 1;
};

struct PredictOptions
{
    std::string checkpoint;
    std::string input;
    std::string output;
    bool denoise = false;
};

struct EvalOptions
{
    std::string prediction;
    std::string ground_truth;
    bool binary = false; // any non-Valid prediction counts as clutter
    int crop_width = 0;  // forward crop before scoring; 0 scores the full frame
};

struct ReportOptions
{
    std::string dataset;
    std::string checkpoint;
    std::string output;
    int fov_width = 400;
    DrorParams dror;
    int workers = 1;
};

std::string run_synth(const SynthOptions& options);
std::string run_augment(const AugmentOptions& options);
std::string run_autolabel(const AutolabelOptions& options);
std::string run_filter(const FilterOptions& options);
std::string run_train(const TrainOptions& options);
std::string run_predict(const PredictOptions& options);
std::string run_eval(const EvalOptions& options);
std::string run_report(const ReportOptions& options);

// Frame files (*.lri) under a path: the path itself when it is a file, otherwise all
// files below it, sorted by relative path.
std::vector<std::string> collect_frames(const std::string& path);

} // namespace lidar_weather::pipeline
