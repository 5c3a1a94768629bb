#pragma once

#include <lidar_weather/core.hpp>

#include <cstdint>
#include <span>
#include <string>

namespace lidar_weather
{

struct LognormalParams
{
    double mu = -2.0;   // log-space mean
    double sigma = 0.5; // log-space standard deviation

    // P(sample > 1), i.e. the share of draws that get clamped to 1.
    double clamp_probability() const;
};

struct WeatherParams
{
    double beta = 0.01;              // extinction coefficient, 1/m
    double scatter_rate = 0.075;     // p
    double noise_floor = 0.05;       // n, normalized intensity
    double laser_gain = 0.45;        // g, normalized intensity
    double contrast_threshold = 0.05; // C_T
    LognormalParams clutter_intensity{-1.6, 0.4};
    Label weather_class = Label::Rain;
    std::uint64_t seed = 0;

    void validate() const;
};

// Meteorological visibility V = -ln(C_T) / beta.
double visibility_from_beta(double beta, double contrast_threshold = 0.05);
double beta_from_visibility(double visibility, double contrast_threshold = 0.05);

// Half the viewing distance at which a return of `intensity` sinks to the noise floor:
// -ln(n / (I + g)) / (2 beta), or 0 when I + g <= n.
double max_sensing_range(double intensity, const WeatherParams& params);

// Probability that a return beyond its sensing range vanishes: 1 - exp(-beta * d_max).
double loss_probability(double max_range, double beta);

struct AugmentStats
{
    std::size_t returns_in = 0;
    std::size_t attenuated = 0; // within sensing range
    std::size_t lost = 0;
    std::size_t scattered = 0;
    std::size_t passed = 0;     // beyond range, kept unchanged
    std::size_t clamped_intensities = 0;
    double expected_clamp_probability = 0.0;
};

struct AugmentResult
{
    RangeImage image;
    LabelImage labels;
    AugmentStats stats;
};

// Per return: if d_max < d, lose it with probability 1 - exp(-beta d_max), else with
// probability p move it to uniform(0, d_max] with a lognormal intensity (weather label),
// else keep it. Returns within range keep their distance and get i * exp(-beta d).
// Deterministic in (image, params); each pixel draws from its own counter stream.
AugmentResult augment_weather(const RangeImage& image, const WeatherParams& params);
AugmentResult augment_rain(const RangeImage& image, const WeatherParams& params);
AugmentResult augment_fog(const RangeImage& image, const WeatherParams& params);

// Log-space mean and (n-1) standard deviation. Throws on fewer than two samples,
// samples outside (0, 1], or a degenerate (zero spread) fit.
LognormalParams fit_clutter_intensity(std::span<const double> samples);

// Default fog scatter rate for a visibility, log-linearly interpolated from a small table.
double fog_scatter_rate(double visibility);

WeatherParams rain_params(double scatter_rate = 0.075);
WeatherParams fog_params(double visibility);

// "rain", "rain15", "rain33", "rain55", "fog:V=<meters>".
WeatherParams weather_preset(const std::string& name);

// JSON document: optional "preset" plus field overrides
// (beta, visibility, scatter_rate, noise_floor, laser_gain, contrast_threshold,
// clutter_intensity{mu,sigma}, weather_class, seed).
WeatherParams weather_params_from_json(const std::string& text);
std::string weather_params_to_json(const WeatherParams& params);

} // namespace lidar_weather
