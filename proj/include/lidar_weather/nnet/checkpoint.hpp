#pragma once

#include <lidar_weather/nnet/weathernet.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lidar_weather::nnet
{

// One JSON header line, then param_count little-endian float64 values in the
// network's serialization order.
struct Checkpoint
{
    WeatherNetSpec spec;
    int epoch = 0;
    std::uint64_t seed = 0;
    Eigen::VectorXd params;

    WeatherNet network() const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const WeatherNet& net, int epoch, std::uint64_t seed);
Checkpoint load_checkpoint(const std::string& path);

std::string spec_to_json(const WeatherNetSpec& spec);
WeatherNetSpec spec_from_json(const std::string& text);

} // namespace lidar_weather::nnet
