#pragma once

#include <lidar_weather/core.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace lidar_weather
{

struct Box
{
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    Eigen::Vector3d size = Eigen::Vector3d::Ones(); // full extents along local x, y, z
    double yaw_deg = 0.0;
    double reflectance = 0.5;
};

// Upright cylinder standing on base_z.
struct Cylinder
{
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    double base_z = 0.0;
    double radius = 0.3;
    double height = 1.8;
    double reflectance = 0.5;
};

struct Sphere
{
    Eigen::Vector3d center = Eigen::Vector3d::Zero();
    double radius = 0.5;
    double reflectance = 0.5;
};

using Primitive = std::variant<Box, Cylinder, Sphere>;

struct SceneSpec
{
    std::string name = "scene";
    std::optional<double> ground_height = -1.8; // world z of the ground plane, none = no ground
    double ground_reflectance = 0.25;
    std::vector<Primitive> primitives;
    Eigen::Vector3d sensor_position = Eigen::Vector3d::Zero();
    // Rotation of the sensor frame about z. 180 puts world +x at the image center column.
    double sensor_yaw_deg = 180.0;
    double range_noise_sigma = 0.02; // m

    void validate() const;
};

// Nearest hit per (ring, column) within max_range, Gaussian range noise, intensity
// reflectance / (1 + d/100) clamped to [0, 1]. Each ray draws from its own counter stream.
RangeImage raycast_scene(const SceneSpec& scene, const SensorModel& sensor, std::uint64_t seed);

// Four static road setups with pedestrians, cyclists, cars, posts and a far backdrop.
SceneSpec builtin_scene(int index);
int builtin_scene_count() noexcept;
// "chamber0" .. "chamber3".
SceneSpec builtin_scene(const std::string& name);

SceneSpec scene_from_json(const std::string& text);
std::string scene_to_json(const SceneSpec& scene);

} // namespace lidar_weather
