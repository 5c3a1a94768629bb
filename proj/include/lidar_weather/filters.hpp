#pragma once

#include <lidar_weather/core.hpp>

#include <Eigen/Core>

#include <cstdint>
#include <numbers>
#include <vector>

namespace lidar_weather
{

enum class MaskFlag : std::uint8_t
{
    Keep = 0,
    Clutter = 1,
    NoReturn = 255
};

struct OutlierMask
{
    LabelMatrix flags;

    int rows() const noexcept { return static_cast<int>(flags.rows()); }
    int cols() const noexcept { return static_cast<int>(flags.cols()); }
    MaskFlag at(int r, int c) const noexcept { return static_cast<MaskFlag>(flags(r, c)); }
    std::size_t count(MaskFlag flag) const noexcept;
};

// Published DROR defaults with the horizontal resolution of a 1800-column sensor.
struct DrorParams
{
    double alpha = 0.2 * std::numbers::pi / 180.0; // horizontal angular resolution, rad
    double radius_multiplier = 3.0;
    int min_neighbors = 3;
    double min_search_radius = 0.04; // m

    void validate() const;
};

// Returns of an image as 3D points, with the pixel each came from.
struct PixelPoints
{
    std::vector<Eigen::Vector3d> points;
    std::vector<Eigen::Vector2i> pixels; // (row, col)
};

PixelPoints image_points(const RangeImage& image, const SensorModel& sensor);

// Search radius of a return at planar distance `planar`.
inline double dror_search_radius(double planar, const DrorParams& p) noexcept
{
    return std::max(p.min_search_radius, p.radius_multiplier * planar * p.alpha);
}

OutlierMask dror_filter(const RangeImage& image, const SensorModel& sensor, const DrorParams& params = {});
OutlierMask ror_filter(const RangeImage& image, const SensorModel& sensor, double radius, int min_neighbors);
OutlierMask sor_filter(const RangeImage& image, const SensorModel& sensor, int k, double std_multiplier);

// Keep -> Valid, Clutter -> weather_class, NoReturn -> NoReturn.
LabelImage mask_to_labels(const OutlierMask& mask, Label weather_class);
// Any weather label counts as Clutter.
OutlierMask labels_to_mask(const LabelImage& labels);

// Removes clutter returns from the image.
RangeImage apply_mask(const RangeImage& image, const OutlierMask& mask);

} // namespace lidar_weather
