#pragma once

#include <lidar_weather/core.hpp>

#include <string>
#include <vector>

namespace lidar_weather
{

// Clear-weather distance images of one static scene, one layer per frame.
struct ReferenceStack
{
    std::vector<DistanceMatrix> layers;
    std::vector<std::string> frame_ids;

    int rows() const noexcept { return layers.empty() ? 0 : static_cast<int>(layers.front().rows()); }
    int cols() const noexcept { return layers.empty() ? 0 : static_cast<int>(layers.front().cols()); }
    int frame_count() const noexcept { return static_cast<int>(layers.size()); }
};

struct AutolabelParams
{
    double delta_r = 0.35; // meters
    Label weather_class = Label::Fog;

    void validate() const;
};

struct FalseRateReport
{
    std::vector<std::size_t> per_frame_false_counts;
    double mean_per_pixel_false_rate = 0.0;
    double std_per_pixel_false_rate = 0.0;
    std::size_t pixels_per_frame = 0;
};

ReferenceStack accumulate_reference(const std::vector<RangeImage>& frames);

// A return is Valid when some non-empty reference layer lies within delta_r of it,
// otherwise it gets the weather class. Empty pixels are NoReturn.
LabelImage label_clutter(const RangeImage& image, const ReferenceStack& reference, const AutolabelParams& params);

// Labels each half of `frames` against the other half's stack on a crop of `crop_width`
// columns (forward-centered). A static clear scene should produce no clutter.
FalseRateReport reference_self_check(const std::vector<RangeImage>& frames, const AutolabelParams& params,
                                     int crop_width = 400);

// <base>.lri holds the concatenated frames, <base>.json lists them with byte offsets.
void save_reference_stack(const std::string& base_path, const std::vector<RangeImage>& frames);
ReferenceStack load_reference_stack(const std::string& base_path);

} // namespace lidar_weather
