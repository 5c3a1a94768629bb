#include <lidar_weather/filters.hpp>
#include <lidar_weather/neighbor_grid.hpp>

#include <algorithm>
#include <cmath>

namespace lidar_weather
{
namespace
{

OutlierMask empty_mask(const RangeImage& image)
{
    OutlierMask mask;
    mask.flags = LabelMatrix::Constant(image.rows(), image.cols(), static_cast<std::uint8_t>(MaskFlag::NoReturn));
    return mask;
}

void set_flag(OutlierMask& mask, const Eigen::Vector2i& px, MaskFlag flag)
{
    mask.flags(px.x(), px.y()) = static_cast<std::uint8_t>(flag);
}

void check_shape(const RangeImage& image, const SensorModel& sensor)
{
    sensor.validate();
    if (image.rows() != sensor.rings || image.cols() != sensor.cols)
        throw InvalidArgument("image is " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()) +
                              " but sensor is " + std::to_string(sensor.rings) + "x" + std::to_string(sensor.cols));
}

} // namespace

std::size_t OutlierMask::count(MaskFlag flag) const noexcept
{
    return static_cast<std::size_t>((flags.array() == static_cast<std::uint8_t>(flag)).count());
}

void DrorParams::validate() const
{
    if (!(alpha > 0.0) || !(radius_multiplier > 0.0) || min_neighbors <= 0 || !(min_search_radius > 0.0))
        throw InvalidArgument("DROR parameters must all be positive");
}

PixelPoints image_points(const RangeImage& image, const SensorModel& sensor)
{
    check_shape(image, sensor);
    PixelPoints out;
    out.points.reserve(image.return_count());
    out.pixels.reserve(image.return_count());
    for (int r = 0; r < image.rows(); ++r)
        for (int c = 0; c < image.cols(); ++c)
            if (image.has_return(r, c))
            {
                out.points.push_back(sensor.to_point(r, c, image.distance(r, c)));
                out.pixels.emplace_back(r, c);
            }
    return out;
}

OutlierMask dror_filter(const RangeImage& image, const SensorModel& sensor, const DrorParams& params)
{
    params.validate();
    const PixelPoints pts = image_points(image, sensor);
    OutlierMask mask = empty_mask(image);
    if (pts.points.empty())
        return mask;

    std::vector<double> radii(pts.points.size());
    double max_radius = 0.0;
    for (std::size_t i = 0; i < pts.points.size(); ++i)
    {
        radii[i] = dror_search_radius(pts.points[i].head<2>().norm(), params);
        max_radius = std::max(max_radius, radii[i]);
    }
    const NeighborGrid grid(pts.points, std::isfinite(max_radius) ? max_radius : 1e6);
    const auto needed = static_cast<std::size_t>(params.min_neighbors);
    for (std::size_t i = 0; i < pts.points.size(); ++i)
    {
        const bool keep = grid.count_within(i, radii[i], needed) >= needed;
        set_flag(mask, pts.pixels[i], keep ? MaskFlag::Keep : MaskFlag::Clutter);
    }
    return mask;
}

OutlierMask ror_filter(const RangeImage& image, const SensorModel& sensor, double radius, int min_neighbors)
{
    if (!(radius > 0.0))
        throw InvalidArgument("ROR radius must be positive");
    if (min_neighbors <= 0)
        throw InvalidArgument("ROR min_neighbors must be positive");
    const PixelPoints pts = image_points(image, sensor);
    OutlierMask mask = empty_mask(image);
    if (pts.points.empty())
        return mask;
    // An infinite radius still needs a finite cell; one that spans the cloud is enough.
    const double cell = std::isfinite(radius) ? radius : 1e6;
    const NeighborGrid grid(pts.points, cell);
    const auto needed = static_cast<std::size_t>(min_neighbors);
    for (std::size_t i = 0; i < pts.points.size(); ++i)
    {
        const bool keep = grid.count_within(i, radius, needed) >= needed;
        set_flag(mask, pts.pixels[i], keep ? MaskFlag::Keep : MaskFlag::Clutter);
    }
    return mask;
}

OutlierMask sor_filter(const RangeImage& image, const SensorModel& sensor, int k, double std_multiplier)
{
    if (k <= 0)
        throw InvalidArgument("SOR k must be positive");
    if (std::isnan(std_multiplier))
        throw InvalidArgument("SOR std multiplier must be a number");
    const PixelPoints pts = image_points(image, sensor);
    if (pts.points.size() < static_cast<std::size_t>(k) + 1)
        throw InvalidArgument("SOR needs at least k+1 = " + std::to_string(k + 1) + " returns, got " +
                              std::to_string(pts.points.size()));

    Eigen::Vector3d lo = pts.points.front(), hi = pts.points.front();
    for (const auto& p : pts.points)
    {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const double volume = std::max((hi - lo).cwiseMax(Eigen::Vector3d::Constant(1e-3)).prod(), 1e-9);
    const double cell = std::cbrt(volume * static_cast<double>(k) / static_cast<double>(pts.points.size()));
    const NeighborGrid grid(pts.points, std::max(cell, 1e-6));

    Eigen::VectorXd mean_dist(static_cast<Eigen::Index>(pts.points.size()));
    for (std::size_t i = 0; i < pts.points.size(); ++i)
    {
        const auto d = grid.knn_distances(i, static_cast<std::size_t>(k));
        double sum = 0.0;
        for (double v : d)
            sum += v;
        mean_dist(static_cast<Eigen::Index>(i)) = sum / static_cast<double>(d.size());
    }
    const double global_mean = mean_dist.mean();
    const double global_std =
        std::sqrt((mean_dist.array() - global_mean).square().sum() / static_cast<double>(mean_dist.size()));
    // Relative slack so equal statistics that differ only by rounding compare equal.
    const double threshold = global_mean + std_multiplier * global_std + 1e-9 * global_mean;

    OutlierMask mask = empty_mask(image);
    for (std::size_t i = 0; i < pts.points.size(); ++i)
    {
        const bool keep = std::isinf(threshold) ? threshold > 0 : mean_dist(static_cast<Eigen::Index>(i)) <= threshold;
        set_flag(mask, pts.pixels[i], keep ? MaskFlag::Keep : MaskFlag::Clutter);
    }
    return mask;
}

LabelImage mask_to_labels(const OutlierMask& mask, Label weather_class)
{
    if (weather_class != Label::Rain && weather_class != Label::Fog)
        throw InvalidArgument("weather class must be rain or fog");
    LabelImage labels(mask.rows(), mask.cols(), Label::NoReturn);
    for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c)
            switch (mask.at(r, c))
            {
            case MaskFlag::Keep: labels.set(r, c, Label::Valid); break;
            case MaskFlag::Clutter: labels.set(r, c, weather_class); break;
            case MaskFlag::NoReturn: break;
            }
    return labels;
}

OutlierMask labels_to_mask(const LabelImage& labels)
{
    OutlierMask mask;
    mask.flags = LabelMatrix::Constant(labels.rows(), labels.cols(), static_cast<std::uint8_t>(MaskFlag::NoReturn));
    for (int r = 0; r < labels.rows(); ++r)
        for (int c = 0; c < labels.cols(); ++c)
        {
            const Label l = labels.at(r, c);
            if (l == Label::Valid)
                mask.flags(r, c) = static_cast<std::uint8_t>(MaskFlag::Keep);
            else if (l == Label::Rain || l == Label::Fog)
                mask.flags(r, c) = static_cast<std::uint8_t>(MaskFlag::Clutter);
        }
    return mask;
}

RangeImage apply_mask(const RangeImage& image, const OutlierMask& mask)
{
    if (mask.rows() != image.rows() || mask.cols() != image.cols())
        throw InvalidArgument("mask shape does not match image");
    RangeImage out = image;
    for (int r = 0; r < image.rows(); ++r)
        for (int c = 0; c < image.cols(); ++c)
            if (mask.at(r, c) == MaskFlag::Clutter)
            {
                out.distance(r, c) = 0.0f;
                out.intensity(r, c) = 0.0f;
            }
    return out;
}

} // namespace lidar_weather
