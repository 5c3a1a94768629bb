#include <lidar_weather/core.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <sstream>

namespace lidar_weather
{

bool is_known_label_code(std::uint8_t c) noexcept
{
    return c == code(Label::Valid) || c == code(Label::Rain) || c == code(Label::Fog) ||
           c == code(Label::NoReturn);
}

const char* label_name(Label label) noexcept
{
    switch (label)
    {
    case Label::Valid: return "valid";
    case Label::Rain: return "rain";
    case Label::Fog: return "fog";
    case Label::NoReturn: return "no_return";
    }
    return "unknown";
}

Label parse_label(const std::string& name)
{
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (lower == "valid" || lower == "clear")
        return Label::Valid;
    if (lower == "rain")
        return Label::Rain;
    if (lower == "fog")
        return Label::Fog;
    throw InvalidArgument("unknown label name '" + name + "'");
}

SensorModel SensorModel::vlp32c() { return uniform(32, 1800, -25.0, 15.0, 200.0); }

SensorModel SensorModel::uniform(int rings, int cols, double lowest_deg, double highest_deg, double max_range)
{
    if (rings < 1 || cols < 1)
        throw InvalidArgument("sensor needs at least one ring and one column");
    SensorModel s;
    s.rings = rings;
    s.cols = cols;
    s.max_range = max_range;
    s.vertical_angles.resize(static_cast<std::size_t>(rings));
    for (int i = 0; i < rings; ++i)
    {
        const double t = rings == 1 ? 0.0 : static_cast<double>(i) / (rings - 1);
        s.vertical_angles[static_cast<std::size_t>(i)] = highest_deg + t * (lowest_deg - highest_deg);
    }
    s.validate();
    return s;
}

Eigen::Vector3d SensorModel::ray_direction(int row, int col) const
{
    constexpr double deg = std::numbers::pi / 180.0;
    const double elevation = vertical_angles[static_cast<std::size_t>(row)] * deg;
    const double azimuth = column_azimuth(col) * deg;
    return {std::cos(elevation) * std::cos(azimuth), std::cos(elevation) * std::sin(azimuth), std::sin(elevation)};
}

void SensorModel::validate() const
{
    if (rings < 1)
        throw InvalidArgument("sensor rings must be >= 1");
    if (cols < 1)
        throw InvalidArgument("sensor cols must be >= 1");
    if (static_cast<int>(vertical_angles.size()) != rings)
        throw InvalidArgument("vertical angle table has " + std::to_string(vertical_angles.size()) +
                              " entries, expected " + std::to_string(rings));
    if (!(max_range > 0.0))
        throw InvalidArgument("sensor max_range must be positive");
    if (rings > 1)
    {
        const bool increasing = vertical_angles[1] > vertical_angles[0];
        for (std::size_t i = 1; i < vertical_angles.size(); ++i)
        {
            const double step = vertical_angles[i] - vertical_angles[i - 1];
            if (increasing ? !(step > 0.0) : !(step < 0.0))
                throw InvalidArgument("vertical angles must be strictly monotonic");
        }
    }
}

RangeImage::RangeImage(int rows, int cols)
    : distance(DistanceMatrix::Zero(rows, cols)), intensity(IntensityMatrix::Zero(rows, cols))
{
}

std::size_t RangeImage::return_count() const noexcept
{
    return static_cast<std::size_t>((distance.array() > 0.0f).count());
}

void RangeImage::validate() const
{
    if (distance.rows() != intensity.rows() || distance.cols() != intensity.cols())
        throw InvalidArgument("distance and intensity shapes differ");
    for (Eigen::Index r = 0; r < distance.rows(); ++r)
    {
        for (Eigen::Index c = 0; c < distance.cols(); ++c)
        {
            const float d = distance(r, c);
            const float i = intensity(r, c);
            if (!std::isfinite(d) || d < 0.0f)
                throw InvalidArgument("invalid distance at pixel (" + std::to_string(r) + "," + std::to_string(c) + ")");
            if (!std::isfinite(i) || i < 0.0f || i > 1.0f)
                throw InvalidArgument("intensity outside [0,1] at pixel (" + std::to_string(r) + "," +
                                      std::to_string(c) + ")");
            if (d == 0.0f && i != 0.0f)
                throw InvalidArgument("intensity on a no-return pixel (" + std::to_string(r) + "," +
                                      std::to_string(c) + ")");
        }
    }
}

LabelImage::LabelImage(int rows, int cols, Label fill) : codes(LabelMatrix::Constant(rows, cols, code(fill))) {}

std::size_t LabelImage::count(Label label) const noexcept
{
    return static_cast<std::size_t>((codes.array() == code(label)).count());
}

bool LabelImage::consistent_with(const RangeImage& image) const noexcept
{
    if (rows() != image.rows() || cols() != image.cols())
        return false;
    for (int r = 0; r < rows(); ++r)
        for (int c = 0; c < cols(); ++c)
            if ((at(r, c) == Label::NoReturn) != !image.has_return(r, c))
                return false;
    return true;
}

LabelImage valid_labels(const RangeImage& image)
{
    LabelImage labels(image.rows(), image.cols(), Label::NoReturn);
    for (int r = 0; r < image.rows(); ++r)
        for (int c = 0; c < image.cols(); ++c)
            if (image.has_return(r, c))
                labels.set(r, c, Label::Valid);
    return labels;
}

RangeImage project_scan(const PointCloud& cloud, const SensorModel& sensor)
{
    sensor.validate();
    RangeImage image(sensor.rings, sensor.cols);
    const double resolution = sensor.azimuth_resolution();
    for (std::size_t k = 0; k < cloud.size(); ++k)
    {
        const LidarReturn& ret = cloud[k];
        if (ret.ring < 0 || ret.ring >= sensor.rings)
            throw InvalidArgument("return " + std::to_string(k) + ": ring " + std::to_string(ret.ring) +
                                  " outside [0, " + std::to_string(sensor.rings) + ")");
        if (!(ret.azimuth >= 0.0 && ret.azimuth < 360.0))
            throw InvalidArgument("return " + std::to_string(k) + ": azimuth outside [0, 360)");
        if (!(ret.distance > 0.0) || ret.distance > sensor.max_range)
            throw InvalidArgument("return " + std::to_string(k) + ": distance outside (0, max_range]");
        if (!(ret.intensity >= 0.0 && ret.intensity <= 1.0))
            throw InvalidArgument("return " + std::to_string(k) + ": intensity outside [0, 1]");

        const int col = std::min(static_cast<int>(std::floor(ret.azimuth / resolution)), sensor.cols - 1);
        const float d = static_cast<float>(ret.distance);
        float& slot = image.distance(ret.ring, col);
        if (slot == 0.0f || d < slot)
        {
            slot = d;
            image.intensity(ret.ring, col) = static_cast<float>(ret.intensity);
        }
    }
    return image;
}

PointCloud unproject(const RangeImage& image, const SensorModel& sensor)
{
    if (image.rows() != sensor.rings || image.cols() != sensor.cols)
        throw InvalidArgument("image shape does not match sensor model");
    PointCloud cloud;
    cloud.reserve(image.return_count());
    for (int r = 0; r < image.rows(); ++r)
        for (int c = 0; c < image.cols(); ++c)
            if (image.has_return(r, c))
                cloud.push_back({r, sensor.column_azimuth(c), image.distance(r, c), image.intensity(r, c)});
    return cloud;
}

namespace
{

template <typename Matrix>
Matrix crop_columns(const Matrix& source, int start_col, int width)
{
    const int cols = static_cast<int>(source.cols());
    if (width <= 0)
        throw InvalidArgument("crop width must be positive");
    if (width > cols)
        throw InvalidArgument("crop width " + std::to_string(width) + " exceeds image width " + std::to_string(cols));
    const int start = ((start_col % cols) + cols) % cols;
    Matrix out(source.rows(), width);
    for (int c = 0; c < width; ++c)
        out.col(c) = source.col((start + c) % cols);
    return out;
}

} // namespace

RangeImage crop_fov(const RangeImage& image, int start_col, int width)
{
    RangeImage out;
    out.distance = crop_columns(image.distance, start_col, width);
    out.intensity = crop_columns(image.intensity, start_col, width);
    out.frame_id = image.frame_id;
    out.timestamp = image.timestamp;
    return out;
}

LabelImage crop_fov(const LabelImage& labels, int start_col, int width)
{
    LabelImage out;
    out.codes = crop_columns(labels.codes, start_col, width);
    return out;
}

int forward_crop_start(int cols, int width) noexcept { return ((cols / 2 - width / 2) % cols + cols) % cols; }

PointCloud read_returns_csv(std::istream& in)
{
    PointCloud cloud;
    std::string line;
    std::size_t line_no = 0;
    std::size_t offset = 0;
    while (std::getline(in, line))
    {
        ++line_no;
        const std::size_t line_offset = offset;
        offset += line.size() + 1;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty())
            continue;
        if (line_no == 1 && line.find("ring") != std::string::npos)
            continue;
        std::istringstream fields(line);
        std::string cell;
        double values[4];
        int n = 0;
        while (n < 4 && std::getline(fields, cell, ','))
        {
            try
            {
                std::size_t used = 0;
                values[n] = std::stod(cell, &used);
            }
            catch (const std::exception&)
            {
                throw FormatError("line " + std::to_string(line_no) + ": bad number '" + cell + "'", line_offset);
            }
            ++n;
        }
        if (n != 4)
            throw FormatError("line " + std::to_string(line_no) + ": expected 4 columns", line_offset);
        cloud.push_back({static_cast<int>(values[0]), values[1], values[2], values[3]});
    }
    return cloud;
}

PointCloud read_returns_csv_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidArgument("cannot open '" + path + "'");
    return read_returns_csv(in);
}

} // namespace lidar_weather
