#pragma once

#include <lidar_weather/errors.hpp>

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lidar_weather
{

// Row-major so that the on-disk layout and memory layout coincide.
template <typename Scalar>
using ImageMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using DistanceMatrix = ImageMatrix<float>;
using IntensityMatrix = ImageMatrix<float>;
using LabelMatrix = ImageMatrix<std::uint8_t>;

enum class Label : std::uint8_t
{
    Valid = 0,
    Rain = 1,
    Fog = 2,
    NoReturn = 255
};

inline constexpr int kNumClasses = 3;

bool is_known_label_code(std::uint8_t code) noexcept;
const char* label_name(Label label) noexcept;
// Accepts "valid", "rain", "fog" (case-insensitive).
Label parse_label(const std::string& name);

inline constexpr std::uint8_t code(Label label) noexcept { return static_cast<std::uint8_t>(label); }

struct SensorModel
{
    int rings = 32;
    int cols = 1800;
    // One elevation per ring, degrees, strictly monotonic. Row i of an image is ring i.
    std::vector<double> vertical_angles;
    double max_range = 200.0;

    // 32 rings uniformly over [-25, +15] degrees, top ring first.
    static SensorModel vlp32c();
    static SensorModel uniform(int rings, int cols, double lowest_deg, double highest_deg, double max_range = 200.0);

    double azimuth_resolution() const noexcept { return 360.0 / cols; }
    // Azimuth of the column center in degrees.
    double column_azimuth(int col) const noexcept { return (col + 0.5) * azimuth_resolution(); }

    // Unit ray direction of pixel (row, col) in the sensor frame.
    Eigen::Vector3d ray_direction(int row, int col) const;
    Eigen::Vector3d to_point(int row, int col, double distance) const { return distance * ray_direction(row, col); }

    void validate() const;
};

struct LidarReturn
{
    int ring = 0;
    double azimuth = 0.0;   // degrees in [0, 360)
    double distance = 0.0;  // meters
    double intensity = 0.0; // [0, 1]
};

using PointCloud = std::vector<LidarReturn>;

struct RangeImage
{
    DistanceMatrix distance;   // 0 = no return
    IntensityMatrix intensity; // 0 wherever distance is 0
    std::string frame_id;
    double timestamp = 0.0;

    RangeImage() = default;
    RangeImage(int rows, int cols);

    int rows() const noexcept { return static_cast<int>(distance.rows()); }
    int cols() const noexcept { return static_cast<int>(distance.cols()); }
    bool has_return(int r, int c) const noexcept { return distance(r, c) > 0.0f; }
    std::size_t return_count() const noexcept;

    // Throws InvalidArgument on shape mismatch, negative or non-finite values,
    // or intensity without a return.
    void validate() const;
};

struct LabelImage
{
    LabelMatrix codes;

    LabelImage() = default;
    LabelImage(int rows, int cols, Label fill = Label::NoReturn);

    int rows() const noexcept { return static_cast<int>(codes.rows()); }
    int cols() const noexcept { return static_cast<int>(codes.cols()); }
    Label at(int r, int c) const noexcept { return static_cast<Label>(codes(r, c)); }
    void set(int r, int c, Label label) noexcept { codes(r, c) = code(label); }
    std::size_t count(Label label) const noexcept;

    // Valid for `image` when shapes agree and NoReturn sits exactly on the empty pixels.
    bool consistent_with(const RangeImage& image) const noexcept;
};

// Every return labeled Valid, empty pixels NoReturn.
LabelImage valid_labels(const RangeImage& image);

// Row = ring, col = floor(azimuth / resolution); nearer return wins on collision.
RangeImage project_scan(const PointCloud& cloud, const SensorModel& sensor);

// Inverse of project_scan: one return per non-empty pixel at the column center azimuth.
PointCloud unproject(const RangeImage& image, const SensorModel& sensor);

// Columns start_col .. start_col + width - 1, wrapping modulo cols.
RangeImage crop_fov(const RangeImage& image, int start_col, int width);
LabelImage crop_fov(const LabelImage& labels, int start_col, int width);

// Start column of a crop of `width` centered on the forward direction (column cols/2).
int forward_crop_start(int cols, int width) noexcept;

// CSV with header `ring,azimuth_deg,distance_m,intensity`.
PointCloud read_returns_csv(std::istream& in);
PointCloud read_returns_csv_file(const std::string& path);

} // namespace lidar_weather
