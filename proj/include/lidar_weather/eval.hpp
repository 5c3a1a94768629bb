#pragma once

#include <lidar_weather/core.hpp>
#include <lidar_weather/filters.hpp>

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lidar_weather
{

using CountMatrix3 = Eigen::Matrix<std::int64_t, 3, 3>;

// Rows are ground truth, columns predictions, both ordered Valid, Rain, Fog.
struct ConfusionMatrix
{
    CountMatrix3 counts = CountMatrix3::Zero();

    std::int64_t total() const noexcept { return counts.sum(); }
    ConfusionMatrix& operator+=(const ConfusionMatrix& other) noexcept
    {
        counts += other.counts;
        return *this;
    }
};

struct IouReport
{
    std::array<double, 3> per_class{};  // NaN where undefined
    std::array<bool, 3> defined{};
    double mean = 0.0;                  // over defined classes
};

// Pixels where either side is NoReturn are skipped.
ConfusionMatrix confusion_update(ConfusionMatrix acc, const LabelImage& pred, const LabelImage& gt);

IouReport iou_scores(const ConfusionMatrix& conf);

// Binary (keep/clutter) predictions against three-class ground truth.
// Rows: ground truth Valid/Rain/Fog. Columns: Keep, Clutter.
struct BinaryConfusion
{
    Eigen::Matrix<std::int64_t, 3, 2> counts = Eigen::Matrix<std::int64_t, 3, 2>::Zero();

    std::int64_t total() const noexcept { return counts.sum(); }
    BinaryConfusion& operator+=(const BinaryConfusion& other) noexcept
    {
        counts += other.counts;
        return *this;
    }
};

BinaryConfusion binary_confusion_update(BinaryConfusion acc, const OutlierMask& pred, const LabelImage& gt);

// Valid is scored against Keep; every clutter prediction is attributed to Rain and to Fog in turn,
// so each weather IoU sees the other class's clutter as false positives.
IouReport iou_scores(const BinaryConfusion& conf);

struct DegradationReport
{
    std::size_t valid = 0;
    std::size_t clutter = 0;
    double clutter_ratio = 0.0; // clutter / (clutter + valid)
};

DegradationReport degradation_report(const LabelImage& labels);

// Monotone map from clutter ratio to extinction coefficient, sampled from a sweep.
class VisibilityCalibration
{
  public:
    struct Sample
    {
        double beta;
        double clutter_ratio;
    };

    // Samples are sorted by beta; ratios are made non-decreasing by a running max.
    explicit VisibilityCalibration(std::vector<Sample> samples, double contrast_threshold = 0.05);

    const std::vector<Sample>& samples() const noexcept { return samples_; }
    // Piecewise-linear inverse; nullopt outside the calibrated ratio range.
    std::optional<double> estimate_beta(double clutter_ratio) const;
    std::optional<double> estimate_visibility(double clutter_ratio) const;

  private:
    std::vector<Sample> samples_;
    double contrast_threshold_;
};

struct TableRow
{
    std::string approach;
    IouReport iou;
    double parameters_millions = 0.0;
};

// Text table with per-class IoU in percent, mean, and parameter count.
std::string format_iou_table(const std::vector<TableRow>& rows);
std::string format_iou_csv(const std::vector<TableRow>& rows);

} // namespace lidar_weather
