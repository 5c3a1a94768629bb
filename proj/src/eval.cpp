#include <lidar_weather/augment.hpp>
#include <lidar_weather/eval.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace lidar_weather
{
namespace
{

int class_index(Label label) noexcept
{
    switch (label)
    {
    case Label::Valid: return 0;
    case Label::Rain: return 1;
    case Label::Fog: return 2;
    case Label::NoReturn: break;
    }
    return -1;
}

void check_shapes(int pr, int pc, const LabelImage& gt)
{
    if (pr != gt.rows() || pc != gt.cols())
        throw InvalidArgument("prediction is " + std::to_string(pr) + "x" + std::to_string(pc) +
                              " but ground truth is " + std::to_string(gt.rows()) + "x" + std::to_string(gt.cols()));
}

IouReport finish(const std::array<std::int64_t, 3>& tp, const std::array<std::int64_t, 3>& fp,
                 const std::array<std::int64_t, 3>& fn)
{
    IouReport report;
    double sum = 0.0;
    int defined = 0;
    for (int c = 0; c < 3; ++c)
    {
        const std::int64_t denom = tp[c] + fp[c] + fn[c];
        report.defined[c] = denom > 0;
        report.per_class[c] = denom > 0 ? static_cast<double>(tp[c]) / static_cast<double>(denom)
                                        : std::numeric_limits<double>::quiet_NaN();
        if (denom > 0)
        {
            sum += report.per_class[c];
            ++defined;
        }
    }
    report.mean = defined > 0 ? sum / defined : std::numeric_limits<double>::quiet_NaN();
    return report;
}

} // namespace

ConfusionMatrix confusion_update(ConfusionMatrix acc, const LabelImage& pred, const LabelImage& gt)
{
    check_shapes(pred.rows(), pred.cols(), gt);
    for (int r = 0; r < gt.rows(); ++r)
        for (int c = 0; c < gt.cols(); ++c)
        {
            const int g = class_index(gt.at(r, c));
            const int p = class_index(pred.at(r, c));
            if (g >= 0 && p >= 0)
                ++acc.counts(g, p);
        }
    return acc;
}

IouReport iou_scores(const ConfusionMatrix& conf)
{
    if (conf.total() <= 0)
        throw InvalidArgument("confusion matrix is empty");
    std::array<std::int64_t, 3> tp{}, fp{}, fn{};
    for (int c = 0; c < 3; ++c)
    {
        tp[c] = conf.counts(c, c);
        fp[c] = conf.counts.col(c).sum() - tp[c];
        fn[c] = conf.counts.row(c).sum() - tp[c];
    }
    return finish(tp, fp, fn);
}

BinaryConfusion binary_confusion_update(BinaryConfusion acc, const OutlierMask& pred, const LabelImage& gt)
{
    check_shapes(pred.rows(), pred.cols(), gt);
    for (int r = 0; r < gt.rows(); ++r)
        for (int c = 0; c < gt.cols(); ++c)
        {
            const int g = class_index(gt.at(r, c));
            const MaskFlag p = pred.at(r, c);
            if (g < 0 || p == MaskFlag::NoReturn)
                continue;
            ++acc.counts(g, p == MaskFlag::Keep ? 0 : 1);
        }
    return acc;
}

IouReport iou_scores(const BinaryConfusion& conf)
{
    if (conf.total() <= 0)
        throw InvalidArgument("confusion matrix is empty");
    const auto& m = conf.counts;
    std::array<std::int64_t, 3> tp{}, fp{}, fn{};
    tp[0] = m(0, 0);
    fp[0] = m(1, 0) + m(2, 0);
    fn[0] = m(0, 1);
    for (int c = 1; c < 3; ++c)
    {
        tp[c] = m(c, 1);
        fp[c] = m.col(1).sum() - m(c, 1);
        fn[c] = m(c, 0);
    }
    return finish(tp, fp, fn);
}

DegradationReport degradation_report(const LabelImage& labels)
{
    DegradationReport report;
    report.valid = labels.count(Label::Valid);
    report.clutter = labels.count(Label::Rain) + labels.count(Label::Fog);
    if (report.valid + report.clutter == 0)
        throw InvalidArgument("frame has no labeled returns");
    report.clutter_ratio = static_cast<double>(report.clutter) / static_cast<double>(report.valid + report.clutter);
    return report;
}

VisibilityCalibration::VisibilityCalibration(std::vector<Sample> samples, double contrast_threshold)
    : samples_(std::move(samples)), contrast_threshold_(contrast_threshold)
{
    if (samples_.size() < 2)
        throw InvalidArgument("calibration needs at least 2 samples");
    std::sort(samples_.begin(), samples_.end(), [](const Sample& a, const Sample& b) { return a.beta < b.beta; });
    for (std::size_t k = 1; k < samples_.size(); ++k)
        samples_[k].clutter_ratio = std::max(samples_[k].clutter_ratio, samples_[k - 1].clutter_ratio);
}

std::optional<double> VisibilityCalibration::estimate_beta(double ratio) const
{
    if (ratio < samples_.front().clutter_ratio || ratio > samples_.back().clutter_ratio)
        return std::nullopt;
    for (std::size_t k = 1; k < samples_.size(); ++k)
    {
        const Sample& a = samples_[k - 1];
        const Sample& b = samples_[k];
        if (ratio <= b.clutter_ratio)
        {
            if (b.clutter_ratio == a.clutter_ratio)
                return a.beta;
            const double t = (ratio - a.clutter_ratio) / (b.clutter_ratio - a.clutter_ratio);
            return a.beta + t * (b.beta - a.beta);
        }
    }
    return samples_.back().beta;
}

std::optional<double> VisibilityCalibration::estimate_visibility(double ratio) const
{
    const auto beta = estimate_beta(ratio);
    if (!beta)
        return std::nullopt;
    return visibility_from_beta(*beta, contrast_threshold_);
}

namespace
{

std::string percent(const IouReport& r, int c)
{
    if (!r.defined[static_cast<std::size_t>(c)])
        return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * r.per_class[static_cast<std::size_t>(c)]);
    return buf;
}

std::string fixed(double v, const char* fmt)
{
    if (std::isnan(v))
        return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, fmt, v);
    return buf;
}

} // namespace

std::string format_iou_table(const std::vector<TableRow>& rows)
{
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-16s %8s %8s %8s %8s %12s\n", "Approach", "Clear", "Fog", "Rain", "Mean",
                  "Params[Mio]");
    out << line << std::string(65, '-') << "\n";
    for (const TableRow& row : rows)
    {
        std::snprintf(line, sizeof line, "%-16s %8s %8s %8s %8s %12s\n", row.approach.c_str(), percent(row.iou, 0).c_str(),
                      percent(row.iou, 2).c_str(), percent(row.iou, 1).c_str(),
                      fixed(100.0 * row.iou.mean, "%.2f").c_str(), fixed(row.parameters_millions, "%.2f").c_str());
        out << line;
    }
    return out.str();
}

std::string format_iou_csv(const std::vector<TableRow>& rows)
{
    std::ostringstream out;
    out << "approach,clear_iou,fog_iou,rain_iou,mean_iou,parameters_mio\n";
    for (const TableRow& row : rows)
        out << row.approach << "," << percent(row.iou, 0) << "," << percent(row.iou, 2) << "," << percent(row.iou, 1)
            << "," << fixed(100.0 * row.iou.mean, "%.2f") << "," << fixed(row.parameters_millions, "%.6g") << "\n";
    return out.str();
}

} // namespace lidar_weather
