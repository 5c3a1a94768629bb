#include <lidar_weather/augment.hpp>
#include <lidar_weather/eval.hpp>
#include <lidar_weather/synth.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace lidar_weather;

namespace
{

LabelImage filled(int n, Label l)
{
    LabelImage img(1, n, l);
    return img;
}

LabelImage random_labels(std::mt19937& gen, int rows, int cols)
{
    std::uniform_int_distribution<int> u(0, 3);
    LabelImage l(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
        {
            const int v = u(gen);
            l.set(r, c, v == 3 ? Label::NoReturn : static_cast<Label>(v));
        }
    return l;
}

// IoU from its definition, on raw label pairs.
double iou_oracle(const LabelImage& pred, const LabelImage& gt, Label c)
{
    double tp = 0, fp = 0, fn = 0;
    for (int r = 0; r < gt.rows(); ++r)
        for (int k = 0; k < gt.cols(); ++k)
        {
            if (pred.at(r, k) == Label::NoReturn || gt.at(r, k) == Label::NoReturn)
                continue;
            const bool p = pred.at(r, k) == c;
            const bool g = gt.at(r, k) == c;
            tp += p && g;
            fp += p && !g;
            fn += !p && g;
        }
    return tp / (tp + fp + fn);
}

} // namespace

TEST(Confusion, PerfectPrediction)
{
    const LabelImage gt = filled(100, Label::Valid);
    const ConfusionMatrix m = confusion_update({}, gt, gt);
    EXPECT_EQ(m.counts.trace(), 100);
    EXPECT_EQ(m.total(), 100);
}

TEST(Confusion, OffDiagonalCell)
{
    const ConfusionMatrix m = confusion_update({}, filled(40, Label::Rain), filled(40, Label::Fog));
    EXPECT_EQ(m.counts(2, 1), 40);
    EXPECT_EQ(m.total(), 40);
}

TEST(Confusion, AdditiveAndSkipsNoReturn)
{
    std::mt19937 gen(3);
    const LabelImage a = random_labels(gen, 8, 50);
    const LabelImage b = random_labels(gen, 8, 50);
    const ConfusionMatrix once = confusion_update({}, a, b);
    const ConfusionMatrix twice = confusion_update(once, a, b);
    EXPECT_EQ(twice.counts, 2 * once.counts);
    std::int64_t both = 0;
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 50; ++c)
            both += a.at(r, c) != Label::NoReturn && b.at(r, c) != Label::NoReturn;
    EXPECT_EQ(once.total(), both);
    EXPECT_THROW(confusion_update({}, LabelImage(2, 3), LabelImage(3, 2)), InvalidArgument);
}

TEST(Confusion, OrderIndependent)
{
    std::mt19937 gen(4);
    std::vector<std::pair<LabelImage, LabelImage>> frames;
    for (int k = 0; k < 5; ++k)
        frames.emplace_back(random_labels(gen, 4, 20), random_labels(gen, 4, 20));
    ConfusionMatrix forward, backward, split_a, split_b;
    for (std::size_t k = 0; k < frames.size(); ++k)
    {
        forward = confusion_update(forward, frames[k].first, frames[k].second);
        backward = confusion_update(backward, frames[4 - k].first, frames[4 - k].second);
        (k < 2 ? split_a : split_b) = confusion_update(k < 2 ? split_a : split_b, frames[k].first, frames[k].second);
    }
    split_a += split_b;
    EXPECT_EQ(forward.counts, backward.counts);
    EXPECT_EQ(forward.counts, split_a.counts);
}

TEST(Iou, Definition)
{
    ConfusionMatrix m;
    m.counts(0, 0) = 50;
    m.counts(1, 0) = 25; // FP for Valid
    m.counts(0, 2) = 25; // FN for Valid
    const IouReport r = iou_scores(m);
    EXPECT_DOUBLE_EQ(r.per_class[0], 0.5);
    EXPECT_TRUE(r.defined[0]);
}

TEST(Iou, PerfectAndUndefinedClasses)
{
    const LabelImage gt = filled(10, Label::Valid);
    const IouReport r = iou_scores(confusion_update({}, gt, gt));
    EXPECT_EQ(r.per_class[0], 1.0);
    EXPECT_FALSE(r.defined[1]);
    EXPECT_FALSE(r.defined[2]);
    EXPECT_TRUE(std::isnan(r.per_class[1]));
    EXPECT_EQ(r.mean, 1.0);
    EXPECT_THROW(iou_scores(ConfusionMatrix{}), InvalidArgument);
}

TEST(Iou, MatchesOracleAndMeanIsAverage)
{
    std::mt19937 gen(10);
    const LabelImage a = random_labels(gen, 16, 64);
    const LabelImage b = random_labels(gen, 16, 64);
    const IouReport r = iou_scores(confusion_update({}, a, b));
    double sum = 0;
    for (int c = 0; c < 3; ++c)
    {
        EXPECT_NEAR(r.per_class[static_cast<std::size_t>(c)], iou_oracle(a, b, static_cast<Label>(c)), 1e-12);
        sum += r.per_class[static_cast<std::size_t>(c)];
    }
    EXPECT_NEAR(r.mean, sum / 3.0, 1e-12);
}

TEST(Iou, PermutationEquivariant)
{
    std::mt19937 gen(11);
    LabelImage a = random_labels(gen, 10, 30);
    LabelImage b = random_labels(gen, 10, 30);
    const IouReport before = iou_scores(confusion_update({}, a, b));
    auto swap_rain_fog = [](LabelImage& l) {
        for (int r = 0; r < l.rows(); ++r)
            for (int c = 0; c < l.cols(); ++c)
                if (l.at(r, c) == Label::Rain)
                    l.set(r, c, Label::Fog);
                else if (l.at(r, c) == Label::Fog)
                    l.set(r, c, Label::Rain);
    };
    swap_rain_fog(a);
    swap_rain_fog(b);
    const IouReport after = iou_scores(confusion_update({}, a, b));
    EXPECT_DOUBLE_EQ(after.per_class[0], before.per_class[0]);
    EXPECT_DOUBLE_EQ(after.per_class[1], before.per_class[2]);
    EXPECT_DOUBLE_EQ(after.per_class[2], before.per_class[1]);
}

TEST(BinaryScoring, ClutterAttributedToBothWeatherClasses)
{
    LabelImage gt(1, 10, Label::Valid);
    gt.set(0, 0, Label::Rain);
    gt.set(0, 1, Label::Fog);
    gt.set(0, 2, Label::Fog);
    OutlierMask pred;
    pred.flags = LabelMatrix::Zero(1, 10);
    pred.flags(0, 0) = 1;
    pred.flags(0, 1) = 1;
    pred.flags(0, 3) = 1; // false alarm on a valid point
    const BinaryConfusion bc = binary_confusion_update({}, pred, gt);
    EXPECT_EQ(bc.total(), 10);
    const IouReport r = iou_scores(bc);
    EXPECT_DOUBLE_EQ(r.per_class[0], 6.0 / 8.0);
    // Rain: TP 1, FP 2 (fog hit, valid false alarm), FN 0.
    EXPECT_DOUBLE_EQ(r.per_class[1], 1.0 / 3.0);
    // Fog: TP 1, FP 2 (rain hit, false alarm), FN 1.
    EXPECT_DOUBLE_EQ(r.per_class[2], 1.0 / 4.0);
}

TEST(BinaryScoring, SelfScoredFogOnlyFrame)
{
    LabelImage gt(1, 6, Label::Valid);
    gt.set(0, 2, Label::Fog);
    gt.set(0, 5, Label::NoReturn);
    const IouReport r = iou_scores(binary_confusion_update({}, labels_to_mask(gt), gt));
    EXPECT_EQ(r.per_class[0], 1.0);
    EXPECT_EQ(r.per_class[2], 1.0);
    // The flagged fog point is also a rain false alarm.
    EXPECT_TRUE(r.defined[1]);
    EXPECT_EQ(r.per_class[1], 0.0);
}

TEST(Degradation, Ratios)
{
    EXPECT_EQ(degradation_report(filled(10, Label::Valid)).clutter_ratio, 0.0);
    LabelImage l(1, 110, Label::Valid);
    for (int c = 0; c < 30; ++c)
        l.set(0, c, c % 2 ? Label::Rain : Label::Fog);
    for (int c = 100; c < 110; ++c)
        l.set(0, c, Label::NoReturn);
    const DegradationReport d = degradation_report(l);
    EXPECT_EQ(d.clutter, 30u);
    EXPECT_EQ(d.valid, 70u);
    EXPECT_DOUBLE_EQ(d.clutter_ratio, 0.30);
    EXPECT_THROW(degradation_report(filled(4, Label::NoReturn)), InvalidArgument);
}

TEST(Degradation, RatioMonotoneOverFogSweep)
{
    double previous = -1.0;
    for (double beta : {0.002, 0.01, 0.05, 0.1})
    {
        std::size_t valid = 0, clutter = 0;
        for (int k = 0; k < 10; ++k)
        {
            WeatherParams p = fog_params(visibility_from_beta(beta));
            p.scatter_rate = 0.2;
            p.seed = 900 + static_cast<std::uint64_t>(k);
            const auto frame = raycast_scene(builtin_scene(k % builtin_scene_count()), SensorModel::vlp32c(), k);
            const DegradationReport d = degradation_report(augment_fog(frame, p).labels);
            valid += d.valid;
            clutter += d.clutter;
        }
        const double ratio = static_cast<double>(clutter) / static_cast<double>(clutter + valid);
        EXPECT_GE(ratio, previous);
        previous = ratio;
    }
}

TEST(Calibration, InvertsMonotoneCurve)
{
    const VisibilityCalibration cal({{0.01, 0.02}, {0.002, 0.0}, {0.1, 0.3}, {0.05, 0.15}});
    ASSERT_EQ(cal.samples().front().beta, 0.002);
    EXPECT_NEAR(*cal.estimate_beta(0.01), 0.006, 1e-12);
    EXPECT_NEAR(*cal.estimate_beta(0.3), 0.1, 1e-12);
    EXPECT_NEAR(*cal.estimate_visibility(0.3), visibility_from_beta(0.1), 1e-9);
    EXPECT_FALSE(cal.estimate_beta(0.5).has_value());
    EXPECT_FALSE(cal.estimate_beta(-0.1).has_value());
}

TEST(Tables, TextAndCsv)
{
    TableRow row{"WeatherNet", {}, 1.529507};
    row.iou.per_class = {0.9, 0.8, 0.7};
    row.iou.defined = {true, true, true};
    row.iou.mean = 0.8;
    const std::string text = format_iou_table({row});
    EXPECT_NE(text.find("WeatherNet"), std::string::npos);
    EXPECT_NE(text.find("90.00"), std::string::npos);
    EXPECT_NE(text.find("1.53"), std::string::npos);
    const std::string csv = format_iou_csv({row});
    EXPECT_EQ(csv.substr(0, csv.find('\n')).find("approach"), 0u);
    EXPECT_NE(csv.find("WeatherNet"), std::string::npos);
}
