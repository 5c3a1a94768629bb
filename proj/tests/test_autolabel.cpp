#include <lidar_weather/autolabel.hpp>
#include <lidar_weather/augment.hpp>
#include <lidar_weather/synth.hpp>

#include <gtest/gtest.h>

#include <filesystem>

using namespace lidar_weather;

namespace
{

RangeImage single_pixel(float d)
{
    RangeImage img(1, 1);
    img.distance(0, 0) = d;
    img.intensity(0, 0) = d > 0 ? 0.5f : 0.0f;
    return img;
}

ReferenceStack stack_of(std::initializer_list<float> ds)
{
    std::vector<RangeImage> frames;
    for (float d : ds)
        frames.push_back(single_pixel(d));
    return accumulate_reference(frames);
}

} // namespace

TEST(Autolabel, MatchWithinToleranceIsValid)
{
    AutolabelParams p;
    EXPECT_EQ(label_clutter(single_pixel(10.0f), stack_of({10.2f, 10.4f}), p).at(0, 0), Label::Valid);
}

TEST(Autolabel, NoMatchGetsWeatherClass)
{
    AutolabelParams p;
    p.weather_class = Label::Fog;
    EXPECT_EQ(label_clutter(single_pixel(5.0f), stack_of({10.2f, 10.4f}), p).at(0, 0), Label::Fog);
    p.weather_class = Label::Rain;
    EXPECT_EQ(label_clutter(single_pixel(5.0f), stack_of({10.2f, 10.4f}), p).at(0, 0), Label::Rain);
}

TEST(Autolabel, NoReturnStaysNoReturn)
{
    EXPECT_EQ(label_clutter(single_pixel(0.0f), stack_of({10.2f}), {}).at(0, 0), Label::NoReturn);
}

TEST(Autolabel, EmptyReferenceColumnMeansClutter)
{
    EXPECT_EQ(label_clutter(single_pixel(3.0f), stack_of({0.0f, 0.0f}), {}).at(0, 0), Label::Fog);
    EXPECT_EQ(label_clutter(single_pixel(3.0f), stack_of({0.0f, 3.1f}), {}).at(0, 0), Label::Valid);
}

TEST(Autolabel, StackShapeAndErrors)
{
    const SceneSpec scene = builtin_scene(0);
    const SensorModel sensor = SensorModel::vlp32c();
    std::vector<RangeImage> frames;
    for (int k = 0; k < 10; ++k)
        frames.push_back(raycast_scene(scene, sensor, k));
    const ReferenceStack s = accumulate_reference(frames);
    EXPECT_EQ(s.frame_count(), 10);
    EXPECT_EQ(s.rows(), 32);
    EXPECT_EQ(s.cols(), 1800);
    EXPECT_EQ(s.layers[3], frames[3].distance);

    EXPECT_THROW(accumulate_reference({}), InvalidArgument);
    EXPECT_THROW(accumulate_reference({RangeImage(2, 3), RangeImage(2, 4)}), InvalidArgument);
    EXPECT_THROW(label_clutter(RangeImage(2, 3), accumulate_reference({RangeImage(2, 4)}), {}), InvalidArgument);
    AutolabelParams bad;
    bad.delta_r = 0.0;
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(Autolabel, FrameInsideItsOwnStackHasNoClutter)
{
    const SceneSpec scene = builtin_scene(1);
    const SensorModel sensor = SensorModel::vlp32c();
    std::vector<RangeImage> frames{raycast_scene(scene, sensor, 1), raycast_scene(scene, sensor, 2)};
    const LabelImage l = label_clutter(frames[1], accumulate_reference(frames), {});
    EXPECT_EQ(l.count(Label::Fog), 0u);
    EXPECT_TRUE(l.consistent_with(frames[1]));
}

TEST(Autolabel, ClutterNonIncreasingInDeltaR)
{
    const SceneSpec scene = builtin_scene(2);
    const SensorModel sensor = SensorModel::vlp32c();
    const ReferenceStack ref = accumulate_reference({raycast_scene(scene, sensor, 1)});
    const RangeImage fog = augment_weather(raycast_scene(scene, sensor, 9), fog_params(30.0)).image;
    std::size_t previous = SIZE_MAX;
    LabelImage prev_labels;
    for (double dr : {0.01, 0.05, 0.35, 1.0, 5.0})
    {
        AutolabelParams p;
        p.delta_r = dr;
        const LabelImage l = label_clutter(fog, ref, p);
        EXPECT_LE(l.count(Label::Fog), previous);
        if (previous != SIZE_MAX)
        {
            for (int r = 0; r < l.rows(); ++r)
                for (int c = 0; c < l.cols(); ++c)
                    if (prev_labels.at(r, c) == Label::Valid)
                    {
                        ASSERT_EQ(l.at(r, c), Label::Valid);
                    }
        }
        previous = l.count(Label::Fog);
        prev_labels = l;
    }
}

TEST(Autolabel, SelfCheckIdenticalFramesIsZero)
{
    const RangeImage img = raycast_scene(builtin_scene(0), SensorModel::vlp32c(), 3);
    const FalseRateReport r = reference_self_check({img, img, img, img}, {}, 400);
    EXPECT_EQ(r.mean_per_pixel_false_rate, 0.0);
    EXPECT_EQ(r.pixels_per_frame, 32u * 400u);
    EXPECT_EQ(r.per_frame_false_counts.size(), 4u);
    EXPECT_THROW(reference_self_check({img}, {}, 400), InvalidArgument);
}

TEST(Autolabel, SelfCheckNoisyStaticSceneBelowTenthPercent)
{
    const SceneSpec scene = builtin_scene(0);
    const SensorModel sensor = SensorModel::vlp32c();
    std::vector<RangeImage> frames;
    for (int k = 0; k < 20; ++k)
        frames.push_back(raycast_scene(scene, sensor, 100 + k));
    const FalseRateReport r = reference_self_check(frames, {}, 400);
    EXPECT_LE(r.mean_per_pixel_false_rate, 0.001);
}

TEST(Autolabel, AgreesWithConstructionLabelsOnZeroNoiseScenes)
{
    const SensorModel sensor = SensorModel::vlp32c();
    std::size_t agree = 0;
    std::size_t total = 0;
    for (int s = 0; s < builtin_scene_count(); ++s)
    {
        SceneSpec scene = builtin_scene(s);
        scene.range_noise_sigma = 0.0;
        const RangeImage clear = raycast_scene(scene, sensor, 0);
        const ReferenceStack ref = accumulate_reference({clear});
        for (const char* preset : {"rain", "fog:V=30", "fog:V=80"})
        {
            WeatherParams p = weather_preset(preset);
            p.seed = 77 + static_cast<std::uint64_t>(s);
            const AugmentResult a = augment_weather(clear, p);
            AutolabelParams ap;
            ap.weather_class = p.weather_class;
            const LabelImage l = label_clutter(a.image, ref, ap);
            for (int r = 0; r < l.rows(); ++r)
                for (int c = 0; c < l.cols(); ++c)
                    if (a.image.has_return(r, c))
                    {
                        ++total;
                        agree += l.at(r, c) == a.labels.at(r, c);
                    }
        }
    }
    ASSERT_GT(total, 0u);
    EXPECT_GE(static_cast<double>(agree) / static_cast<double>(total), 0.999);
}

TEST(Autolabel, ReferenceStackPersistence)
{
    const auto dir = std::filesystem::temp_directory_path() / "lw_stack_test";
    std::filesystem::create_directories(dir);
    const SensorModel sensor = SensorModel::vlp32c();
    std::vector<RangeImage> frames;
    for (int k = 0; k < 3; ++k)
    {
        frames.push_back(raycast_scene(builtin_scene(3), sensor, k));
        frames.back().frame_id = "ref" + std::to_string(k);
    }
    const std::string base = (dir / "stack").string();
    save_reference_stack(base, frames);
    EXPECT_TRUE(std::filesystem::exists(base + ".lri"));
    EXPECT_TRUE(std::filesystem::exists(base + ".json"));
    const ReferenceStack s = load_reference_stack(base);
    ASSERT_EQ(s.frame_count(), 3);
    EXPECT_EQ(s.frame_ids[2], "ref2");
    EXPECT_EQ(s.layers[1], frames[1].distance);
    std::filesystem::remove_all(dir);
}
