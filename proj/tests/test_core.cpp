#include <lidar_weather/core.hpp>

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace lidar_weather;

namespace
{

RangeImage random_image(int rows, int cols, unsigned seed, double fill = 0.6)
{
    std::mt19937 gen(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    RangeImage img(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (u(gen) < fill)
            {
                img.distance(r, c) = 0.5f + 150.0f * u(gen);
                img.intensity(r, c) = u(gen);
            }
    return img;
}

} // namespace

TEST(Labels, CodesAndNames)
{
    EXPECT_EQ(code(Label::Valid), 0);
    EXPECT_EQ(code(Label::Rain), 1);
    EXPECT_EQ(code(Label::Fog), 2);
    EXPECT_EQ(code(Label::NoReturn), 255);
    EXPECT_TRUE(is_known_label_code(2));
    EXPECT_FALSE(is_known_label_code(3));
    EXPECT_EQ(parse_label("FOG"), Label::Fog);
    EXPECT_EQ(parse_label("clear"), Label::Valid);
    EXPECT_THROW(parse_label("snow"), InvalidArgument);
}

TEST(SensorModel, DefaultsAndValidation)
{
    const SensorModel s = SensorModel::vlp32c();
    EXPECT_EQ(s.rings, 32);
    EXPECT_EQ(s.cols, 1800);
    EXPECT_DOUBLE_EQ(s.azimuth_resolution() * s.cols, 360.0);
    EXPECT_DOUBLE_EQ(s.vertical_angles.front(), 15.0);
    EXPECT_DOUBLE_EQ(s.vertical_angles.back(), -25.0);
    EXPECT_NO_THROW(s.validate());

    SensorModel bad = s;
    bad.vertical_angles[3] = bad.vertical_angles[4];
    EXPECT_THROW(bad.validate(), InvalidArgument);
    bad = s;
    bad.vertical_angles.pop_back();
    EXPECT_THROW(bad.validate(), InvalidArgument);
}

TEST(SensorModel, RayDirectionIsUnit)
{
    const SensorModel s = SensorModel::vlp32c();
    for (int r : {0, 10, 31})
        for (int c : {0, 450, 1799})
            EXPECT_NEAR(s.ray_direction(r, c).norm(), 1.0, 1e-12);
}

TEST(ProjectScan, PlacesReturnAtRingAndColumn)
{
    const SensorModel s = SensorModel::vlp32c();
    const RangeImage img = project_scan({{0, 0.0, 10.0, 0.5}}, s);
    EXPECT_FLOAT_EQ(img.distance(0, 0), 10.0f);
    EXPECT_FLOAT_EQ(img.intensity(0, 0), 0.5f);
    EXPECT_EQ(img.return_count(), 1u);
}

TEST(ProjectScan, Azimuth180MapsToColumn900)
{
    const RangeImage img = project_scan({{5, 180.0, 7.0, 0.1}}, SensorModel::vlp32c());
    EXPECT_FLOAT_EQ(img.distance(5, 900), 7.0f);
}

TEST(ProjectScan, NearerReturnWins)
{
    const SensorModel s = SensorModel::vlp32c();
    const double az = 42 * s.azimuth_resolution() + 0.05;
    const RangeImage a = project_scan({{3, az, 8.0, 0.2}, {3, az, 5.0, 0.7}}, s);
    const RangeImage b = project_scan({{3, az, 5.0, 0.7}, {3, az, 8.0, 0.2}}, s);
    EXPECT_FLOAT_EQ(a.distance(3, 42), 5.0f);
    EXPECT_FLOAT_EQ(a.intensity(3, 42), 0.7f);
    EXPECT_FLOAT_EQ(b.distance(3, 42), 5.0f);
}

TEST(ProjectScan, RejectsOutOfRangeReturnsWithIndex)
{
    const SensorModel s = SensorModel::vlp32c();
    try
    {
        project_scan({{0, 1.0, 5.0, 0.1}, {32, 1.0, 5.0, 0.1}}, s);
        FAIL() << "expected rejection";
    }
    catch (const InvalidArgument& e)
    {
        EXPECT_NE(std::string(e.what()).find("1"), std::string::npos);
    }
    EXPECT_THROW(project_scan({{0, 360.0, 5.0, 0.1}}, s), InvalidArgument);
    EXPECT_THROW(project_scan({{0, -0.1, 5.0, 0.1}}, s), InvalidArgument);
    EXPECT_THROW(project_scan({{0, 10.0, 0.0, 0.1}}, s), InvalidArgument);
    EXPECT_THROW(project_scan({{0, 10.0, 5.0, 1.5}}, s), InvalidArgument);
}

TEST(ProjectScan, ProjectUnprojectProjectIsExact)
{
    const SensorModel s = SensorModel::vlp32c();
    const RangeImage img = random_image(32, 1800, 7);
    const RangeImage again = project_scan(unproject(img, s), s);
    EXPECT_EQ(again.distance, img.distance);
    EXPECT_EQ(again.intensity, img.intensity);
}

TEST(RangeImage, PixelAccountingPartition)
{
    const RangeImage img = random_image(32, 200, 3);
    std::size_t empty = 0;
    for (int r = 0; r < img.rows(); ++r)
        for (int c = 0; c < img.cols(); ++c)
            empty += !img.has_return(r, c);
    EXPECT_EQ(empty + img.return_count(), 32u * 200u);
    EXPECT_EQ(valid_labels(img).count(Label::NoReturn), empty);
}

TEST(RangeImage, ValidateRejectsInconsistentData)
{
    RangeImage img(2, 2);
    img.intensity(0, 0) = 0.3f;
    EXPECT_THROW(img.validate(), InvalidArgument);
    img.intensity(0, 0) = 0.0f;
    img.distance(1, 1) = -1.0f;
    EXPECT_THROW(img.validate(), InvalidArgument);
}

TEST(CropFov, ForwardWindow)
{
    const RangeImage img = random_image(32, 1800, 11);
    EXPECT_EQ(forward_crop_start(1800, 400), 700);
    const RangeImage crop = crop_fov(img, 700, 400);
    ASSERT_EQ(crop.rows(), 32);
    ASSERT_EQ(crop.cols(), 400);
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 400; ++c)
        {
            EXPECT_EQ(crop.distance(r, c), img.distance(r, 700 + c));
            EXPECT_EQ(crop.intensity(r, c), img.intensity(r, 700 + c));
        }
}

TEST(CropFov, WrapsModuloColumns)
{
    const RangeImage img = random_image(4, 1800, 12);
    const RangeImage crop = crop_fov(img, 1700, 400);
    for (int r = 0; r < 4; ++r)
    {
        EXPECT_EQ(crop.distance(r, 0), img.distance(r, 1700));
        EXPECT_EQ(crop.distance(r, 99), img.distance(r, 1799));
        EXPECT_EQ(crop.distance(r, 100), img.distance(r, 0));
        EXPECT_EQ(crop.distance(r, 399), img.distance(r, 299));
    }
}

TEST(CropFov, FullWidthIsRotation)
{
    const RangeImage img = random_image(3, 50, 13);
    const RangeImage same = crop_fov(img, 0, 50);
    EXPECT_EQ(same.distance, img.distance);
    const RangeImage rotated = crop_fov(img, 10, 50);
    EXPECT_EQ(rotated.distance(1, 45), img.distance(1, 5));
}

TEST(CropFov, RejectsBadWidths)
{
    const RangeImage img = random_image(3, 50, 14);
    EXPECT_THROW(crop_fov(img, 0, 0), InvalidArgument);
    EXPECT_THROW(crop_fov(img, 0, 51), InvalidArgument);
    LabelImage labels = valid_labels(img);
    EXPECT_EQ(crop_fov(labels, 45, 10).codes(0, 7), labels.codes(0, 2));
}

TEST(ReturnsCsv, ParsesAndReportsLine)
{
    std::istringstream ok("ring,azimuth_deg,distance_m,intensity\n0,0.0,10,0.5\n3,180.0,5.5,0.25\n");
    const PointCloud cloud = read_returns_csv(ok);
    ASSERT_EQ(cloud.size(), 2u);
    EXPECT_EQ(cloud[1].ring, 3);
    EXPECT_DOUBLE_EQ(cloud[1].distance, 5.5);

    std::istringstream bad("ring,azimuth_deg,distance_m,intensity\n0,0.0,ten,0.5\n");
    EXPECT_THROW(read_returns_csv(bad), FormatError);
}
