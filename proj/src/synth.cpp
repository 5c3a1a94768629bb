#include <lidar_weather/rng.hpp>
#include <lidar_weather/synth.hpp>

#include <nlohmann/json.hpp>

#include <Eigen/Geometry>

#include <cmath>
#include <limits>
#include <numbers>

namespace lidar_weather
{
namespace
{

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kDeg = std::numbers::pi / 180.0;

struct Ray
{
    Eigen::Vector3d origin;
    Eigen::Vector3d dir;
};

double hit_plane(const Ray& ray, double height)
{
    if (ray.dir.z() >= 0.0)
        return kInf;
    const double t = (height - ray.origin.z()) / ray.dir.z();
    return t > 0.0 ? t : kInf;
}

double hit(const Ray& ray, const Box& box)
{
    const Eigen::Matrix3d to_local = Eigen::AngleAxisd(-box.yaw_deg * kDeg, Eigen::Vector3d::UnitZ()).toRotationMatrix();
    const Eigen::Vector3d o = to_local * (ray.origin - box.center);
    const Eigen::Vector3d w = to_local * ray.dir;
    const Eigen::Vector3d half = 0.5 * box.size;
    double t_near = -kInf, t_far = kInf;
    for (int a = 0; a < 3; ++a)
    {
        if (std::abs(w[a]) < 1e-15)
        {
            if (std::abs(o[a]) > half[a])
                return kInf;
            continue;
        }
        double t0 = (-half[a] - o[a]) / w[a];
        double t1 = (half[a] - o[a]) / w[a];
        if (t0 > t1)
            std::swap(t0, t1);
        t_near = std::max(t_near, t0);
        t_far = std::min(t_far, t1);
        if (t_near > t_far)
            return kInf;
    }
    if (t_near > 0.0)
        return t_near;
    return t_far > 0.0 ? t_far : kInf;
}

double hit(const Ray& ray, const Cylinder& cyl)
{
    double best = kInf;
    const Eigen::Vector2d o = ray.origin.head<2>() - cyl.center;
    const Eigen::Vector2d w = ray.dir.head<2>();
    const double a = w.squaredNorm();
    const double top = cyl.base_z + cyl.height;
    if (a > 1e-15)
    {
        const double b = 2.0 * o.dot(w);
        const double c = o.squaredNorm() - cyl.radius * cyl.radius;
        const double disc = b * b - 4.0 * a * c;
        if (disc >= 0.0)
        {
            const double sq = std::sqrt(disc);
            for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)})
            {
                const double z = ray.origin.z() + t * ray.dir.z();
                if (t > 0.0 && z >= cyl.base_z && z <= top)
                {
                    best = std::min(best, t);
                    break;
                }
            }
        }
    }
    if (std::abs(ray.dir.z()) > 1e-15)
    {
        for (double plane : {cyl.base_z, top})
        {
            const double t = (plane - ray.origin.z()) / ray.dir.z();
            if (t > 0.0 && (o + t * w).squaredNorm() <= cyl.radius * cyl.radius)
                best = std::min(best, t);
        }
    }
    return best;
}

double hit(const Ray& ray, const Sphere& s)
{
    const Eigen::Vector3d oc = ray.origin - s.center;
    const double b = oc.dot(ray.dir);
    const double c = oc.squaredNorm() - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0)
        return kInf;
    const double sq = std::sqrt(disc);
    if (-b - sq > 0.0)
        return -b - sq;
    if (-b + sq > 0.0)
        return -b + sq;
    return kInf;
}

double reflectance_of(const Primitive& p)
{
    return std::visit([](const auto& prim) { return prim.reflectance; }, p);
}

} // namespace

void SceneSpec::validate() const
{
    if (!(range_noise_sigma >= 0.0))
        throw InvalidArgument("scene '" + name + "': range noise sigma must be >= 0");
    if (!(ground_reflectance >= 0.0 && ground_reflectance <= 1.0))
        throw InvalidArgument("scene '" + name + "': ground reflectance outside [0, 1]");
    for (std::size_t k = 0; k < primitives.size(); ++k)
    {
        const std::string where = "scene '" + name + "' primitive " + std::to_string(k);
        const double refl = reflectance_of(primitives[k]);
        if (!(refl >= 0.0 && refl <= 1.0))
            throw InvalidArgument(where + ": reflectance outside [0, 1]");
        std::visit(
            [&](const auto& prim) {
                using T = std::decay_t<decltype(prim)>;
                bool degenerate = false;
                if constexpr (std::is_same_v<T, Box>)
                    degenerate = !(prim.size.array() > 0.0).all();
                else if constexpr (std::is_same_v<T, Cylinder>)
                    degenerate = !(prim.radius > 0.0) || !(prim.height > 0.0);
                else
                    degenerate = !(prim.radius > 0.0);
                if (degenerate)
                    throw InvalidArgument(where + ": degenerate primitive (zero extent)");
            },
            primitives[k]);
    }
}

RangeImage raycast_scene(const SceneSpec& scene, const SensorModel& sensor, std::uint64_t seed)
{
    scene.validate();
    sensor.validate();
    RangeImage image(sensor.rings, sensor.cols);
    image.frame_id = scene.name;
    const Eigen::Matrix3d yaw =
        Eigen::AngleAxisd(scene.sensor_yaw_deg * kDeg, Eigen::Vector3d::UnitZ()).toRotationMatrix();

    for (int r = 0; r < sensor.rings; ++r)
    {
        for (int c = 0; c < sensor.cols; ++c)
        {
            const Ray ray{scene.sensor_position, yaw * sensor.ray_direction(r, c)};
            double best = scene.ground_height ? hit_plane(ray, *scene.ground_height) : kInf;
            double reflectance = scene.ground_reflectance;
            for (const Primitive& prim : scene.primitives)
            {
                const double t = std::visit([&](const auto& p) { return hit(ray, p); }, prim);
                if (t < best)
                {
                    best = t;
                    reflectance = reflectance_of(prim);
                }
            }
            if (!(best <= sensor.max_range))
                continue;

            double d = best;
            if (scene.range_noise_sigma > 0.0)
            {
                CounterRng rng(seed, static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(sensor.cols) +
                                         static_cast<std::uint64_t>(c));
                d += scene.range_noise_sigma * rng.normal();
            }
            d = std::clamp(d, 1e-3, sensor.max_range);
            image.distance(r, c) = static_cast<float>(d);
            image.intensity(r, c) = static_cast<float>(std::clamp(reflectance / (1.0 + best / 100.0), 0.0, 1.0));
        }
    }
    return image;
}

namespace
{

Box box(double x, double y, double w, double l, double h, double yaw, double refl, double ground = -1.8)
{
    return Box{{x, y, ground + 0.5 * h}, {w, l, h}, yaw, refl};
}

Cylinder person(double x, double y, double height = 1.75, double refl = 0.35, double ground = -1.8)
{
    return Cylinder{{x, y}, ground, 0.25, height, refl};
}

// Row of buildings far ahead so that upper rings see long ranges.
void add_backdrop(SceneSpec& s, double depth, double height, double refl)
{
    for (int k = -4; k <= 4; ++k)
        s.primitives.push_back(box(depth + 6.0 * (k % 2), 32.0 * k, 12.0, 30.0, height + 4.0 * (k % 3), 0.0, refl));
}

} // namespace

int builtin_scene_count() noexcept { return 4; }

SceneSpec builtin_scene(int index)
{
    SceneSpec s;
    switch (index)
    {
    case 0: // pedestrian on a crossing, child with ball, parked and turning cars, cyclist, garbage can
        s.name = "chamber0";
        s.primitives.push_back(person(9.0, 1.0));
        s.primitives.push_back(person(11.0, -2.2, 1.1));
        s.primitives.push_back(Sphere{{11.6, -3.0, -1.68}, 0.12, 0.6});
        s.primitives.push_back(box(15.0, 5.0, 4.5, 1.8, 1.5, 0.0, 0.55));
        s.primitives.push_back(box(22.0, -4.0, 4.5, 1.8, 1.5, 30.0, 0.45));
        s.primitives.push_back(person(13.5, -0.3, 1.7, 0.3));
        s.primitives.push_back(box(13.5, -0.3, 1.7, 0.15, 1.0, 90.0, 0.5));
        s.primitives.push_back(Cylinder{{8.0, -7.0}, -1.8, 0.35, 1.1, 0.4});
        add_backdrop(s, 150.0, 30.0, 0.45);
        break;
    case 1: // lost cargo tire, guardrail, cars, reflector posts
        s.name = "chamber1";
        s.primitives.push_back(Cylinder{{12.0, 0.5}, -1.8, 0.35, 0.25, 0.05});
        s.primitives.push_back(box(18.0, -4.5, 40.0, 0.2, 0.8, 0.0, 0.6));
        s.primitives.push_back(box(25.0, 2.5, 4.5, 1.8, 1.5, 0.0, 0.5));
        s.primitives.push_back(box(35.0, -1.5, 4.5, 1.8, 1.5, 0.0, 0.35));
        for (int k = 0; k < 5; ++k)
            s.primitives.push_back(Cylinder{{8.0 + 8.0 * k, 5.5}, -1.8, 0.06, 1.0, 0.95});
        add_backdrop(s, 165.0, 35.0, 0.4);
        break;
    case 2: // traffic sign, plant, mannequins with umbrella
        s.name = "chamber2";
        s.primitives.push_back(Cylinder{{14.0, 4.0}, -1.8, 0.04, 2.2, 0.5});
        s.primitives.push_back(box(14.0, 4.0, 0.05, 0.8, 0.8, 0.0, 0.98, 0.4));
        s.primitives.push_back(Sphere{{10.0, -5.0, -1.2}, 0.6, 0.3});
        s.primitives.push_back(person(7.0, -1.5));
        s.primitives.push_back(person(16.0, 1.0));
        s.primitives.push_back(Cylinder{{16.0, 1.0}, -0.2, 0.6, 0.05, 0.2});
        s.primitives.push_back(box(28.0, -3.0, 4.5, 1.8, 1.5, -20.0, 0.5));
        add_backdrop(s, 140.0, 28.0, 0.5);
        break;
    case 3: // cyclist, van, pedestrians, wall
        s.name = "chamber3";
        s.primitives.push_back(person(10.0, 2.0, 1.7, 0.3));
        s.primitives.push_back(box(10.0, 2.0, 1.7, 0.15, 1.0, 0.0, 0.5));
        s.primitives.push_back(box(19.0, -3.0, 5.5, 2.0, 2.4, 10.0, 0.6));
        s.primitives.push_back(person(6.0, -2.5));
        s.primitives.push_back(person(24.0, 3.5));
        s.primitives.push_back(box(30.0, 9.0, 20.0, 0.4, 2.5, 0.0, 0.3));
        add_backdrop(s, 175.0, 40.0, 0.45);
        break;
    default: throw InvalidArgument("no builtin scene " + std::to_string(index));
    }
    return s;
}

SceneSpec builtin_scene(const std::string& name)
{
    for (int k = 0; k < builtin_scene_count(); ++k)
        if (name == "chamber" + std::to_string(k))
            return builtin_scene(k);
    throw InvalidArgument("unknown builtin scene '" + name + "'");
}

namespace
{

Eigen::Vector3d vec3(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

nlohmann::json to_json_vec(const Eigen::Vector3d& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

} // namespace

SceneSpec scene_from_json(const std::string& text)
{
    nlohmann::json doc;
    try
    {
        doc = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::parse_error& e)
    {
        throw FormatError(std::string("scene: ") + e.what(), e.byte);
    }
    SceneSpec s;
    try
    {
        if (doc.contains("builtin"))
            s = builtin_scene(doc["builtin"].get<std::string>());
        s.name = doc.value("name", s.name);
        if (doc.contains("ground_height"))
        {
            if (doc["ground_height"].is_null())
                s.ground_height.reset();
            else
                s.ground_height = doc["ground_height"].get<double>();
        }
        s.ground_reflectance = doc.value("ground_reflectance", s.ground_reflectance);
        s.range_noise_sigma = doc.value("range_noise_sigma", s.range_noise_sigma);
        s.sensor_yaw_deg = doc.value("sensor_yaw_deg", s.sensor_yaw_deg);
        if (doc.contains("sensor_position"))
            s.sensor_position = vec3(doc["sensor_position"]);
        if (doc.contains("primitives"))
        {
            s.primitives.clear();
            for (const auto& p : doc["primitives"])
            {
                const std::string type = p.at("type").get<std::string>();
                const double refl = p.value("reflectance", 0.5);
                if (type == "box")
                    s.primitives.push_back(
                        Box{vec3(p.at("center")), vec3(p.at("size")), p.value("yaw_deg", 0.0), refl});
                else if (type == "cylinder")
                    s.primitives.push_back(Cylinder{{p.at("center").at(0).get<double>(), p.at("center").at(1).get<double>()},
                                                    p.at("base_z").get<double>(),
                                                    p.at("radius").get<double>(),
                                                    p.at("height").get<double>(),
                                                    refl});
                else if (type == "sphere")
                    s.primitives.push_back(Sphere{vec3(p.at("center")), p.at("radius").get<double>(), refl});
                else
                    throw InvalidArgument("unknown primitive type '" + type + "'");
            }
        }
    }
    catch (const nlohmann::json::exception& e)
    {
        throw FormatError(std::string("scene: ") + e.what(), 0);
    }
    s.validate();
    return s;
}

std::string scene_to_json(const SceneSpec& s)
{
    nlohmann::json doc;
    doc["name"] = s.name;
    doc["ground_height"] = s.ground_height ? nlohmann::json(*s.ground_height) : nlohmann::json(nullptr);
    doc["ground_reflectance"] = s.ground_reflectance;
    doc["range_noise_sigma"] = s.range_noise_sigma;
    doc["sensor_yaw_deg"] = s.sensor_yaw_deg;
    doc["sensor_position"] = to_json_vec(s.sensor_position);
    doc["primitives"] = nlohmann::json::array();
    for (const Primitive& prim : s.primitives)
    {
        std::visit(
            [&](const auto& p) {
                using T = std::decay_t<decltype(p)>;
                nlohmann::json j;
                if constexpr (std::is_same_v<T, Box>)
                    j = {{"type", "box"}, {"center", to_json_vec(p.center)}, {"size", to_json_vec(p.size)}, {"yaw_deg", p.yaw_deg}};
                else if constexpr (std::is_same_v<T, Cylinder>)
                    j = {{"type", "cylinder"},
                         {"center", {p.center.x(), p.center.y()}},
                         {"base_z", p.base_z},
                         {"radius", p.radius},
                         {"height", p.height}};
                else
                    j = {{"type", "sphere"}, {"center", to_json_vec(p.center)}, {"radius", p.radius}};
                j["reflectance"] = p.reflectance;
                doc["primitives"].push_back(j);
            },
            prim);
    }
    return doc.dump(2);
}

} // namespace lidar_weather
