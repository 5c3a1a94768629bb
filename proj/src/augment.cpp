#include <lidar_weather/augment.hpp>
#include <lidar_weather/rng.hpp>

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <numeric>
#include <utility>

namespace lidar_weather
{

double LognormalParams::clamp_probability() const { return 0.5 * std::erfc(-mu / (sigma * std::sqrt(2.0))); }

void WeatherParams::validate() const
{
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw InvalidArgument("beta must be positive");
    if (!(scatter_rate >= 0.0 && scatter_rate <= 1.0))
        throw InvalidArgument("scatter_rate must be in [0, 1]");
    if (!(noise_floor > 0.0))
        throw InvalidArgument("noise_floor must be positive");
    if (!(laser_gain >= 0.0))
        throw InvalidArgument("laser_gain must be non-negative");
    if (!(contrast_threshold > 0.0 && contrast_threshold < 1.0))
        throw InvalidArgument("contrast_threshold must be in (0, 1)");
    if (!(clutter_intensity.sigma > 0.0) || !std::isfinite(clutter_intensity.mu))
        throw InvalidArgument("clutter intensity sigma must be positive");
    if (weather_class != Label::Rain && weather_class != Label::Fog)
        throw InvalidArgument("weather_class must be rain or fog");
}

double visibility_from_beta(double beta, double contrast_threshold)
{
    if (!(beta > 0.0))
        throw InvalidArgument("beta must be positive");
    if (!(contrast_threshold > 0.0 && contrast_threshold < 1.0))
        throw InvalidArgument("contrast threshold must be in (0, 1)");
    return -std::log(contrast_threshold) / beta;
}

double beta_from_visibility(double visibility, double contrast_threshold)
{
    if (!(visibility > 0.0))
        throw InvalidArgument("visibility must be positive");
    if (!(contrast_threshold > 0.0 && contrast_threshold < 1.0))
        throw InvalidArgument("contrast threshold must be in (0, 1)");
    return -std::log(contrast_threshold) / visibility;
}

double max_sensing_range(double intensity, const WeatherParams& params)
{
    const double signal = intensity + params.laser_gain;
    if (signal <= params.noise_floor)
        return 0.0;
    return -std::log(params.noise_floor / signal) / (2.0 * params.beta);
}

double loss_probability(double max_range, double beta) { return 1.0 - std::exp(-beta * max_range); }

namespace
{

// Largest float in (0, limit].
float float_at_most(double value, double limit)
{
    float f = static_cast<float>(value);
    while (static_cast<double>(f) > limit)
        f = std::nextafter(f, 0.0f);
    if (!(f > 0.0f))
        f = std::numeric_limits<float>::denorm_min();
    return f;
}

} // namespace

AugmentResult augment_weather(const RangeImage& image, const WeatherParams& params)
{
    params.validate();
    AugmentResult out{image, LabelImage(image.rows(), image.cols(), Label::NoReturn), {}};
    out.stats.expected_clamp_probability = params.clutter_intensity.clamp_probability();

    const std::uint64_t cols = static_cast<std::uint64_t>(image.cols());
    for (int r = 0; r < image.rows(); ++r)
    {
        for (int c = 0; c < image.cols(); ++c)
        {
            const double d = image.distance(r, c);
            if (!(d > 0.0))
                continue;
            ++out.stats.returns_in;
            const double intensity = image.intensity(r, c);
            const double d_max = max_sensing_range(intensity, params);

            if (d_max >= d)
            {
                out.image.intensity(r, c) = image.intensity(r, c) * static_cast<float>(std::exp(-params.beta * d));
                out.labels.set(r, c, Label::Valid);
                ++out.stats.attenuated;
                continue;
            }

            CounterRng rng(params.seed, static_cast<std::uint64_t>(r) * cols + static_cast<std::uint64_t>(c));
            const double u_lost = rng.uniform();
            const double u_scatter = rng.uniform();
            if (u_lost < loss_probability(d_max, params.beta))
            {
                out.image.distance(r, c) = 0.0f;
                out.image.intensity(r, c) = 0.0f;
                ++out.stats.lost;
            }
            else if (u_scatter < params.scatter_rate)
            {
                out.image.distance(r, c) = float_at_most(d_max * rng.uniform_open_zero(), d_max);
                const double sample =
                    std::exp(params.clutter_intensity.mu + params.clutter_intensity.sigma * rng.normal());
                if (sample > 1.0)
                    ++out.stats.clamped_intensities;
                out.image.intensity(r, c) = static_cast<float>(std::min(sample, 1.0));
                out.labels.set(r, c, params.weather_class);
                ++out.stats.scattered;
            }
            else
            {
                out.labels.set(r, c, Label::Valid);
                ++out.stats.passed;
            }
        }
    }
    return out;
}

AugmentResult augment_rain(const RangeImage& image, const WeatherParams& params)
{
    if (params.weather_class != Label::Rain)
        throw InvalidArgument("augment_rain needs weather_class rain");
    return augment_weather(image, params);
}

AugmentResult augment_fog(const RangeImage& image, const WeatherParams& params)
{
    if (params.weather_class != Label::Fog)
        throw InvalidArgument("augment_fog needs weather_class fog");
    return augment_weather(image, params);
}

LognormalParams fit_clutter_intensity(std::span<const double> samples)
{
    if (samples.size() < 2)
        throw InvalidArgument("lognormal fit needs at least 2 samples");
    std::vector<double> logs;
    logs.reserve(samples.size());
    for (std::size_t k = 0; k < samples.size(); ++k)
    {
        if (!(samples[k] > 0.0 && samples[k] <= 1.0))
            throw InvalidArgument("sample " + std::to_string(k) + " outside (0, 1]");
        logs.push_back(std::log(samples[k]));
    }
    const double n = static_cast<double>(logs.size());
    const double mu = std::accumulate(logs.begin(), logs.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : logs)
        ss += (v - mu) * (v - mu);
    const double sigma = std::sqrt(ss / (n - 1.0));
    if (!(sigma > 0.0))
        throw InvalidArgument("degenerate lognormal fit: all samples identical (sigma = 0)");
    return {mu, sigma};
}

double fog_scatter_rate(double visibility)
{
    if (!(visibility > 0.0))
        throw InvalidArgument("visibility must be positive");
    // (visibility m, scatter rate), fit on synthetic chamber sweeps.
    static constexpr std::array<std::pair<double, double>, 9> table{{{10.0, 0.45},
                                                                     {20.0, 0.35},
                                                                     {30.0, 0.28},
                                                                     {50.0, 0.20},
                                                                     {70.0, 0.15},
                                                                     {100.0, 0.12},
                                                                     {300.0, 0.06},
                                                                     {1000.0, 0.03},
                                                                     {3000.0, 0.015}}};
    if (visibility <= table.front().first)
        return table.front().second;
    if (visibility >= table.back().first)
        return table.back().second;
    for (std::size_t k = 1; k < table.size(); ++k)
    {
        if (visibility <= table[k].first)
        {
            const double t = std::log(visibility / table[k - 1].first) / std::log(table[k].first / table[k - 1].first);
            return table[k - 1].second + t * (table[k].second - table[k - 1].second);
        }
    }
    return table.back().second;
}

WeatherParams rain_params(double scatter_rate)
{
    WeatherParams p;
    p.beta = 0.01;
    p.scatter_rate = scatter_rate;
    p.clutter_intensity = {-1.6, 0.4};
    p.weather_class = Label::Rain;
    return p;
}

WeatherParams fog_params(double visibility)
{
    WeatherParams p;
    p.beta = beta_from_visibility(visibility, p.contrast_threshold);
    p.scatter_rate = fog_scatter_rate(visibility);
    p.clutter_intensity = {-3.0, 0.5};
    p.weather_class = Label::Fog;
    return p;
}

WeatherParams weather_preset(const std::string& name)
{
    if (name == "rain")
        return rain_params(0.075);
    if (name == "rain15")
        return rain_params(0.1061);
    if (name == "rain33")
        return rain_params(0.0073);
    if (name == "rain55")
        return rain_params(0.0470);
    if (name.rfind("fog:V=", 0) == 0)
    {
        const std::string value = name.substr(6);
        double visibility = 0.0;
        try
        {
            std::size_t used = 0;
            visibility = std::stod(value, &used);
            if (used != value.size())
                throw std::invalid_argument("trailing");
        }
        catch (const std::exception&)
        {
            throw InvalidArgument("bad fog visibility in preset '" + name + "'");
        }
        return fog_params(visibility);
    }
    throw InvalidArgument("unknown weather preset '" + name + "'");
}

WeatherParams weather_params_from_json(const std::string& text)
{
    nlohmann::json doc;
    try
    {
        doc = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::parse_error& e)
    {
        throw FormatError(std::string("weather params: ") + e.what(), e.byte);
    }
    WeatherParams p = doc.contains("preset") ? weather_preset(doc["preset"].get<std::string>()) : WeatherParams{};
    try
    {
        if (doc.contains("weather_class"))
        {
            p.weather_class = parse_label(doc["weather_class"].get<std::string>());
            if (!doc.contains("preset") && p.weather_class == Label::Fog)
                p.clutter_intensity = {-3.0, 0.5};
        }
        if (doc.contains("visibility"))
        {
            const double v = doc["visibility"].get<double>();
            p.beta = beta_from_visibility(v, doc.value("contrast_threshold", p.contrast_threshold));
            if (p.weather_class == Label::Fog)
                p.scatter_rate = fog_scatter_rate(v);
        }
        p.beta = doc.value("beta", p.beta);
        p.scatter_rate = doc.value("scatter_rate", p.scatter_rate);
        p.noise_floor = doc.value("noise_floor", p.noise_floor);
        p.laser_gain = doc.value("laser_gain", p.laser_gain);
        p.contrast_threshold = doc.value("contrast_threshold", p.contrast_threshold);
        if (doc.contains("clutter_intensity"))
        {
            p.clutter_intensity.mu = doc["clutter_intensity"].value("mu", p.clutter_intensity.mu);
            p.clutter_intensity.sigma = doc["clutter_intensity"].value("sigma", p.clutter_intensity.sigma);
        }
        p.seed = doc.value("seed", p.seed);
    }
    catch (const nlohmann::json::type_error& e)
    {
        throw FormatError(std::string("weather params: ") + e.what(), 0);
    }
    p.validate();
    return p;
}

std::string weather_params_to_json(const WeatherParams& p)
{
    nlohmann::json doc{{"beta", p.beta},
                       {"scatter_rate", p.scatter_rate},
                       {"noise_floor", p.noise_floor},
                       {"laser_gain", p.laser_gain},
                       {"contrast_threshold", p.contrast_threshold},
                       {"clutter_intensity", {{"mu", p.clutter_intensity.mu}, {"sigma", p.clutter_intensity.sigma}}},
                       {"weather_class", label_name(p.weather_class)},
                       {"seed", p.seed}};
    return doc.dump(2);
}

} // namespace lidar_weather
