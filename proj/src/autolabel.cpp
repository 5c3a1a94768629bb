#include <lidar_weather/autolabel.hpp>
#include <lidar_weather/frame_codec.hpp>

#include <nlohmann/json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

namespace lidar_weather
{

void AutolabelParams::validate() const
{
    if (!(delta_r > 0.0))
        throw InvalidArgument("delta_r must be positive");
    if (weather_class != Label::Rain && weather_class != Label::Fog)
        throw InvalidArgument("weather_class must be rain or fog");
}

ReferenceStack accumulate_reference(const std::vector<RangeImage>& frames)
{
    if (frames.empty())
        throw InvalidArgument("reference needs at least one frame");
    ReferenceStack stack;
    stack.layers.reserve(frames.size());
    for (std::size_t k = 0; k < frames.size(); ++k)
    {
        const RangeImage& f = frames[k];
        if (f.rows() != frames.front().rows() || f.cols() != frames.front().cols())
            throw InvalidArgument("reference frame " + std::to_string(k) + " is " + std::to_string(f.rows()) + "x" +
                                  std::to_string(f.cols()) + ", expected " + std::to_string(frames.front().rows()) +
                                  "x" + std::to_string(frames.front().cols()));
        stack.layers.push_back(f.distance);
        stack.frame_ids.push_back(f.frame_id);
    }
    return stack;
}

LabelImage label_clutter(const RangeImage& image, const ReferenceStack& reference, const AutolabelParams& params)
{
    params.validate();
    if (reference.layers.empty())
        throw InvalidArgument("empty reference stack");
    if (image.rows() != reference.rows() || image.cols() != reference.cols())
        throw InvalidArgument("image is " + std::to_string(image.rows()) + "x" + std::to_string(image.cols()) +
                              " but reference is " + std::to_string(reference.rows()) + "x" +
                              std::to_string(reference.cols()));

    LabelImage labels(image.rows(), image.cols(), Label::NoReturn);
    for (int r = 0; r < image.rows(); ++r)
    {
        for (int c = 0; c < image.cols(); ++c)
        {
            const double d = image.distance(r, c);
            if (!(d > 0.0))
                continue;
            double best = std::numeric_limits<double>::infinity();
            for (const DistanceMatrix& layer : reference.layers)
            {
                const double ref = layer(r, c);
                if (ref > 0.0)
                    best = std::min(best, std::abs(ref - d));
            }
            labels.set(r, c, best <= params.delta_r ? Label::Valid : params.weather_class);
        }
    }
    return labels;
}

FalseRateReport reference_self_check(const std::vector<RangeImage>& frames, const AutolabelParams& params,
                                     int crop_width)
{
    if (frames.size() < 2)
        throw InvalidArgument("self-check needs at least 2 frames");
    const std::size_t half = frames.size() / 2;
    const int cols = frames.front().cols();
    if (crop_width <= 0 || crop_width > cols)
        throw InvalidArgument("crop width must be in [1, " + std::to_string(cols) + "]");
    const int start = forward_crop_start(cols, crop_width);

    std::vector<RangeImage> first, second;
    for (std::size_t k = 0; k < half; ++k)
    {
        first.push_back(crop_fov(frames[k], start, crop_width));
        second.push_back(crop_fov(frames[half + k], start, crop_width));
    }

    FalseRateReport report;
    report.pixels_per_frame = static_cast<std::size_t>(frames.front().rows()) * static_cast<std::size_t>(crop_width);
    const auto score = [&](const std::vector<RangeImage>& probe, const std::vector<RangeImage>& ref) {
        const ReferenceStack stack = accumulate_reference(ref);
        for (const RangeImage& frame : probe)
            report.per_frame_false_counts.push_back(label_clutter(frame, stack, params).count(params.weather_class));
    };
    score(second, first);
    score(first, second);

    double sum = 0.0;
    for (std::size_t n : report.per_frame_false_counts)
        sum += static_cast<double>(n) / static_cast<double>(report.pixels_per_frame);
    const double count = static_cast<double>(report.per_frame_false_counts.size());
    report.mean_per_pixel_false_rate = sum / count;
    double ss = 0.0;
    for (std::size_t n : report.per_frame_false_counts)
    {
        const double rate = static_cast<double>(n) / static_cast<double>(report.pixels_per_frame);
        ss += (rate - report.mean_per_pixel_false_rate) * (rate - report.mean_per_pixel_false_rate);
    }
    report.std_per_pixel_false_rate = std::sqrt(ss / count);
    return report;
}

void save_reference_stack(const std::string& base_path, const std::vector<RangeImage>& frames)
{
    accumulate_reference(frames); // shape checks

    std::vector<std::uint8_t> blob;
    nlohmann::json manifest;
    manifest["format"] = "LRI1-stack";
    manifest["data"] = std::filesystem::path(base_path + ".lri").filename().string();
    manifest["frames"] = nlohmann::json::array();
    for (const RangeImage& frame : frames)
    {
        const auto bytes = encode_frame(frame);
        manifest["frames"].push_back({{"frame_id", frame.frame_id}, {"offset", blob.size()}, {"bytes", bytes.size()}});
        blob.insert(blob.end(), bytes.begin(), bytes.end());
    }
    write_file_bytes(base_path + ".lri", blob);
    std::ofstream out(base_path + ".json");
    out << manifest.dump(2) << "\n";
    if (!out)
        throw InvalidArgument("cannot write '" + base_path + ".json'");
}

ReferenceStack load_reference_stack(const std::string& base_path)
{
    std::ifstream in(base_path + ".json");
    if (!in)
        throw InvalidArgument("cannot open '" + base_path + ".json'");
    nlohmann::json manifest;
    try
    {
        in >> manifest;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw FormatError(base_path + ".json: " + e.what(), 0);
    }
    const auto blob = read_file_bytes(base_path + ".lri");
    std::vector<RangeImage> frames;
    for (const auto& entry : manifest.at("frames"))
    {
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t size = entry.at("bytes").get<std::size_t>();
        if (offset > blob.size() || blob.size() - offset < size)
            throw FormatError("stack member exceeds data file: expected " + std::to_string(offset + size) +
                                  " bytes, got " + std::to_string(blob.size()),
                              blob.size());
        std::size_t consumed = 0;
        Frame frame = decode_frame(std::span<const std::uint8_t>(blob).subspan(offset, size), &consumed);
        frames.push_back(std::move(frame.image));
    }
    return accumulate_reference(frames);
}

} // namespace lidar_weather
