#include <lidar_weather/frame_codec.hpp>
#include <lidar_weather/nnet/checkpoint.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cstring>

namespace lidar_weather::nnet
{

namespace
{

constexpr const char* kFormat = "lidar-weather-checkpoint";

nlohmann::json spec_json(const WeatherNetSpec& s)
{
    return {{"in_channels", s.in_channels},   {"block_widths", s.block_widths}, {"dropout_after", s.dropout_after},
            {"dropout_rate", s.dropout_rate}, {"classes", s.classes},           {"distance_scale", s.distance_scale}};
}

WeatherNetSpec spec_from(const nlohmann::json& j)
{
    WeatherNetSpec s;
    s.in_channels = j.value("in_channels", s.in_channels);
    s.block_widths = j.value("block_widths", s.block_widths);
    s.dropout_after = j.value("dropout_after", s.dropout_after);
    s.dropout_rate = j.value("dropout_rate", s.dropout_rate);
    s.classes = j.value("classes", s.classes);
    s.distance_scale = j.value("distance_scale", s.distance_scale);
    s.validate();
    return s;
}

} // namespace

std::string spec_to_json(const WeatherNetSpec& spec) { return spec_json(spec).dump(); }

WeatherNetSpec spec_from_json(const std::string& text)
{
    try
    {
        return spec_from(nlohmann::json::parse(text));
    }
    catch (const nlohmann::json::parse_error& e)
    {
        throw FormatError(std::string("network spec: ") + e.what(), e.byte);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw FormatError(std::string("network spec: ") + e.what(), 0);
    }
}

WeatherNet Checkpoint::network() const
{
    WeatherNet net(spec);
    if (params.size() != net.param_count())
        throw InvalidArgument("checkpoint holds " + std::to_string(params.size()) + " parameters, network needs " +
                              std::to_string(net.param_count()));
    net.params() = params;
    return net;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c)
{
    const nlohmann::json header = {{"format", kFormat},
                                   {"version", 1},
                                   {"spec", spec_json(c.spec)},
                                   {"epoch", c.epoch},
                                   {"seed", c.seed},
                                   {"param_count", c.params.size()},
                                   {"encoding", "float64-le"}};
    const std::string line = header.dump() + "\n";
    std::vector<std::uint8_t> out(line.begin(), line.end());
    out.reserve(out.size() + static_cast<std::size_t>(c.params.size()) * 8);
    for (Eigen::Index i = 0; i < c.params.size(); ++i)
    {
        std::uint64_t bits = std::bit_cast<std::uint64_t>(c.params(i));
        for (int b = 0; b < 8; ++b)
            out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
    return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes)
{
    const auto eol = std::find(bytes.begin(), bytes.end(), std::uint8_t{'\n'});
    if (eol == bytes.end())
        throw FormatError("checkpoint header has no terminating newline", bytes.size());
    const auto header_size = static_cast<std::size_t>(eol - bytes.begin()) + 1;
    Checkpoint c;
    long count = 0;
    try
    {
        const auto header = nlohmann::json::parse(bytes.begin(), eol);
        if (header.value("format", std::string()) != kFormat)
            throw FormatError("not a checkpoint (format tag missing)", 0);
        if (header.value("version", 0) != 1)
            throw FormatError("unsupported checkpoint version", 0);
        c.spec = spec_from(header.at("spec"));
        c.epoch = header.value("epoch", 0);
        c.seed = header.value("seed", std::uint64_t{0});
        count = header.at("param_count").get<long>();
    }
    catch (const nlohmann::json::parse_error& e)
    {
        throw FormatError(std::string("checkpoint header: ") + e.what(), e.byte);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw FormatError(std::string("checkpoint header: ") + e.what(), 0);
    }
    catch (const InvalidArgument& e)
    {
        throw FormatError(std::string("checkpoint header: ") + e.what(), 0);
    }
    if (count != c.spec.param_count())
        throw FormatError("checkpoint param_count " + std::to_string(count) + " does not match its spec (" +
                              std::to_string(c.spec.param_count()) + ")",
                          0);
    const std::size_t expected = static_cast<std::size_t>(count) * 8;
    if (bytes.size() - header_size != expected)
        throw FormatError("checkpoint body: expected " + std::to_string(expected) + " bytes, got " +
                              std::to_string(bytes.size() - header_size),
                          header_size);
    c.params.resize(count);
    const std::uint8_t* p = bytes.data() + header_size;
    for (long i = 0; i < count; ++i, p += 8)
    {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b)
            bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
        c.params(i) = std::bit_cast<double>(bits);
        if (!std::isfinite(c.params(i)))
            throw FormatError("checkpoint parameter " + std::to_string(i) + " is not finite",
                              header_size + static_cast<std::size_t>(i) * 8);
    }
    return c;
}

void save_checkpoint(const std::string& path, const WeatherNet& net, int epoch, std::uint64_t seed)
{
    write_file_bytes(path, encode_checkpoint({net.spec(), epoch, seed, net.params()}));
}

Checkpoint load_checkpoint(const std::string& path)
{
    const auto bytes = read_file_bytes(path);
    try
    {
        return decode_checkpoint(bytes);
    }
    catch (const FormatError& e)
    {
        throw FormatError(path + ": " + e.detail(), e.offset());
    }
}

} // namespace lidar_weather::nnet
