#include <lidar_weather/frame_codec.hpp>

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace lidar_weather
{
namespace
{

constexpr std::string_view kMagic = "LRI1";
constexpr std::size_t kMaxHeader = 4096;

void put_f32(std::vector<std::uint8_t>& out, float value)
{
    const auto bits = std::bit_cast<std::uint32_t>(value);
    for (int shift = 0; shift < 32; shift += 8)
        out.push_back(static_cast<std::uint8_t>(bits >> shift));
}

float get_f32(const std::uint8_t* p)
{
    const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    return std::bit_cast<float>(bits);
}

std::string format_timestamp(double t)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", t);
    return buf;
}

} // namespace

std::vector<std::uint8_t> encode_frame(const RangeImage& image, const std::optional<LabelImage>& labels)
{
    if (image.distance.rows() != image.intensity.rows() || image.distance.cols() != image.intensity.cols())
        throw InvalidArgument("distance and intensity shapes differ");
    if (labels && (labels->rows() != image.rows() || labels->cols() != image.cols()))
        throw InvalidArgument("label shape does not match image shape");
    if (image.frame_id.find_first_of(" \t\r\n") != std::string::npos)
        throw InvalidArgument("frame_id must not contain whitespace");

    const std::string id = image.frame_id.empty() ? "-" : image.frame_id;
    const std::string header = std::string(kMagic) + " " + std::to_string(image.rows()) + " " +
                               std::to_string(image.cols()) + " " + (labels ? "1" : "0") + " " + id + " " +
                               format_timestamp(image.timestamp) + "\n";

    const std::size_t pixels = static_cast<std::size_t>(image.rows()) * static_cast<std::size_t>(image.cols());
    std::vector<std::uint8_t> out;
    out.reserve(header.size() + pixels * (labels ? 9 : 8));
    out.insert(out.end(), header.begin(), header.end());
    for (Eigen::Index r = 0; r < image.distance.rows(); ++r)
        for (Eigen::Index c = 0; c < image.distance.cols(); ++c)
            put_f32(out, image.distance(r, c));
    for (Eigen::Index r = 0; r < image.intensity.rows(); ++r)
        for (Eigen::Index c = 0; c < image.intensity.cols(); ++c)
            put_f32(out, image.intensity(r, c));
    if (labels)
        out.insert(out.end(), labels->codes.data(), labels->codes.data() + pixels);
    return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t* consumed)
{
    std::size_t eol = 0;
    while (eol < bytes.size() && eol < kMaxHeader && bytes[eol] != '\n')
        ++eol;
    if (eol >= bytes.size() || bytes[eol] != '\n')
        throw FormatError("frame header is not newline-terminated", eol);

    const std::string header(reinterpret_cast<const char*>(bytes.data()), eol);
    std::istringstream fields(header);
    std::string magic, id, stamp;
    long long rows = -1, cols = -1;
    int has_labels = -1;
    fields >> magic;
    if (magic != kMagic)
        throw FormatError("bad magic '" + magic + "', expected LRI1", 0);
    if (!(fields >> rows >> cols >> has_labels >> id >> stamp))
        throw FormatError("malformed frame header '" + header + "'", 0);
    std::string trailing;
    if (fields >> trailing)
        throw FormatError("unexpected trailing header field '" + trailing + "'", 0);
    if (rows <= 0 || cols <= 0 || rows > (1 << 20) || cols > (1 << 20))
        throw FormatError("invalid frame shape " + std::to_string(rows) + "x" + std::to_string(cols), 0);
    if (has_labels != 0 && has_labels != 1)
        throw FormatError("has_labels must be 0 or 1", 0);
    double timestamp = 0.0;
    try
    {
        std::size_t used = 0;
        timestamp = std::stod(stamp, &used);
        if (used != stamp.size())
            throw std::invalid_argument("trailing");
    }
    catch (const std::exception&)
    {
        throw FormatError("bad timestamp '" + stamp + "'", 0);
    }

    const std::size_t pixels = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    const std::size_t body = pixels * 8 + (has_labels ? pixels : 0);
    const std::size_t begin = eol + 1;
    if (bytes.size() - begin < body)
        throw FormatError("truncated frame body: expected " + std::to_string(body) + " bytes, got " +
                              std::to_string(bytes.size() - begin),
                          bytes.size());

    Frame frame;
    frame.image = RangeImage(static_cast<int>(rows), static_cast<int>(cols));
    frame.image.frame_id = id == "-" ? std::string() : id;
    frame.image.timestamp = timestamp;
    const std::uint8_t* p = bytes.data() + begin;
    for (long long r = 0; r < rows; ++r)
        for (long long c = 0; c < cols; ++c, p += 4)
            frame.image.distance(r, c) = get_f32(p);
    for (long long r = 0; r < rows; ++r)
        for (long long c = 0; c < cols; ++c, p += 4)
            frame.image.intensity(r, c) = get_f32(p);
    if (has_labels)
    {
        LabelImage labels(static_cast<int>(rows), static_cast<int>(cols));
        for (std::size_t k = 0; k < pixels; ++k, ++p)
        {
            if (!is_known_label_code(*p))
                throw FormatError("unknown label code " + std::to_string(*p), static_cast<std::size_t>(p - bytes.data()));
            labels.codes.data()[k] = *p;
        }
        frame.labels = std::move(labels);
    }
    if (consumed)
        *consumed = begin + body;
    return frame;
}

std::vector<std::uint8_t> read_file_bytes(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw InvalidArgument("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw InvalidArgument("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw InvalidArgument("write failed for '" + path + "'");
}

void write_frame_file(const std::string& path, const RangeImage& image, const std::optional<LabelImage>& labels)
{
    write_file_bytes(path, encode_frame(image, labels));
}

Frame read_frame_file(const std::string& path)
{
    const auto bytes = read_file_bytes(path);
    try
    {
        return decode_frame(bytes);
    }
    catch (const FormatError& e)
    {
        throw FormatError(path + ": " + e.detail(), e.offset());
    }
}

} // namespace lidar_weather
