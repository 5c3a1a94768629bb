#pragma once

#include <lidar_weather/core.hpp>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lidar_weather
{

// One frame on disk:
//
//   LRI1 <rows> <cols> <has_labels> <frame_id> <timestamp>\n
//   rows*cols float32 LE distances (row-major)
//   rows*cols float32 LE intensities
//   rows*cols label bytes (only when has_labels = 1)
//
// frame_id must be a non-empty token without whitespace ("-" is written for an empty id).
struct Frame
{
    RangeImage image;
    std::optional<LabelImage> labels;
};

std::vector<std::uint8_t> encode_frame(const RangeImage& image, const std::optional<LabelImage>& labels = std::nullopt);

// Decodes one frame starting at bytes[0]. `consumed`, if given, receives the frame's size in bytes
// so that concatenated frames can be walked.
Frame decode_frame(std::span<const std::uint8_t> bytes, std::size_t* consumed = nullptr);

void write_frame_file(const std::string& path, const RangeImage& image,
                      const std::optional<LabelImage>& labels = std::nullopt);
Frame read_frame_file(const std::string& path);

std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, std::span<const std::uint8_t> bytes);

} // namespace lidar_weather
