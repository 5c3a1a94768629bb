#pragma once

#include <lidar_weather/core.hpp>
#include <lidar_weather/synth.hpp>

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace lidar_weather
{

inline constexpr std::array<const char*, 3> kSplitNames{"train", "val", "test"};

struct DatasetManifest
{
    SensorModel sensor = SensorModel::vlp32c();
    std::vector<SceneSpec> scenes;
    int reference_frames = 10;         // clear frames per scene
    std::vector<std::string> weather;  // preset names, see weather_preset()
    int repetitions = 1;
    std::map<std::string, int> preset_repetitions; // per-preset override of `repetitions`
    int frames_per_sequence = 1;
    std::array<double, 3> split_fractions{0.60, 0.15, 0.25};
    // Optional explicit split -> scene names. Scenes not listed are distributed by fraction.
    std::map<std::string, std::vector<std::string>> assignment;

    int repetitions_for(const std::string& preset) const;

    static DatasetManifest from_json(const std::string& text);
    std::string to_json() const;
};

// Scene name -> split name. Scene-disjoint by construction; throws if an explicit
// assignment lists a scene under two splits or names an unknown scene.
std::map<std::string, std::string> assign_splits(const DatasetManifest& manifest);

struct GeneratedFrame
{
    std::string scene;
    std::string split;
    std::string condition; // "clear" or the preset name
    int repetition = 0;
    int index = 0;
    RangeImage image;
    LabelImage labels;
};

// Every reference and weather frame, in a fixed order, fully determined by (manifest, seed).
void for_each_generated_frame(const DatasetManifest& manifest, std::uint64_t seed,
                              const std::function<void(GeneratedFrame&&)>& visit);

struct DatasetSample
{
    std::string path; // relative to the dataset root
    std::string scene;
    std::string split;
    std::string condition;
};

struct DatasetIndex
{
    std::string root;
    std::map<std::string, std::string> scene_split;
    std::vector<DatasetSample> samples;
    std::map<std::string, std::vector<std::string>> references; // scene -> reference frame paths

    std::vector<DatasetSample> split(const std::string& name) const;
    static DatasetIndex load(const std::string& root);
};

// Writes reference/<scene>/*.lri, frames/<split>/<scene>/*.lri (with labels),
// manifest.json (the input manifest) and dataset.json (the index).
DatasetIndex generate_dataset(const DatasetManifest& manifest, std::uint64_t seed, const std::string& out_dir);

// Readable slug of a preset for file names ("fog:V=30" -> "fogV30").
std::string condition_slug(const std::string& condition);

} // namespace lidar_weather
