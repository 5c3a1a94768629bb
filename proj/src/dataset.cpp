#include <lidar_weather/augment.hpp>
#include <lidar_weather/dataset.hpp>
#include <lidar_weather/frame_codec.hpp>
#include <lidar_weather/rng.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

namespace fs = std::filesystem;

namespace lidar_weather
{

DatasetManifest DatasetManifest::from_json(const std::string& text)
{
    nlohmann::json doc;
    try
    {
        doc = nlohmann::json::parse(text);
    }
    catch (const nlohmann::json::parse_error& e)
    {
        throw FormatError(std::string("dataset manifest: ") + e.what(), e.byte);
    }
    DatasetManifest m;
    try
    {
        if (doc.contains("sensor"))
        {
            const auto& s = doc["sensor"];
            if (s.contains("vertical_angles"))
            {
                m.sensor.vertical_angles = s["vertical_angles"].get<std::vector<double>>();
                m.sensor.rings = static_cast<int>(m.sensor.vertical_angles.size());
                m.sensor.cols = s.value("cols", 1800);
                m.sensor.max_range = s.value("max_range", 200.0);
            }
            else
            {
                m.sensor = SensorModel::uniform(s.value("rings", 32), s.value("cols", 1800), s.value("lowest_deg", -25.0),
                                                s.value("highest_deg", 15.0), s.value("max_range", 200.0));
            }
            m.sensor.validate();
        }
        m.scenes.clear();
        for (const auto& scene : doc.at("scenes"))
            m.scenes.push_back(scene.is_string() ? builtin_scene(scene.get<std::string>()) : scene_from_json(scene.dump()));
        m.reference_frames = doc.value("reference_frames", m.reference_frames);
        m.weather = doc.value("weather", m.weather);
        m.repetitions = doc.value("repetitions", m.repetitions);
        m.preset_repetitions = doc.value("preset_repetitions", m.preset_repetitions);
        m.frames_per_sequence = doc.value("frames_per_sequence", m.frames_per_sequence);
        if (doc.contains("split"))
            for (std::size_t k = 0; k < 3; ++k)
                m.split_fractions[k] = doc["split"].value(kSplitNames[k], m.split_fractions[k]);
        if (doc.contains("assignment"))
            m.assignment = doc["assignment"].get<std::map<std::string, std::vector<std::string>>>();
        if (doc.contains("range_noise_sigma"))
            for (auto& scene : m.scenes)
                scene.range_noise_sigma = doc["range_noise_sigma"].get<double>();
    }
    catch (const nlohmann::json::exception& e)
    {
        throw FormatError(std::string("dataset manifest: ") + e.what(), 0);
    }
    if (m.scenes.empty())
        throw InvalidArgument("dataset manifest lists no scenes");
    if (m.reference_frames < 1 || m.repetitions < 1 || m.frames_per_sequence < 1)
        throw InvalidArgument("frame counts must be >= 1");
    for (const auto& w : m.weather)
        weather_preset(w); // validates the name
    for (const auto& [name, count] : m.preset_repetitions)
    {
        if (std::find(m.weather.begin(), m.weather.end(), name) == m.weather.end())
            throw InvalidArgument("preset_repetitions names '" + name + "', which is not in the weather list");
        if (count < 1)
            throw InvalidArgument("preset_repetitions for '" + name + "' must be >= 1");
    }
    return m;
}

std::string DatasetManifest::to_json() const
{
    nlohmann::json doc;
    doc["sensor"] = {{"vertical_angles", sensor.vertical_angles}, {"cols", sensor.cols}, {"max_range", sensor.max_range}};
    doc["scenes"] = nlohmann::json::array();
    for (const auto& s : scenes)
        doc["scenes"].push_back(nlohmann::json::parse(scene_to_json(s)));
    doc["reference_frames"] = reference_frames;
    doc["weather"] = weather;
    doc["repetitions"] = repetitions;
    if (!preset_repetitions.empty())
        doc["preset_repetitions"] = preset_repetitions;
    doc["frames_per_sequence"] = frames_per_sequence;
    doc["split"] = {{"train", split_fractions[0]}, {"val", split_fractions[1]}, {"test", split_fractions[2]}};
    if (!assignment.empty())
        doc["assignment"] = assignment;
    return doc.dump(2);
}

int DatasetManifest::repetitions_for(const std::string& preset) const
{
    const auto it = preset_repetitions.find(preset);
    return it == preset_repetitions.end() ? repetitions : it->second;
}

std::map<std::string, std::string> assign_splits(const DatasetManifest& m)
{
    std::set<std::string> names;
    for (const auto& s : m.scenes)
        if (!names.insert(s.name).second)
            throw InvalidArgument("duplicate scene name '" + s.name + "'");

    std::map<std::string, std::string> result;
    for (const auto& [split, scenes] : m.assignment)
    {
        if (std::find(kSplitNames.begin(), kSplitNames.end(), split) == kSplitNames.end())
            throw InvalidArgument("unknown split '" + split + "'");
        for (const auto& scene : scenes)
        {
            if (!names.contains(scene))
                throw InvalidArgument("assignment names unknown scene '" + scene + "'");
            const auto [it, inserted] = result.emplace(scene, split);
            if (!inserted)
                throw InvalidArgument("scene '" + scene + "' assigned to both '" + it->second + "' and '" + split + "'");
        }
    }

    std::vector<std::string> rest;
    for (const auto& s : m.scenes)
        if (!result.contains(s.name))
            rest.push_back(s.name);
    if (rest.empty())
        return result;

    const double total = m.split_fractions[0] + m.split_fractions[1] + m.split_fractions[2];
    if (!(total > 0.0) || *std::min_element(m.split_fractions.begin(), m.split_fractions.end()) < 0.0)
        throw InvalidArgument("split fractions must be non-negative with a positive sum");

    // Largest remainder, but every split with a positive share gets a scene when there are enough.
    const auto n = static_cast<int>(rest.size());
    std::array<int, 3> count{};
    std::array<double, 3> remainder{};
    int assigned = 0;
    for (int k = 0; k < 3; ++k)
    {
        const double exact = n * m.split_fractions[static_cast<std::size_t>(k)] / total;
        count[static_cast<std::size_t>(k)] = static_cast<int>(std::floor(exact));
        remainder[static_cast<std::size_t>(k)] = exact - std::floor(exact);
        assigned += count[static_cast<std::size_t>(k)];
    }
    while (assigned < n)
    {
        const auto k = static_cast<std::size_t>(std::max_element(remainder.begin(), remainder.end()) - remainder.begin());
        ++count[k];
        remainder[k] = -1.0;
        ++assigned;
    }
    int positive = 0;
    for (double f : m.split_fractions)
        positive += f > 0.0;
    if (n >= positive)
    {
        for (std::size_t k = 0; k < 3; ++k)
        {
            if (m.split_fractions[k] > 0.0 && count[k] == 0)
            {
                const auto donor =
                    static_cast<std::size_t>(std::max_element(count.begin(), count.end()) - count.begin());
                --count[donor];
                ++count[k];
            }
        }
    }
    std::size_t next = 0;
    for (std::size_t k = 0; k < 3; ++k)
        for (int j = 0; j < count[k]; ++j)
            result.emplace(rest[next++], kSplitNames[k]);
    return result;
}

std::string condition_slug(const std::string& condition)
{
    std::string out;
    for (char ch : condition)
        if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '.')
            out.push_back(ch == '.' ? 'p' : ch);
    return out;
}

void for_each_generated_frame(const DatasetManifest& m, std::uint64_t seed,
                              const std::function<void(GeneratedFrame&&)>& visit)
{
    const auto splits = assign_splits(m);
    for (std::size_t s = 0; s < m.scenes.size(); ++s)
    {
        const SceneSpec& scene = m.scenes[s];
        const std::string& split = splits.at(scene.name);
        const std::uint64_t scene_seed = hash_combine(seed, s);
        for (int k = 0; k < m.reference_frames; ++k)
        {
            GeneratedFrame f{scene.name, split, "clear", 0, k, {}, {}};
            f.image = raycast_scene(scene, m.sensor, hash_combine(scene_seed, static_cast<std::uint64_t>(k)));
            f.image.frame_id = scene.name + "_clear_f" + std::to_string(k);
            f.image.timestamp = 0.1 * k;
            f.labels = valid_labels(f.image);
            visit(std::move(f));
        }
        for (std::size_t w = 0; w < m.weather.size(); ++w)
        {
            WeatherParams params = weather_preset(m.weather[w]);
            const int reps = m.repetitions_for(m.weather[w]);
            for (int rep = 0; rep < reps; ++rep)
            {
                for (int k = 0; k < m.frames_per_sequence; ++k)
                {
                    const std::uint64_t frame_seed = hash_combine(
                        hash_combine(hash_combine(scene_seed, 1000003ULL + w), static_cast<std::uint64_t>(rep)),
                        static_cast<std::uint64_t>(k));
                    GeneratedFrame f{scene.name, split, m.weather[w], rep, k, {}, {}};
                    const RangeImage clear = raycast_scene(scene, m.sensor, frame_seed);
                    params.seed = hash_combine(frame_seed, 0xa5a5ULL);
                    AugmentResult aug = augment_weather(clear, params);
                    f.image = std::move(aug.image);
                    f.labels = std::move(aug.labels);
                    f.image.frame_id = scene.name + "_" + condition_slug(m.weather[w]) + "_r" + std::to_string(rep) +
                                       "_f" + std::to_string(k);
                    f.image.timestamp = 0.1 * k;
                    visit(std::move(f));
                }
            }
        }
    }
}

DatasetIndex generate_dataset(const DatasetManifest& m, std::uint64_t seed, const std::string& out_dir)
{
    DatasetIndex index;
    index.root = out_dir;
    index.scene_split = assign_splits(m);
    fs::create_directories(out_dir);

    for_each_generated_frame(m, seed, [&](GeneratedFrame&& f) {
        if (f.condition == "clear")
        {
            const std::string rel = "reference/" + f.scene + "/" + f.image.frame_id + ".lri";
            fs::create_directories(fs::path(out_dir) / "reference" / f.scene);
            write_frame_file((fs::path(out_dir) / rel).string(), f.image, f.labels);
            index.references[f.scene].push_back(rel);
        }
        const std::string rel = "frames/" + f.split + "/" + f.scene + "/" + f.image.frame_id + ".lri";
        fs::create_directories(fs::path(out_dir) / "frames" / f.split / f.scene);
        write_frame_file((fs::path(out_dir) / rel).string(), f.image, f.labels);
        index.samples.push_back({rel, f.scene, f.split, f.condition});
    });

    {
        std::ofstream out(fs::path(out_dir) / "manifest.json");
        out << m.to_json() << "\n";
    }
    nlohmann::json doc;
    doc["seed"] = seed;
    doc["scene_split"] = index.scene_split;
    doc["references"] = index.references;
    doc["samples"] = nlohmann::json::array();
    for (const auto& s : index.samples)
        doc["samples"].push_back({{"path", s.path}, {"scene", s.scene}, {"split", s.split}, {"condition", s.condition}});
    std::ofstream out(fs::path(out_dir) / "dataset.json");
    out << doc.dump(2) << "\n";
    if (!out)
        throw InvalidArgument("cannot write dataset index in '" + out_dir + "'");
    return index;
}

std::vector<DatasetSample> DatasetIndex::split(const std::string& name) const
{
    std::vector<DatasetSample> out;
    for (const auto& s : samples)
        if (s.split == name)
            out.push_back(s);
    return out;
}

DatasetIndex DatasetIndex::load(const std::string& root)
{
    std::ifstream in(fs::path(root) / "dataset.json");
    if (!in)
        throw InvalidArgument("no dataset.json in '" + root + "'");
    nlohmann::json doc;
    try
    {
        in >> doc;
        DatasetIndex index;
        index.root = root;
        index.scene_split = doc.at("scene_split").get<std::map<std::string, std::string>>();
        index.references = doc.value("references", std::map<std::string, std::vector<std::string>>{});
        for (const auto& s : doc.at("samples"))
            index.samples.push_back({s.at("path").get<std::string>(), s.at("scene").get<std::string>(),
                                     s.at("split").get<std::string>(), s.at("condition").get<std::string>()});
        return index;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw FormatError(root + "/dataset.json: " + e.what(), 0);
    }
}

} // namespace lidar_weather
