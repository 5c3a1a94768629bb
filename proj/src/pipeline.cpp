#include <lidar_weather/augment.hpp>
#include <lidar_weather/autolabel.hpp>
#include <lidar_weather/dataset.hpp>
#include <lidar_weather/eval.hpp>
#include <lidar_weather/frame_codec.hpp>
#include <lidar_weather/nnet/checkpoint.hpp>
#include <lidar_weather/nnet/train.hpp>
#include <lidar_weather/pipeline.hpp>
#include <lidar_weather/rng.hpp>
#include <lidar_weather/synth.hpp>

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;

namespace lidar_weather::pipeline
{

namespace
{

json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidArgument("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    try
    {
        return json::parse(buf.str());
    }
    catch (const json::parse_error& e)
    {
        throw FormatError(path + ": " + e.what(), e.byte);
    }
}

std::string read_text_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw InvalidArgument("cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_text_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out)
        throw InvalidArgument("cannot write '" + path.string() + "'");
}

void require_path(const std::string& path, const char* what)
{
    if (path.empty())
        throw InvalidArgument(std::string(what) + " path is required");
    if (!fs::exists(path))
        throw InvalidArgument(std::string(what) + " '" + path + "' does not exist");
}

// Input file -> output file. A single input file maps to `output` itself (or into it
// when `output` is an existing directory); a directory maps relative paths under `output`.
std::vector<std::pair<std::string, std::string>> map_outputs(const std::string& input, const std::string& output)
{
    if (output.empty())
        throw InvalidArgument("output path is required");
    std::vector<std::pair<std::string, std::string>> out;
    if (fs::is_regular_file(input))
    {
        const fs::path target = fs::is_directory(output) ? fs::path(output) / fs::path(input).filename() : fs::path(output);
        out.emplace_back(input, target.string());
        return out;
    }
    for (const auto& f : collect_frames(input))
        out.emplace_back(f, (fs::path(output) / fs::relative(f, input)).string());
    return out;
}

void write_frame(const std::string& path, const RangeImage& image, const std::optional<LabelImage>& labels)
{
    const fs::path p(path);
    if (p.has_parent_path())
        fs::create_directories(p.parent_path());
    write_frame_file(path, image, labels);
}

Label parse_weather_class(const std::string& name)
{
    const Label l = parse_label(name);
    if (l != Label::Rain && l != Label::Fog)
        throw InvalidArgument("weather class must be rain or fog, got '" + name + "'");
    return l;
}

SensorModel default_sensor(int rows, int cols) { return SensorModel::uniform(rows, cols, -25.0, 15.0); }

SensorModel sensor_from_json(const json& s, int rows, int cols)
{
    SensorModel m;
    if (s.contains("vertical_angles"))
    {
        m.vertical_angles = s["vertical_angles"].get<std::vector<double>>();
        m.rings = static_cast<int>(m.vertical_angles.size());
        m.cols = s.value("cols", cols);
        m.max_range = s.value("max_range", 200.0);
    }
    else
    {
        m = SensorModel::uniform(s.value("rings", rows), s.value("cols", cols), s.value("lowest_deg", -25.0),
                                 s.value("highest_deg", 15.0), s.value("max_range", 200.0));
    }
    m.validate();
    return m;
}

json iou_json(const IouReport& r)
{
    json per = json::object();
    for (int k = 0; k < kNumClasses; ++k)
    {
        const char* name = label_name(static_cast<Label>(k));
        per[name] = r.defined[static_cast<std::size_t>(k)] ? json(r.per_class[static_cast<std::size_t>(k)]) : json(nullptr);
    }
    return {{"per_class", per}, {"mean", r.mean}};
}

template <typename Matrix>
json matrix_json(const Matrix& m)
{
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r)
    {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

std::string summary(json doc) { return doc.dump(2); }

std::uint64_t fnv1a(const std::string& text) noexcept
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text)
        h = (h ^ ch) * 0x100000001b3ULL;
    return h;
}

struct LoadedDataset
{
    DatasetIndex index;
    SensorModel sensor;
};

LoadedDataset load_dataset(const std::string& root)
{
    require_path(root, "dataset");
    LoadedDataset d{DatasetIndex::load(root), SensorModel::vlp32c()};
    const fs::path manifest = fs::path(root) / "manifest.json";
    if (fs::exists(manifest))
    {
        const json m = read_json_file(manifest.string());
        if (m.contains("sensor"))
            d.sensor = sensor_from_json(m["sensor"], d.sensor.rings, d.sensor.cols);
    }
    return d;
}

Frame read_labeled(const std::string& path)
{
    Frame f = read_frame_file(path);
    if (!f.labels)
        throw FormatError(path + ": frame carries no labels", 0);
    return f;
}

void run_indexed(int workers, std::size_t count, const std::function<void(std::size_t)>& fn)
{
    workers = std::max(1, workers);
    if (workers == 1 || count < 2)
    {
        for (std::size_t i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try
            {
                for (std::size_t i = static_cast<std::size_t>(w); i < count; i += static_cast<std::size_t>(workers))
                    fn(i);
            }
            catch (...)
            {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    for (auto& t : pool)
        t.join();
    for (auto& e : errors)
        if (e)
            std::rethrow_exception(e);
}

} // namespace

std::vector<std::string> collect_frames(const std::string& path)
{
    if (fs::is_regular_file(path))
        return {path};
    if (!fs::is_directory(path))
        throw InvalidArgument("'" + path + "' is neither a frame file nor a directory");
    std::vector<std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(path))
        if (e.is_regular_file() && e.path().extension() == ".lri")
            out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

std::string run_synth(const SynthOptions& o)
{
    if (o.output.empty())
        throw InvalidArgument("output path is required");
    if (!o.manifest.empty())
    {
        const DatasetManifest m = DatasetManifest::from_json(read_text_file(o.manifest));
        const DatasetIndex index = generate_dataset(m, o.seed, o.output);
        std::map<std::string, int> per_split;
        for (const auto& s : index.samples)
            ++per_split[s.split];
        return summary({{"command", "synth"},
                        {"output", o.output},
                        {"seed", o.seed},
                        {"frames", index.samples.size()},
                        {"frames_per_split", per_split},
                        {"scene_split", index.scene_split}});
    }
    const SceneSpec scene =
        fs::is_regular_file(o.scene) ? scene_from_json(read_text_file(o.scene)) : builtin_scene(o.scene);
    const SensorModel sensor = SensorModel::vlp32c();
    RangeImage image = raycast_scene(scene, sensor, o.seed);
    image.frame_id = scene.name;
    write_frame(o.output, image, valid_labels(image));
    return summary({{"command", "synth"},
                    {"output", o.output},
                    {"seed", o.seed},
                    {"scene", scene.name},
                    {"returns", image.return_count()}});
}

std::string run_augment(const AugmentOptions& o)
{
    require_path(o.input, "input");
    WeatherParams params = weather_preset(o.preset);
    if (!o.params.empty())
        params = weather_params_from_json(read_text_file(o.params));
    if (o.visibility)
    {
        if (o.beta)
            throw InvalidArgument("give either beta or visibility, not both");
        params.beta = beta_from_visibility(*o.visibility, params.contrast_threshold);
    }
    if (o.beta)
        params.beta = *o.beta;
    if (o.scatter_rate)
        params.scatter_rate = *o.scatter_rate;
    params.validate();

    AugmentStats total;
    std::size_t frames = 0;
    for (const auto& [in, out] : map_outputs(o.input, o.output))
    {
        const Frame f = read_frame_file(in);
        WeatherParams p = params;
        p.seed = hash_combine(o.seed, fnv1a(fs::path(in).filename().string()));
        const AugmentResult r = augment_weather(f.image, p);
        write_frame(out, r.image, r.labels);
        total.returns_in += r.stats.returns_in;
        total.lost += r.stats.lost;
        total.scattered += r.stats.scattered;
        total.clamped_intensities += r.stats.clamped_intensities;
        ++frames;
    }
    return summary({{"command", "augment"},
                    {"frames", frames},
                    {"seed", o.seed},
                    {"params", json::parse(weather_params_to_json(params))},
                    {"returns_in", total.returns_in},
                    {"lost", total.lost},
                    {"scattered", total.scattered},
                    {"clamped_intensities", total.clamped_intensities},
                    {"expected_clamp_probability", params.clutter_intensity.clamp_probability()}});
}

std::string run_autolabel(const AutolabelOptions& o)
{
    AutolabelParams params;
    params.delta_r = o.delta_r;
    params.weather_class = parse_weather_class(o.weather_class);
    params.validate();

    std::vector<RangeImage> reference_frames;
    ReferenceStack stack;
    const bool stack_file = !o.reference.empty() && fs::is_regular_file(o.reference + ".json");
    if (stack_file)
    {
        stack = load_reference_stack(o.reference);
    }
    else
    {
        require_path(o.reference, "reference");
        for (const auto& f : collect_frames(o.reference))
            reference_frames.push_back(read_frame_file(f).image);
        if (reference_frames.empty())
            throw InvalidArgument("no reference frames under '" + o.reference + "'");
        stack = accumulate_reference(reference_frames);
    }
    if (!o.save_stack.empty())
    {
        if (reference_frames.empty())
            throw InvalidArgument("--save-stack needs reference frames, not a stack");
        save_reference_stack(o.save_stack, reference_frames);
    }

    if (o.self_check)
    {
        if (reference_frames.empty())
            throw InvalidArgument("the self-check needs reference frames, not a stack");
        const FalseRateReport r = reference_self_check(reference_frames, params, o.crop_width);
        return summary({{"command", "autolabel"},
                        {"self_check", true},
                        {"frames", reference_frames.size()},
                        {"delta_r", params.delta_r},
                        {"crop_width", o.crop_width},
                        {"pixels_per_frame", r.pixels_per_frame},
                        {"per_frame_false_counts", r.per_frame_false_counts},
                        {"mean_per_pixel_false_rate", r.mean_per_pixel_false_rate},
                        {"std_per_pixel_false_rate", r.std_per_pixel_false_rate}});
    }

    require_path(o.input, "input");
    std::size_t frames = 0;
    std::size_t clutter = 0;
    std::size_t valid = 0;
    for (const auto& [in, out] : map_outputs(o.input, o.output))
    {
        const Frame f = read_frame_file(in);
        const LabelImage labels = label_clutter(f.image, stack, params);
        write_frame(out, f.image, labels);
        valid += labels.count(Label::Valid);
        clutter += labels.count(params.weather_class);
        ++frames;
    }
    return summary({{"command", "autolabel"},
                    {"frames", frames},
                    {"reference_frames", stack.frame_count()},
                    {"delta_r", params.delta_r},
                    {"valid", valid},
                    {"clutter", clutter}});
}

std::string run_filter(const FilterOptions& o)
{
    require_path(o.input, "input");
    const Label weather = parse_weather_class(o.weather_class);
    if (o.method != "dror" && o.method != "ror" && o.method != "sor")
        throw InvalidArgument("unknown filter method '" + o.method + "' (dror, ror, sor)");
    const std::optional<json> sensor_doc = o.sensor.empty() ? std::nullopt : std::optional<json>(read_json_file(o.sensor));

    std::size_t frames = 0;
    std::size_t kept = 0;
    std::size_t removed = 0;
    for (const auto& [in, out] : map_outputs(o.input, o.output))
    {
        const Frame f = read_frame_file(in);
        const SensorModel sensor = sensor_doc ? sensor_from_json(*sensor_doc, f.image.rows(), f.image.cols())
                                              : default_sensor(f.image.rows(), f.image.cols());
        OutlierMask mask;
        if (o.method == "dror")
            mask = dror_filter(f.image, sensor, o.dror);
        else if (o.method == "ror")
            mask = ror_filter(f.image, sensor, o.radius, o.min_neighbors);
        else
            mask = sor_filter(f.image, sensor, o.k, o.std_multiplier);
        write_frame(out, f.image, mask_to_labels(mask, weather));
        kept += mask.count(MaskFlag::Keep);
        removed += mask.count(MaskFlag::Clutter);
        ++frames;
    }
    return summary({{"command", "filter"}, {"method", o.method}, {"frames", frames}, {"kept", kept}, {"clutter", removed}});
}

namespace
{

std::vector<nnet::TrainSample> load_split(const LoadedDataset& d, const std::string& split, int fov_width,
                                          int tile_width)
{
    std::vector<nnet::TrainSample> out;
    for (const auto& s : d.index.split(split))
    {
        const Frame f = read_labeled((fs::path(d.index.root) / s.path).string());
        const int width = std::min(fov_width, f.image.cols());
        const int start = forward_crop_start(f.image.cols(), width);
        RangeImage image = crop_fov(f.image, start, width);
        LabelImage labels = crop_fov(*f.labels, start, width);
        if (tile_width <= 0 || tile_width >= width)
        {
            out.push_back({std::move(image), std::move(labels)});
            continue;
        }
        for (int c = 0; c + tile_width <= width; c += tile_width)
            out.push_back({crop_fov(image, c, tile_width), crop_fov(labels, c, tile_width)});
    }
    return out;
}

} // namespace

std::string run_train(const TrainOptions& o)
{
    const LoadedDataset data = load_dataset(o.dataset);
    if (o.output.empty())
        throw InvalidArgument("checkpoint output path is required");

    nnet::TrainConfig cfg;
    if (o.preset == "desk")
        cfg = nnet::TrainConfig::desk();
    else if (o.preset != "reference")
        throw InvalidArgument("unknown training preset '" + o.preset + "' (desk, reference)");
    std::vector<int> widths{32, 64, 96, 96, 64};
    std::string weights_mode = "none";
    int tile = 100;
    if (o.preset == "desk")
    {
        widths = {8, 8, 8, 8, 8};
        weights_mode = "auto";
    }

    json doc = o.config.empty() ? json::object() : read_json_file(o.config);
    try
    {
        cfg.epochs = doc.value("epochs", cfg.epochs);
        cfg.batch_size = doc.value("batch_size", cfg.batch_size);
        cfg.adam.alpha = doc.value("learning_rate", cfg.adam.alpha);
        cfg.adam.beta1 = doc.value("beta1", cfg.adam.beta1);
        cfg.adam.beta2 = doc.value("beta2", cfg.adam.beta2);
        cfg.adam.epsilon = doc.value("epsilon", cfg.adam.epsilon);
        cfg.adam.epoch_decay = doc.value("epoch_decay", cfg.adam.epoch_decay);
        widths = doc.value("widths", widths);
        tile = doc.value("crop_width", tile);
        if (doc.contains("reduction"))
        {
            const std::string r = doc["reduction"].get<std::string>();
            if (r != "mean" && r != "sum")
                throw InvalidArgument("reduction must be mean or sum");
            cfg.loss.reduction = r == "mean" ? nnet::LossReduction::Mean : nnet::LossReduction::Sum;
        }
        if (doc.contains("class_weights"))
            weights_mode = doc["class_weights"].is_string() ? doc["class_weights"].get<std::string>()
                                                            : doc["class_weights"].dump();
    }
    catch (const json::exception& e)
    {
        throw FormatError(o.config + ": " + e.what(), 0);
    }
    if (o.epochs)
        cfg.epochs = *o.epochs;
    if (o.batch_size)
        cfg.batch_size = *o.batch_size;
    if (o.learning_rate)
        cfg.adam.alpha = *o.learning_rate;
    if (o.widths)
        widths = *o.widths;
    if (o.class_weights)
        weights_mode = *o.class_weights;
    if (o.crop_width)
        tile = *o.crop_width;
    cfg.seed = o.seed;
    cfg.workers = o.workers;
    cfg.checkpoint_dir = o.checkpoint_dir;

    const auto train_set = load_split(data, "train", o.fov_width, tile);
    const auto val_set = load_split(data, "val", o.fov_width, 0);
    if (train_set.empty())
        throw InvalidArgument("dataset '" + o.dataset + "' has no training frames");

    if (weights_mode == "auto")
        cfg.loss.class_weights = nnet::balanced_class_weights(train_set);
    else if (weights_mode != "none")
    {
        std::string list = weights_mode;
        list.erase(std::remove_if(list.begin(), list.end(), [](char ch) { return ch == '[' || ch == ']' || ch == ' '; }),
                   list.end());
        std::vector<double> w;
        std::stringstream ss(list);
        std::string item;
        while (std::getline(ss, item, ','))
        {
            try
            {
                w.push_back(std::stod(item));
            }
            catch (const std::exception&)
            {
                throw InvalidArgument("class weights must be auto, none or three numbers");
            }
        }
        if (w.size() != 3)
            throw InvalidArgument("class weights must be auto, none or three numbers");
        std::copy(w.begin(), w.end(), cfg.loss.class_weights.begin());
    }

    nnet::WeatherNetSpec spec = widths == nnet::WeatherNetSpec::full().block_widths ? nnet::WeatherNetSpec::full()
                                                                                     : nnet::WeatherNetSpec::reduced(widths);
    nnet::WeatherNet net(spec);
    net.initialize(hash_combine(o.seed, 0x1417ULL));

    const auto t0 = std::chrono::steady_clock::now();
    const nnet::TrainResult result = nnet::train(net, train_set, val_set, cfg);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nnet::save_checkpoint(o.output, net, cfg.epochs, o.seed);

    json curve = json::array();
    for (const auto& e : result.epochs)
        curve.push_back({{"epoch", e.epoch},
                         {"loss", e.loss},
                         {"learning_rate", e.learning_rate},
                         {"val_mean_iou", e.val_mean_iou < 0.0 ? json(nullptr) : json(e.val_mean_iou)}});
    return summary({{"command", "train"},
                    {"checkpoint", o.output},
                    {"seed", o.seed},
                    {"widths", widths},
                    {"parameters", net.param_count()},
                    {"train_samples", train_set.size()},
                    {"val_samples", val_set.size()},
                    {"epochs", cfg.epochs},
                    {"batch_size", cfg.batch_size},
                    {"learning_rate", cfg.adam.alpha},
                    {"class_weights", cfg.loss.class_weights},
                    {"curve", curve},
                    {"wall_clock_s", seconds}});
}

std::string run_predict(const PredictOptions& o)
{
    require_path(o.checkpoint, "checkpoint");
    require_path(o.input, "input");
    const nnet::WeatherNet net = nnet::load_checkpoint(o.checkpoint).network();
    std::size_t frames = 0;
    std::array<std::size_t, kNumClasses> counts{};
    for (const auto& [in, out] : map_outputs(o.input, o.output))
    {
        const Frame f = read_frame_file(in);
        const nnet::Denoised d = nnet::predict_and_denoise(net, f.image);
        write_frame(out, o.denoise ? d.image : f.image, d.labels);
        for (int k = 0; k < kNumClasses; ++k)
            counts[static_cast<std::size_t>(k)] += d.labels.count(static_cast<Label>(k));
        ++frames;
    }
    return summary({{"command", "predict"},
                    {"frames", frames},
                    {"denoise", o.denoise},
                    {"predicted", {{"valid", counts[0]}, {"rain", counts[1]}, {"fog", counts[2]}}}});
}

std::string run_eval(const EvalOptions& o)
{
    require_path(o.prediction, "prediction");
    require_path(o.ground_truth, "ground truth");
    std::vector<std::pair<std::string, std::string>> pairs;
    if (fs::is_regular_file(o.prediction))
        pairs.emplace_back(o.prediction, o.ground_truth);
    else
        for (const auto& f : collect_frames(o.prediction))
            pairs.emplace_back(f, (fs::path(o.ground_truth) / fs::relative(f, o.prediction)).string());
    if (pairs.empty())
        throw InvalidArgument("no prediction frames under '" + o.prediction + "'");

    ConfusionMatrix conf;
    BinaryConfusion bconf;
    for (const auto& [pred_path, gt_path] : pairs)
    {
        if (!fs::exists(gt_path))
            throw InvalidArgument("no ground truth for '" + pred_path + "' (expected '" + gt_path + "')");
        const Frame pred = read_labeled(pred_path);
        const Frame gt = read_labeled(gt_path);
        LabelImage p = *pred.labels;
        LabelImage g = *gt.labels;
        if (o.crop_width > 0)
        {
            p = crop_fov(p, forward_crop_start(p.cols(), o.crop_width), o.crop_width);
            g = crop_fov(g, forward_crop_start(g.cols(), o.crop_width), o.crop_width);
        }
        if (o.binary)
            bconf = binary_confusion_update(bconf, labels_to_mask(p), g);
        else
            conf = confusion_update(conf, p, g);
    }
    json doc{{"command", "eval"}, {"frames", pairs.size()}, {"binary", o.binary}};
    if (o.binary)
    {
        doc["confusion"] = matrix_json(bconf.counts);
        doc["iou"] = iou_json(iou_scores(bconf));
    }
    else
    {
        doc["confusion"] = matrix_json(conf.counts);
        doc["iou"] = iou_json(iou_scores(conf));
    }
    doc["mean_iou"] = doc["iou"]["mean"];
    return summary(doc);
}

std::string run_report(const ReportOptions& o)
{
    const LoadedDataset data = load_dataset(o.dataset);
    require_path(o.checkpoint, "checkpoint");
    if (o.output.empty())
        throw InvalidArgument("report output directory is required");
    const nnet::WeatherNet net = nnet::load_checkpoint(o.checkpoint).network();
    const auto test = data.index.split("test");
    if (test.empty())
        throw InvalidArgument("dataset '" + o.dataset + "' has no test frames");

    struct PerFrame
    {
        ConfusionMatrix net;
        BinaryConfusion dror;
        DegradationReport truth;
        DegradationReport predicted;
    };
    std::vector<PerFrame> results(test.size());
    double net_seconds = 0.0;
    std::vector<double> frame_seconds(test.size());
    run_indexed(o.workers, test.size(), [&](std::size_t i) {
        const Frame f = read_labeled((fs::path(data.index.root) / test[i].path).string());
        const int width = std::min(o.fov_width, f.image.cols());
        const int start = forward_crop_start(f.image.cols(), width);
        const RangeImage image = crop_fov(f.image, start, width);
        const LabelImage gt = crop_fov(*f.labels, start, width);
        const auto t0 = std::chrono::steady_clock::now();
        const LabelImage pred = nnet::predict_labels(net, image);
        frame_seconds[i] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const OutlierMask dror = dror_filter(f.image, data.sensor, o.dror);
        const LabelImage dror_labels = crop_fov(mask_to_labels(dror, Label::Fog), start, width);
        PerFrame& r = results[i];
        r.net = confusion_update({}, pred, gt);
        r.dror = binary_confusion_update({}, labels_to_mask(dror_labels), gt);
        if (gt.count(Label::Valid) + gt.count(Label::Rain) + gt.count(Label::Fog) > 0)
            r.truth = degradation_report(gt);
        if (pred.count(Label::Valid) + pred.count(Label::Rain) + pred.count(Label::Fog) > 0)
            r.predicted = degradation_report(pred);
    });

    ConfusionMatrix net_conf;
    BinaryConfusion dror_conf;
    for (std::size_t i = 0; i < results.size(); ++i)
    {
        net_conf += results[i].net;
        dror_conf += results[i].dror;
        net_seconds += frame_seconds[i];
    }
    const IouReport net_iou = iou_scores(net_conf);
    const IouReport dror_iou = iou_scores(dror_conf);
    const std::vector<TableRow> rows{{"DROR", dror_iou, 0.0},
                                     {"WeatherNet", net_iou, static_cast<double>(net.param_count()) / 1e6}};

    // Clutter ratio per weather condition, in condition order of first appearance.
    struct Curve
    {
        std::string condition;
        double sum_truth = 0.0;
        double sum_pred = 0.0;
        int frames = 0;
    };
    std::vector<Curve> curves;
    for (std::size_t i = 0; i < test.size(); ++i)
    {
        const std::string& c = test[i].condition;
        auto it = std::find_if(curves.begin(), curves.end(), [&](const Curve& x) { return x.condition == c; });
        if (it == curves.end())
            it = curves.insert(curves.end(), Curve{c});
        it->sum_truth += results[i].truth.clutter_ratio;
        it->sum_pred += results[i].predicted.clutter_ratio;
        ++it->frames;
    }
    std::ostringstream csv;
    std::ostringstream dat;
    csv << "condition,beta,visibility_m,frames,clutter_ratio_truth,clutter_ratio_predicted\n";
    dat << "# beta visibility_m clutter_ratio_truth clutter_ratio_predicted condition\n";
    for (const auto& c : curves)
    {
        double beta = 0.0;
        if (c.condition != "clear")
            beta = weather_preset(c.condition).beta;
        const double vis = beta > 0.0 ? visibility_from_beta(beta) : INFINITY;
        char line[256];
        std::snprintf(line, sizeof line, "%s,%.6g,%.6g,%d,%.6f,%.6f\n", c.condition.c_str(), beta, vis, c.frames,
                      c.sum_truth / c.frames, c.sum_pred / c.frames);
        csv << line;
        if (beta > 0.0)
        {
            std::snprintf(line, sizeof line, "%.6g %.6g %.6f %.6f %s\n", beta, vis, c.sum_truth / c.frames,
                          c.sum_pred / c.frames, c.condition.c_str());
            dat << line;
        }
    }

    const fs::path out(o.output);
    write_text_file(out / "table.txt", format_iou_table(rows));
    write_text_file(out / "table.csv", format_iou_csv(rows));
    write_text_file(out / "degradation.csv", csv.str());
    write_text_file(out / "degradation.dat", dat.str());

    return summary({{"command", "report"},
                    {"test_frames", test.size()},
                    {"dror", iou_json(dror_iou)},
                    {"weathernet", iou_json(net_iou)},
                    {"weathernet_confusion", matrix_json(net_conf.counts)},
                    {"parameters", net.param_count()},
                    {"outputs", {"table.txt", "table.csv", "degradation.csv", "degradation.dat"}},
                    {"inference_ms_per_frame", 1e3 * net_seconds / static_cast<double>(test.size())}});
}

} // namespace lidar_weather::pipeline
