#include <lidar_weather/errors.hpp>
#include <lidar_weather/pipeline.hpp>

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <numbers>
#include <optional>

namespace pl = lidar_weather::pipeline;

namespace
{

template <typename T>
void optional_flag(CLI::App* app, const std::string& name, std::optional<T>& target, const std::string& help)
{
    app->add_option_function<T>(name, [&target](const T& v) { target = v; }, help);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Weather clutter tools for rotating lidar range images"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    int workers = 1;
    app.add_option("--seed", seed, "Seed for every random draw")->capture_default_str();
    app.add_option("--workers", workers, "Worker threads (results do not depend on it)")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);

    pl::SynthOptions synth;
    auto* synth_cmd = app.add_subcommand("synth", "Raycast a scene or generate a labeled dataset");
    synth_cmd->add_option("--manifest", synth.manifest, "Dataset manifest (JSON)");
    synth_cmd->add_option("--scene", synth.scene, "Built-in scene name or scene JSON (single frame mode)")
        ->capture_default_str();
    synth_cmd->add_option("-o,--out", synth.output, "Output directory (dataset) or frame file")->required();

    pl::AugmentOptions augment;
    auto* augment_cmd = app.add_subcommand("augment", "Add rain or fog clutter to clear frames");
    augment_cmd->add_option("-i,--in", augment.input, "Frame file or directory")->required();
    augment_cmd->add_option("-o,--out", augment.output, "Output frame file or directory")->required();
    augment_cmd->add_option("--preset", augment.preset, "rain, rain15, rain33, rain55 or fog:V=<meters>")
        ->capture_default_str();
    augment_cmd->add_option("--params", augment.params, "Weather parameter document (JSON)");
    optional_flag(augment_cmd, "--beta", augment.beta, "Extinction coefficient per meter");
    optional_flag(augment_cmd, "--scatter-rate", augment.scatter_rate, "Scatter probability p");
    optional_flag(augment_cmd, "--visibility", augment.visibility, "Visibility in meters (sets beta)");

    pl::AutolabelOptions autolabel;
    auto* autolabel_cmd = app.add_subcommand("autolabel", "Label clutter against clear reference frames");
    autolabel_cmd->add_option("-r,--reference", autolabel.reference, "Reference frames directory or stack base path")
        ->required();
    autolabel_cmd->add_option("-i,--in", autolabel.input, "Frames to label");
    autolabel_cmd->add_option("-o,--out", autolabel.output, "Labeled output");
    autolabel_cmd->add_option("--save-stack", autolabel.save_stack, "Persist the reference stack at this base path");
    autolabel_cmd->add_option("--delta-r", autolabel.delta_r, "Distance tolerance in meters")->capture_default_str();
    autolabel_cmd->add_option("--class", autolabel.weather_class, "Label for clutter: rain or fog")->capture_default_str();
    autolabel_cmd->add_flag("--self-check", autolabel.self_check, "Split the references in halves and report false rates");
    autolabel_cmd->add_option("--crop", autolabel.crop_width, "Self-check crop width in columns")->capture_default_str();

    pl::FilterOptions filter;
    double alpha_deg = 0.2;
    auto* filter_cmd = app.add_subcommand("filter", "Geometric outlier removal (dror, ror, sor)");
    filter_cmd->add_option("-m,--method", filter.method, "dror, ror or sor")->capture_default_str();
    filter_cmd->add_option("-i,--in", filter.input, "Frame file or directory")->required();
    filter_cmd->add_option("-o,--out", filter.output, "Output with the mask in the label channel")->required();
    filter_cmd->add_option("--sensor", filter.sensor, "Sensor document (JSON)");
    filter_cmd->add_option("--alpha-deg", alpha_deg, "DROR horizontal resolution in degrees")->capture_default_str();
    filter_cmd->add_option("--multiplier", filter.dror.radius_multiplier, "DROR radius multiplier")->capture_default_str();
    filter_cmd->add_option("--min-radius", filter.dror.min_search_radius, "DROR minimum search radius")
        ->capture_default_str();
    filter_cmd->add_option("--k-min", filter.dror.min_neighbors, "DROR minimum neighbor count")->capture_default_str();
    filter_cmd->add_option("--radius", filter.radius, "ROR radius")->capture_default_str();
    filter_cmd->add_option("--min-neighbors", filter.min_neighbors, "ROR minimum neighbor count")->capture_default_str();
    filter_cmd->add_option("--k", filter.k, "SOR neighbor count")->capture_default_str();
    filter_cmd->add_option("--std", filter.std_multiplier, "SOR standard deviation multiplier")->capture_default_str();
    filter_cmd->add_option("--class", filter.weather_class, "Label written for clutter")->capture_default_str();

    pl::TrainOptions train;
    std::string widths;
    auto* train_cmd = app.add_subcommand("train", "Train the segmentation network on a generated dataset");
    train_cmd->add_option("-d,--dataset", train.dataset, "Dataset directory")->required();
    train_cmd->add_option("-o,--out", train.output, "Checkpoint path")->required();
    train_cmd->add_option("--config", train.config, "Training document (JSON)");
    train_cmd->add_option("--preset", train.preset, "desk or reference")->capture_default_str();
    train_cmd->add_option("--widths", widths, "Comma separated block widths");
    optional_flag(train_cmd, "--epochs", train.epochs, "Epoch count");
    optional_flag(train_cmd, "--batch", train.batch_size, "Batch size");
    optional_flag(train_cmd, "--lr", train.learning_rate, "Adam learning rate");
    optional_flag(train_cmd, "--class-weights", train.class_weights, "auto, none or w_valid,w_rain,w_fog");
    optional_flag(train_cmd, "--crop", train.crop_width, "Training tile width in columns");
    train_cmd->add_option("--fov", train.fov_width, "Forward field of view in columns")->capture_default_str();
    train_cmd->add_option("--checkpoint-dir", train.checkpoint_dir, "Write a checkpoint after every epoch");

    pl::PredictOptions predict;
    auto* predict_cmd = app.add_subcommand("predict", "Label frames with a trained network");
    predict_cmd->add_option("-c,--checkpoint", predict.checkpoint, "Checkpoint path")->required();
    predict_cmd->add_option("-i,--in", predict.input, "Frame file or directory")->required();
    predict_cmd->add_option("-o,--out", predict.output, "Output frame file or directory")->required();
    predict_cmd->add_flag("--denoise", predict.denoise, "Drop returns predicted as rain or fog");

    pl::EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "Score predicted labels against ground truth");
    eval_cmd->add_option("-p,--pred", eval.prediction, "Predicted frames")->required();
    eval_cmd->add_option("-g,--gt", eval.ground_truth, "Ground-truth frames")->required();
    eval_cmd->add_flag("--binary", eval.binary, "Score clutter against rain and fog together");
    eval_cmd->add_option("--crop", eval.crop_width, "Forward crop width, 0 for full frames")->capture_default_str();

    pl::ReportOptions report;
    auto* report_cmd = app.add_subcommand("report", "IoU table and clutter-ratio curves on the test split");
    report_cmd->add_option("-d,--dataset", report.dataset, "Dataset directory")->required();
    report_cmd->add_option("-c,--checkpoint", report.checkpoint, "Checkpoint path")->required();
    report_cmd->add_option("-o,--out", report.output, "Report directory")->required();
    report_cmd->add_option("--fov", report.fov_width, "Forward field of view in columns")->capture_default_str();

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e)
    {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try
    {
        std::string out;
        if (*synth_cmd)
        {
            synth.seed = seed;
            out = pl::run_synth(synth);
        }
        else if (*augment_cmd)
        {
            augment.seed = seed;
            out = pl::run_augment(augment);
        }
        else if (*autolabel_cmd)
            out = pl::run_autolabel(autolabel);
        else if (*filter_cmd)
        {
            filter.dror.alpha = alpha_deg * std::numbers::pi / 180.0;
            out = pl::run_filter(filter);
        }
        else if (*train_cmd)
        {
            train.seed = seed;
            train.workers = workers;
            if (!widths.empty())
            {
                std::vector<int> w;
                for (const auto& item : CLI::detail::split(widths, ','))
                    w.push_back(std::stoi(item));
                train.widths = w;
            }
            out = pl::run_train(train);
        }
        else if (*predict_cmd)
            out = pl::run_predict(predict);
        else if (*eval_cmd)
            out = pl::run_eval(eval);
        else if (*report_cmd)
        {
            report.workers = workers;
            out = pl::run_report(report);
        }
        std::cout << out << "\n";
        return 0;
    }
    catch (const lidar_weather::NumericalError& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    catch (const lidar_weather::InvalidArgument& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    catch (const std::invalid_argument& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    catch (const std::exception& e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
