#include <lidar_weather/nnet/checkpoint.hpp>
#include <lidar_weather/nnet/train.hpp>
#include <lidar_weather/rng.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <thread>

namespace lidar_weather::nnet
{

TrainConfig TrainConfig::desk()
{
    TrainConfig c;
    c.epochs = 40;
    c.batch_size = 4;
    c.adam.alpha = 3e-3;
    c.adam.epoch_decay = 0.95;
    return c;
}

void TrainConfig::validate() const
{
    if (epochs < 0 || batch_size < 1)
        throw InvalidArgument("epochs must be >= 0 and batch size >= 1");
    if (workers < 1)
        throw InvalidArgument("worker count must be >= 1");
    for (double w : loss.class_weights)
        if (!(w >= 0.0) || !std::isfinite(w))
            throw InvalidArgument("class weights must be finite and non-negative");
}

std::array<double, kNumClasses> balanced_class_weights(const std::vector<TrainSample>& samples, double power)
{
    std::array<double, kNumClasses> count{};
    for (const auto& s : samples)
        for (int k = 0; k < kNumClasses; ++k)
            count[static_cast<std::size_t>(k)] += static_cast<double>(s.labels.count(static_cast<Label>(k)));
    std::array<double, kNumClasses> w{1.0, 1.0, 1.0};
    if (count[0] <= 0.0)
        return w;
    for (std::size_t k = 1; k < w.size(); ++k)
        if (count[k] > 0.0)
            w[k] = std::pow(count[0] / count[k], power);
    return w;
}

ConfusionMatrix evaluate(const WeatherNet& net, const std::vector<TrainSample>& samples)
{
    ConfusionMatrix conf;
    for (const auto& s : samples)
        conf = confusion_update(conf, predict_labels(net, s.image), s.labels);
    return conf;
}

namespace
{

struct Prepared
{
    Tensor4<double> input;
    const LabelMatrix* labels;
    double labeled;
};

void run_parallel(int workers, int count, const std::function<void(int)>& fn)
{
    if (workers <= 1 || count <= 1)
    {
        for (int i = 0; i < count; ++i)
            fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try
            {
                for (int i = w; i < count; i += workers)
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

TrainResult train(WeatherNet& net, const std::vector<TrainSample>& train_set, const std::vector<TrainSample>& val_set,
                  const TrainConfig& config, const std::function<void(const EpochStats&)>& on_epoch)
{
    config.validate();
    if (train_set.empty())
        throw InvalidArgument("training set is empty");

    std::vector<Prepared> data;
    data.reserve(train_set.size());
    for (const auto& s : train_set)
    {
        if (s.labels.rows() != s.image.rows() || s.labels.cols() != s.image.cols())
            throw InvalidArgument("training sample '" + s.image.frame_id + "' has mismatched label shape");
        data.push_back({make_input<double>(s.image, net.spec().distance_scale), &s.labels.codes,
                        static_cast<double>(labeled_pixels(s.labels.codes))});
    }
    if (!config.checkpoint_dir.empty())
        std::filesystem::create_directories(config.checkpoint_dir);

    const int dropped_block = net.spec().dropout_after;
    AdamState adam(net.param_count(), config.adam);
    TrainResult result;
    std::vector<std::size_t> order(data.size());
    std::vector<Eigen::VectorXd> item_grads;
    std::vector<double> item_loss;

    for (int epoch = 1; epoch <= config.epochs; ++epoch)
    {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 shuffle_rng(hash_combine(config.seed, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng() % i]);

        double epoch_loss = 0.0;
        double epoch_pixels = 0.0;
        const double rate = adam.learning_rate;
        int batch_id = 0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size), ++batch_id)
        {
            const int count = static_cast<int>(std::min(order.size() - start, static_cast<std::size_t>(config.batch_size)));
            double labeled = 0.0;
            for (int i = 0; i < count; ++i)
                labeled += data[order[start + static_cast<std::size_t>(i)]].labeled;
            if (labeled == 0.0)
                continue;
            const double scale = config.loss.reduction == LossReduction::Mean ? 1.0 / labeled : 1.0;

            item_grads.resize(static_cast<std::size_t>(count));
            item_loss.assign(static_cast<std::size_t>(count), 0.0);
            run_parallel(config.workers, count, [&](int i) {
                const Prepared& p = data[order[start + static_cast<std::size_t>(i)]];
                Eigen::VectorXd& g = item_grads[static_cast<std::size_t>(i)];
                g.setZero(net.param_count());
                std::optional<DropoutMasks> masks;
                if (dropped_block >= 0 && net.spec().dropout_rate > 0.0)
                    masks = DropoutMasks::sample(
                        net.spec().block_widths[static_cast<std::size_t>(dropped_block)], p.input.plane(),
                        net.spec().dropout_rate,
                        hash_combine(hash_combine(config.seed ^ 0xd509ULL, static_cast<std::uint64_t>(epoch)),
                                     order[start + static_cast<std::size_t>(i)]));
                item_loss[static_cast<std::size_t>(i)] =
                    loss_and_gradient(net, p.input.item(0), p.input.rows(), p.input.cols(), *p.labels, config.loss,
                                      scale, masks ? &*masks : nullptr, g);
            });

            Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.param_count());
            double batch_loss = 0.0;
            for (int i = 0; i < count; ++i)
            {
                grad += item_grads[static_cast<std::size_t>(i)];
                batch_loss += item_loss[static_cast<std::size_t>(i)];
            }
            if (!std::isfinite(batch_loss) || !grad.allFinite())
                throw NumericalError("non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                                     std::to_string(batch_id));
            adam_step(net.params(), grad, adam);
            epoch_loss += batch_loss / scale;
            epoch_pixels += labeled;
        }
        adam.end_epoch();

        EpochStats stats;
        stats.epoch = epoch;
        stats.loss = epoch_pixels > 0.0 ? epoch_loss / epoch_pixels : 0.0;
        stats.learning_rate = rate;
        if (!val_set.empty())
        {
            const ConfusionMatrix conf = evaluate(net, val_set);
            if (conf.total() > 0)
                stats.val_mean_iou = iou_scores(conf).mean;
        }
        result.epochs.push_back(stats);
        if (!config.checkpoint_dir.empty())
        {
            char name[32];
            std::snprintf(name, sizeof name, "epoch%03d.ckpt", epoch);
            save_checkpoint((std::filesystem::path(config.checkpoint_dir) / name).string(), net, epoch, config.seed);
        }
        if (on_epoch)
            on_epoch(stats);
    }
    return result;
}

} // namespace lidar_weather::nnet
