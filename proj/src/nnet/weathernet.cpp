#include <lidar_weather/nnet/weathernet.hpp>
#include <lidar_weather/rng.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace lidar_weather::nnet
{

long lila_param_count(int c, int n) noexcept
{
    const long cl = c;
    const long nl = n;
    return 60 * cl * nl + 4 * nl * nl + 5 * nl;
}

long LiLaBlockSpec::param_count() const noexcept { return lila_param_count(in_channels, branch_width); }

std::array<ConvSpec, 5> LiLaBlockSpec::convs() const
{
    const int c = in_channels;
    const int n = branch_width;
    return {ConvSpec{c, n, 7, 3, 1, 1}, ConvSpec{c, n, 3, 3, 1, 1}, ConvSpec{c, n, 3, 3, 2, 2},
            ConvSpec{c, n, 3, 7, 1, 1}, ConvSpec{4 * n, n, 1, 1, 1, 1}};
}

WeatherNetSpec WeatherNetSpec::full() { return {}; }

WeatherNetSpec WeatherNetSpec::reduced(std::vector<int> widths)
{
    WeatherNetSpec s;
    s.block_widths = std::move(widths);
    s.dropout_after = static_cast<int>(s.block_widths.size()) - 2;
    s.validate();
    return s;
}

void WeatherNetSpec::validate() const
{
    if (in_channels < 1 || classes < 1)
        throw InvalidArgument("network needs at least one input channel and one class");
    if (block_widths.empty())
        throw InvalidArgument("network needs at least one block");
    for (int w : block_widths)
        if (w < 1)
            throw InvalidArgument("block widths must be >= 1, got " + std::to_string(w));
    if (dropout_after < -1 || dropout_after >= static_cast<int>(block_widths.size()))
        throw InvalidArgument("dropout_after " + std::to_string(dropout_after) + " is not a block index");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw InvalidArgument("dropout rate must be in [0, 1)");
    if (!(distance_scale > 0.0) || !std::isfinite(distance_scale))
        throw InvalidArgument("distance scale must be positive");
}

std::vector<LiLaBlockSpec> WeatherNetSpec::blocks() const
{
    std::vector<LiLaBlockSpec> out;
    int c = in_channels;
    for (int n : block_widths)
    {
        out.push_back({c, n});
        c = n;
    }
    return out;
}

ConvSpec WeatherNetSpec::head() const { return ConvSpec{block_widths.back(), classes, 1, 1, 1, 1}; }

long WeatherNetSpec::param_count() const
{
    long total = head().param_count();
    for (const auto& b : blocks())
        total += b.param_count();
    return total;
}

WeatherNet::WeatherNet(WeatherNetSpec spec) : spec_(std::move(spec))
{
    spec_.validate();
    long offset = 0;
    for (const auto& block : spec_.blocks())
        for (const auto& conv : block.convs())
        {
            layers_.push_back(conv);
            offsets_.push_back(offset);
            offset += conv.param_count();
        }
    layers_.push_back(spec_.head());
    offsets_.push_back(offset);
    offset += spec_.head().param_count();
    params_ = Eigen::VectorXd::Zero(offset);
}

std::vector<long> WeatherNet::block_param_counts() const
{
    std::vector<long> out;
    for (std::size_t i = 0; i + 1 < layers_.size(); i += 5)
    {
        long sum = 0;
        for (std::size_t k = i; k < i + 5; ++k)
            sum += layers_[k].param_count();
        out.push_back(sum);
    }
    out.push_back(layers_.back().param_count());
    return out;
}

void WeatherNet::initialize(std::uint64_t seed)
{
    params_.setZero();
    for (std::size_t i = 0; i < layers_.size(); ++i)
    {
        CounterRng rng(seed, i);
        const double bound = std::sqrt(6.0 / layers_[i].patch_size());
        const long n = layers_[i].weight_count();
        for (long k = 0; k < n; ++k)
            params_(offsets_[i] + k) = bound * (2.0 * rng.uniform() - 1.0);
    }
}

DropoutMasks DropoutMasks::sample(int channels, Eigen::Index plane, double rate, std::uint64_t seed)
{
    DropoutMasks m;
    m.scale.resize(channels, plane);
    CounterRng rng(seed, 0xd50ULL);
    const double keep = 1.0 / (1.0 - rate);
    double* p = m.scale.data();
    for (Eigen::Index i = 0; i < m.scale.size(); ++i)
        p[i] = rng.uniform() < rate ? 0.0 : keep;
    return m;
}

namespace
{

template <typename S>
ConstWeightMap<S> weights_of(const WeatherNet& net, const Vector<S>& p, std::size_t i)
{
    const ConvSpec& s = net.layer(i);
    return ConstWeightMap<S>(p.data() + net.weight_offset(i), s.out_channels, s.patch_size());
}

template <typename S>
Eigen::Map<const Vector<S>> bias_of(const WeatherNet& net, const Vector<S>& p, std::size_t i)
{
    return Eigen::Map<const Vector<S>>(p.data() + net.bias_offset(i), net.layer(i).out_channels);
}

template <typename S>
Matrix<S> conv_layer(const WeatherNet& net, const Vector<S>& p, std::size_t i, const Eigen::Ref<const Matrix<S>>& x,
                     int rows, int cols)
{
    return conv_forward_item<S>(x, rows, cols, net.layer(i), weights_of(net, p, i), bias_of(net, p, i));
}

struct BlockCache
{
    Matrix<double> concat; // post-ReLU branch outputs
    Matrix<double> hidden; // post-ReLU bottleneck output
    Matrix<double> output; // after dropout (equals hidden when none)
};

struct ForwardCache
{
    std::vector<BlockCache> blocks;
    Matrix<double> logits;
};

void check_input(const WeatherNet& net, Eigen::Index in_rows, Eigen::Index in_cols, int rows, int cols)
{
    if (in_rows != net.spec().in_channels)
        throw InvalidArgument("network input has " + std::to_string(in_rows) + " channels, expected " +
                              std::to_string(net.spec().in_channels));
    if (rows < 1 || cols < 1 || in_cols != static_cast<Eigen::Index>(rows) * cols)
        throw InvalidArgument("network input plane does not match " + std::to_string(rows) + "x" +
                              std::to_string(cols));
}

void check_masks(const WeatherNet& net, const DropoutMasks* masks, Eigen::Index plane)
{
    if (!masks)
        return;
    const int b = net.spec().dropout_after;
    if (b < 0)
        throw InvalidArgument("dropout masks given but the network has no dropout layer");
    if (masks->scale.rows() != net.spec().block_widths[static_cast<std::size_t>(b)] || masks->scale.cols() != plane)
        throw InvalidArgument("dropout mask shape does not match the network");
}

ForwardCache forward_cached(const WeatherNet& net, const Vector<double>& p, const Eigen::Ref<const Matrix<double>>& input,
                            int rows, int cols, const DropoutMasks* masks)
{
    check_input(net, input.rows(), input.cols(), rows, cols);
    check_masks(net, masks, input.cols());
    const auto blocks = net.spec().blocks();
    ForwardCache cache;
    cache.blocks.resize(blocks.size());
    for (std::size_t b = 0; b < blocks.size(); ++b)
    {
        const int n = blocks[b].branch_width;
        const Eigen::Ref<const Matrix<double>> x =
            b == 0 ? input : Eigen::Ref<const Matrix<double>>(cache.blocks[b - 1].output);
        BlockCache& bc = cache.blocks[b];
        bc.concat.resize(4 * n, x.cols());
        for (int k = 0; k < 4; ++k)
            bc.concat.middleRows(k * n, n) = conv_layer<double>(net, p, 5 * b + k, x, rows, cols).cwiseMax(0.0);
        bc.hidden = conv_layer<double>(net, p, 5 * b + 4, bc.concat, rows, cols).cwiseMax(0.0);
        if (masks && static_cast<int>(b) == net.spec().dropout_after)
            bc.output = bc.hidden.cwiseProduct(masks->scale);
        else
            bc.output = bc.hidden;
    }
    cache.logits = conv_layer<double>(net, p, net.layer_count() - 1, cache.blocks.back().output, rows, cols);
    return cache;
}

// Weighted cross-entropy of one item; fills d(loss)/d(logits) when requested.
double cross_entropy(const Matrix<double>& logits, const LabelMatrix& labels, const LossOptions& options, double scale,
                     Matrix<double>* grad_logits)
{
    const Eigen::Index pixels = logits.cols();
    if (labels.size() != pixels)
        throw InvalidArgument("label image has " + std::to_string(labels.size()) + " pixels, logits have " +
                              std::to_string(pixels));
    if (grad_logits)
        grad_logits->setZero(logits.rows(), pixels);
    const std::uint8_t* lab = labels.data();
    double loss = 0.0;
    for (Eigen::Index p = 0; p < pixels; ++p)
    {
        const std::uint8_t l = lab[p];
        if (l == code(Label::NoReturn))
            continue;
        if (l >= logits.rows())
            throw InvalidArgument("label code " + std::to_string(l) + " outside the network's classes");
        const double w = options.class_weights[l];
        const auto z = logits.col(p);
        const double zmax = z.maxCoeff();
        const double sum = (z.array() - zmax).exp().sum();
        loss += w * (zmax + std::log(sum) - z(l));
        if (grad_logits)
        {
            auto g = grad_logits->col(p);
            g = (z.array() - zmax).exp() / sum;
            g(l) -= 1.0;
            g *= scale * w;
        }
    }
    return scale * loss;
}

} // namespace

template <typename Scalar>
Matrix<Scalar> WeatherNet::forward(const Eigen::Ref<const Matrix<Scalar>>& input, int rows, int cols,
                                   const Vector<Scalar>& p, const DropoutMasks* masks) const
{
    check_input(*this, input.rows(), input.cols(), rows, cols);
    check_masks(*this, masks, input.cols());
    const auto blocks = spec_.blocks();
    Matrix<Scalar> x = input;
    for (std::size_t b = 0; b < blocks.size(); ++b)
    {
        const int n = blocks[b].branch_width;
        Matrix<Scalar> concat(4 * n, x.cols());
        for (int k = 0; k < 4; ++k)
            concat.middleRows(k * n, n) = conv_layer<Scalar>(*this, p, 5 * b + k, x, rows, cols).cwiseMax(Scalar(0));
        x = conv_layer<Scalar>(*this, p, 5 * b + 4, concat, rows, cols).cwiseMax(Scalar(0));
        if (masks && static_cast<int>(b) == spec_.dropout_after)
            x = x.cwiseProduct(masks->scale.template cast<Scalar>());
    }
    return conv_layer<Scalar>(*this, p, layers_.size() - 1, x, rows, cols);
}

template Matrix<float> WeatherNet::forward<float>(const Eigen::Ref<const Matrix<float>>&, int, int, const Vector<float>&,
                                                  const DropoutMasks*) const;
template Matrix<double> WeatherNet::forward<double>(const Eigen::Ref<const Matrix<double>>&, int, int,
                                                    const Vector<double>&, const DropoutMasks*) const;

Tensor4<double> WeatherNet::forward(const Tensor4<double>& input, bool train_mode, std::uint64_t dropout_seed) const
{
    Tensor4<double> out(input.batch(), spec_.classes, input.rows(), input.cols());
    const bool drop = train_mode && spec_.dropout_after >= 0;
    for (int n = 0; n < input.batch(); ++n)
    {
        std::optional<DropoutMasks> masks;
        if (drop)
            masks = DropoutMasks::sample(spec_.block_widths[static_cast<std::size_t>(spec_.dropout_after)],
                                         input.plane(), spec_.dropout_rate,
                                         hash_combine(dropout_seed, static_cast<std::uint64_t>(n)));
        out.item(n) = forward<double>(input.item(n), input.rows(), input.cols(), params_, masks ? &*masks : nullptr);
    }
    return out;
}

Tensor4<float> WeatherNet::forward(const Tensor4<float>& input) const
{
    const Vector<float> p = params_.cast<float>();
    Tensor4<float> out(input.batch(), spec_.classes, input.rows(), input.cols());
    for (int n = 0; n < input.batch(); ++n)
        out.item(n) = forward<float>(input.item(n), input.rows(), input.cols(), p);
    return out;
}

Tensor4<float> WeatherNet::logits(const RangeImage& image) const
{
    return forward(make_input<float>(image, spec_.distance_scale));
}

template <typename Scalar>
Tensor4<Scalar> make_input(const RangeImage& image, double distance_scale)
{
    image.validate();
    Tensor4<Scalar> t(1, 2, image.rows(), image.cols());
    const Eigen::Index plane = t.plane();
    auto item = t.item(0);
    item.row(0) = Eigen::Map<const Eigen::RowVectorXf>(image.distance.data(), plane).template cast<Scalar>() *
                  static_cast<Scalar>(distance_scale);
    item.row(1) = Eigen::Map<const Eigen::RowVectorXf>(image.intensity.data(), plane).template cast<Scalar>();
    return t;
}

template Tensor4<float> make_input<float>(const RangeImage&, double);
template Tensor4<double> make_input<double>(const RangeImage&, double);

Matrix<double> softmax(const Matrix<double>& logits)
{
    Matrix<double> out(logits.rows(), logits.cols());
    for (Eigen::Index p = 0; p < logits.cols(); ++p)
    {
        const auto z = logits.col(p);
        auto e = (z.array() - z.maxCoeff()).exp();
        out.col(p) = e / e.sum();
    }
    return out;
}

std::size_t labeled_pixels(const LabelMatrix& labels) noexcept
{
    return static_cast<std::size_t>((labels.array() != code(Label::NoReturn)).count());
}

double loss_only(const WeatherNet& net, const Vector<double>& params, const Eigen::Ref<const Matrix<double>>& input,
                 int rows, int cols, const LabelMatrix& labels, const LossOptions& options, double scale,
                 const DropoutMasks* masks)
{
    const Matrix<double> logits = net.forward<double>(input, rows, cols, params, masks);
    return cross_entropy(logits, labels, options, scale, nullptr);
}

double loss_and_gradient(const WeatherNet& net, const Eigen::Ref<const Matrix<double>>& input, int rows, int cols,
                         const LabelMatrix& labels, const LossOptions& options, double scale,
                         const DropoutMasks* masks, Eigen::Ref<Eigen::VectorXd> grad)
{
    if (grad.size() != net.param_count())
        throw InvalidArgument("gradient buffer size does not match the network");
    const Vector<double>& p = net.params();
    ForwardCache cache = forward_cached(net, p, input, rows, cols, masks);
    Matrix<double> g;
    const double loss = cross_entropy(cache.logits, labels, options, scale, &g);

    auto backward = [&](std::size_t i, const Eigen::Ref<const Matrix<double>>& x, const Matrix<double>& gout,
                        Matrix<double>* gin) {
        const ConvSpec& s = net.layer(i);
        WeightMap<double> gw(grad.data() + net.weight_offset(i), s.out_channels, s.patch_size());
        Eigen::Map<Vector<double>> gb(grad.data() + net.bias_offset(i), s.out_channels);
        conv_backward_item<double>(x, rows, cols, s, weights_of(net, p, i), gout, gw, gb, gin);
    };

    const auto blocks = net.spec().blocks();
    Matrix<double> gx = Matrix<double>::Zero(blocks.back().branch_width, input.cols());
    backward(net.layer_count() - 1, cache.blocks.back().output, g, &gx);
    for (std::size_t b = blocks.size(); b-- > 0;)
    {
        const BlockCache& bc = cache.blocks[b];
        const int n = blocks[b].branch_width;
        if (masks && static_cast<int>(b) == net.spec().dropout_after)
            gx = gx.cwiseProduct(masks->scale);
        const Matrix<double> gh = (bc.hidden.array() > 0.0).select(gx, 0.0);
        Matrix<double> gconcat = Matrix<double>::Zero(4 * n, input.cols());
        backward(5 * b + 4, bc.concat, gh, &gconcat);
        gconcat = (bc.concat.array() > 0.0).select(gconcat, 0.0);

        const Eigen::Ref<const Matrix<double>> x =
            b == 0 ? input : Eigen::Ref<const Matrix<double>>(cache.blocks[b - 1].output);
        Matrix<double> gin;
        if (b > 0)
            gin = Matrix<double>::Zero(x.rows(), x.cols());
        for (int k = 0; k < 4; ++k)
        {
            const Matrix<double> gk = gconcat.middleRows(k * n, n);
            backward(5 * b + k, x, gk, b > 0 ? &gin : nullptr);
        }
        gx = std::move(gin);
    }
    return loss;
}

double gradient_check(const WeatherNet& net, const Tensor4<double>& input, const LabelMatrix& labels, double epsilon,
                      const LossOptions& options, std::optional<std::uint64_t> dropout_seed)
{
    if (input.batch() < 1)
        throw InvalidArgument("gradient check needs at least one item");
    if (labels.rows() != input.rows() || labels.cols() != input.cols())
        throw InvalidArgument("label shape does not match the input");
    const int rows = input.rows();
    const int cols = input.cols();
    std::vector<std::optional<DropoutMasks>> masks(static_cast<std::size_t>(input.batch()));
    if (dropout_seed && net.spec().dropout_after >= 0)
        for (int n = 0; n < input.batch(); ++n)
            masks[static_cast<std::size_t>(n)] = DropoutMasks::sample(
                net.spec().block_widths[static_cast<std::size_t>(net.spec().dropout_after)], input.plane(),
                net.spec().dropout_rate, hash_combine(*dropout_seed, static_cast<std::uint64_t>(n)));
    auto mask_of = [&](int n) {
        const auto& m = masks[static_cast<std::size_t>(n)];
        return m ? &*m : nullptr;
    };

    const double labeled = static_cast<double>(labeled_pixels(labels)) * input.batch();
    const double scale = options.reduction == LossReduction::Mean ? 1.0 / std::max(labeled, 1.0) : 1.0;

    Eigen::VectorXd analytic = Eigen::VectorXd::Zero(net.param_count());
    double loss = 0.0;
    for (int n = 0; n < input.batch(); ++n)
        loss += loss_and_gradient(net, input.item(n), rows, cols, labels, options, scale, mask_of(n), analytic);
    if (!std::isfinite(loss))
        throw NumericalError("gradient check: non-finite loss");

    Vector<double> p = net.params();
    auto total_loss = [&]() {
        double sum = 0.0;
        for (int n = 0; n < input.batch(); ++n)
            sum += loss_only(net, p, input.item(n), rows, cols, labels, options, scale, mask_of(n));
        return sum;
    };
    Eigen::VectorXd numeric(net.param_count());
    for (Eigen::Index i = 0; i < p.size(); ++i)
    {
        const double saved = p(i);
        p(i) = saved + epsilon;
        const double up = total_loss();
        p(i) = saved - epsilon;
        const double down = total_loss();
        p(i) = saved;
        numeric(i) = (up - down) / (2.0 * epsilon);
    }
    if (!numeric.allFinite())
        throw NumericalError("gradient check: non-finite finite-difference loss");

    double worst = 0.0;
    for (std::size_t i = 0; i < net.layer_count(); ++i)
    {
        const long w = net.layer(i).weight_count();
        const long b = net.layer(i).out_channels;
        for (auto [offset, size] : {std::pair{net.weight_offset(i), w}, std::pair{net.bias_offset(i), b}})
        {
            const double a = analytic.segment(offset, size).norm();
            const double d = numeric.segment(offset, size).norm();
            if (a + d == 0.0)
                continue;
            const double diff = (analytic.segment(offset, size) - numeric.segment(offset, size)).norm();
            worst = std::max(worst, diff / (a + d));
        }
    }
    return worst;
}

LabelImage predict_labels(const WeatherNet& net, const RangeImage& image)
{
    const Tensor4<float> z = net.logits(image);
    LabelImage out(image.rows(), image.cols());
    const auto item = z.item(0);
    for (int r = 0; r < image.rows(); ++r)
        for (int c = 0; c < image.cols(); ++c)
        {
            if (!image.has_return(r, c))
                continue;
            const Eigen::Index p = static_cast<Eigen::Index>(r) * image.cols() + c;
            Eigen::Index best = 0;
            item.col(p).maxCoeff(&best);
            out.codes(r, c) = static_cast<std::uint8_t>(best);
        }
    return out;
}

RangeImage remove_clutter(const RangeImage& image, const LabelImage& labels)
{
    if (labels.rows() != image.rows() || labels.cols() != image.cols())
        throw InvalidArgument("label image shape does not match the range image");
    RangeImage out = image;
    for (int r = 0; r < image.rows(); ++r)
        for (int c = 0; c < image.cols(); ++c)
            if (labels.at(r, c) != Label::Valid)
            {
                out.distance(r, c) = 0.0f;
                out.intensity(r, c) = 0.0f;
            }
    return out;
}

Denoised predict_and_denoise(const WeatherNet& net, const RangeImage& image)
{
    Denoised d;
    d.labels = predict_labels(net, image);
    d.image = remove_clutter(image, d.labels);
    return d;
}

} // namespace lidar_weather::nnet
