#include <lidar_weather/nnet/adam.hpp>
#include <lidar_weather/nnet/checkpoint.hpp>
#include <lidar_weather/nnet/conv.hpp>
#include <lidar_weather/nnet/weathernet.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace lidar_weather;
using namespace lidar_weather::nnet;

namespace
{

Tensor4<double> one_hot(int rows, int cols, int r, int c)
{
    Tensor4<double> t(1, 1, rows, cols);
    t(0, 0, r, c) = 1.0;
    return t;
}

Tensor4<double> random_tensor(std::mt19937_64& gen, int b, int ch, int rows, int cols)
{
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor4<double> t(b, ch, rows, cols);
    for (Eigen::Index k = 0; k < t.size(); ++k)
        t.data()(k) = n(gen);
    return t;
}

LabelMatrix random_labels(std::mt19937_64& gen, int rows, int cols)
{
    std::uniform_int_distribution<int> u(0, 4);
    LabelMatrix l(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
        {
            const int v = u(gen);
            l(r, c) = v >= 3 ? code(Label::NoReturn) : static_cast<std::uint8_t>(v);
        }
    l(0, 0) = code(Label::Valid);
    return l;
}

// Direct zero-padded convolution, independent of the im2col path.
Tensor4<double> naive_conv(const Tensor4<double>& in, const ConvSpec& s, const std::vector<double>& w,
                           const std::vector<double>& b)
{
    Tensor4<double> out(in.batch(), s.out_channels, in.rows(), in.cols());
    for (int n = 0; n < in.batch(); ++n)
        for (int o = 0; o < s.out_channels; ++o)
            for (int y = 0; y < in.rows(); ++y)
                for (int x = 0; x < in.cols(); ++x)
                {
                    double acc = b[static_cast<std::size_t>(o)];
                    for (int i = 0; i < s.in_channels; ++i)
                        for (int ky = 0; ky < s.kernel_h; ++ky)
                            for (int kx = 0; kx < s.kernel_w; ++kx)
                            {
                                const int yy = y + (ky - s.kernel_h / 2) * s.dilation_h;
                                const int xx = x + (kx - s.kernel_w / 2) * s.dilation_w;
                                if (yy < 0 || yy >= in.rows() || xx < 0 || xx >= in.cols())
                                    continue;
                                const auto wi = ((static_cast<std::size_t>(o) * s.in_channels + i) * s.kernel_h + ky) *
                                                    s.kernel_w + kx;
                                acc += w[wi] * in(n, i, yy, xx);
                            }
                    out(n, o, y, x) = acc;
                }
    return out;
}

RangeImage random_image(std::mt19937_64& gen, int rows, int cols)
{
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    RangeImage img(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            if (u(gen) < 0.8f)
            {
                img.distance(r, c) = 1.0f + 60.0f * u(gen);
                img.intensity(r, c) = u(gen);
            }
    return img;
}

} // namespace

TEST(Conv, IdentityPointwise)
{
    std::mt19937_64 gen(1);
    const Tensor4<double> in = random_tensor(gen, 2, 3, 4, 5);
    const ConvSpec s{3, 3, 1, 1, 1, 1};
    const std::vector<double> w{1, 0, 0, 0, 1, 0, 0, 0, 1};
    const std::vector<double> b(3, 0.0);
    EXPECT_EQ(conv2d<double>(in, s, w, b).data(), in.data());
}

TEST(Conv, OnesKernelPlateau)
{
    const ConvSpec s{1, 1, 3, 3, 1, 1};
    const std::vector<double> w(9, 1.0), b{0.0};
    const Tensor4<double> out = conv2d<double>(one_hot(7, 7, 3, 3), s, w, b);
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 7; ++c)
            EXPECT_EQ(out(0, 0, r, c), (std::abs(r - 3) <= 1 && std::abs(c - 3) <= 1) ? 1.0 : 0.0);
}

TEST(Conv, DilatedTaps)
{
    const ConvSpec s{1, 1, 3, 3, 2, 2};
    const std::vector<double> w(9, 1.0), b{0.0};
    const Tensor4<double> out = conv2d<double>(one_hot(9, 9, 4, 4), s, w, b);
    for (int r = 0; r < 9; ++r)
        for (int c = 0; c < 9; ++c)
        {
            const bool tap = (r == 2 || r == 4 || r == 6) && (c == 2 || c == 4 || c == 6);
            EXPECT_EQ(out(0, 0, r, c), tap ? 1.0 : 0.0) << r << "," << c;
        }
}

TEST(Conv, MatchesNaiveConvolution)
{
    std::mt19937_64 gen(2);
    std::normal_distribution<double> n(0, 1);
    for (const ConvSpec s : {ConvSpec{2, 3, 7, 3, 1, 1}, ConvSpec{3, 2, 3, 3, 2, 2}, ConvSpec{2, 2, 3, 7, 1, 1},
                             ConvSpec{4, 3, 1, 1, 1, 1}, ConvSpec{1, 2, 5, 3, 3, 1}})
    {
        const Tensor4<double> in = random_tensor(gen, 2, s.in_channels, 6, 9);
        std::vector<double> w(static_cast<std::size_t>(s.weight_count())), b(static_cast<std::size_t>(s.out_channels));
        for (auto& v : w)
            v = n(gen);
        for (auto& v : b)
            v = n(gen);
        const Tensor4<double> got = conv2d<double>(in, s, w, b);
        const Tensor4<double> want = naive_conv(in, s, w, b);
        EXPECT_LT((got.data() - want.data()).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Conv, Errors)
{
    EXPECT_THROW((ConvSpec{1, 1, 2, 3, 1, 1}.validate()), InvalidArgument);
    EXPECT_THROW((ConvSpec{1, 1, 3, 3, 0, 1}.validate()), InvalidArgument);
    const ConvSpec s{2, 1, 3, 3, 1, 1};
    const std::vector<double> w(18, 0.0), b{0.0};
    EXPECT_THROW(conv2d<double>(Tensor4<double>(1, 3, 4, 4), s, w, b), InvalidArgument);
    EXPECT_THROW(conv2d<double>(Tensor4<double>(1, 2, 4, 4), s, std::span<const double>(w).first(5), b),
                 InvalidArgument);
}

TEST(Conv, PointwiseQuadraticLossClosedForm)
{
    std::mt19937_64 gen(3);
    const int rows = 4, cols = 6;
    const ConvSpec s{3, 2, 1, 1, 1, 1};
    const Tensor4<double> x = random_tensor(gen, 1, 3, rows, cols);
    const Tensor4<double> t = random_tensor(gen, 1, 2, rows, cols);
    Matrix<double> w(2, 3);
    w << 0.4, -1.2, 0.7, 0.9, 0.1, -0.3;
    Vector<double> b(2);
    b << 0.3, -0.7;

    const Matrix<double> xi = x.item(0);
    const Matrix<double> y = conv_forward_item<double>(xi, rows, cols, s, ConstWeightMap<double>(w.data(), 2, 3), b);
    const Matrix<double> dy = y - Matrix<double>(t.item(0));

    Matrix<double> gw = Matrix<double>::Zero(2, 3);
    Vector<double> gb = Vector<double>::Zero(2);
    Matrix<double> gx = Matrix<double>::Zero(3, rows * cols);
    conv_backward_item<double>(xi, rows, cols, s, ConstWeightMap<double>(w.data(), 2, 3), dy,
                               WeightMap<double>(gw.data(), 2, 3), gb, &gx);

    // L = 0.5 ||W x + b - t||^2: dW = (y - t) x^T, db = row sums, dx = W^T (y - t).
    EXPECT_LT((gw - dy * xi.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((gb - dy.rowwise().sum()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LT((gx - w.transpose() * dy).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(LiLaBlock, ParameterCounts)
{
    EXPECT_EQ(lila_param_count(2, 32), 8096);
    EXPECT_EQ(lila_param_count(32, 64), 139584);
    EXPECT_EQ(lila_param_count(64, 96), 405984);
    EXPECT_EQ(lila_param_count(96, 96), 590304);
    EXPECT_EQ(lila_param_count(96, 64), 385344);
    for (int c : {1, 5, 17})
        for (int n : {1, 4, 33})
        {
            const LiLaBlockSpec b{c, n};
            long sum = 0;
            for (const ConvSpec& s : b.convs())
                sum += s.param_count();
            EXPECT_EQ(sum, 60L * c * n + 4L * n * n + 5L * n);
            EXPECT_EQ(b.param_count(), sum);
        }
}

TEST(WeatherNetModel, FullParameterCount)
{
    const WeatherNet net;
    EXPECT_EQ(net.param_count(), 1529507);
    const std::vector<long> expected{8096, 139584, 405984, 590304, 385344, 195};
    EXPECT_EQ(net.block_param_counts(), expected);
    EXPECT_EQ(WeatherNetSpec::full().param_count(), 1529507);
    EXPECT_EQ(net.layer_count(), 26u);
}

TEST(WeatherNetModel, SpecValidation)
{
    WeatherNetSpec s;
    s.block_widths.clear();
    EXPECT_THROW(s.validate(), InvalidArgument);
    s = WeatherNetSpec::full();
    s.dropout_rate = 1.0;
    EXPECT_THROW(s.validate(), InvalidArgument);
    s = WeatherNetSpec::full();
    s.dropout_after = 9;
    EXPECT_THROW(s.validate(), InvalidArgument);
    EXPECT_EQ(WeatherNetSpec::reduced({4, 4, 4}).dropout_after, 1);
}

TEST(WeatherNetModel, ZeroParamsGiveZeroLogits)
{
    std::mt19937_64 gen(4);
    WeatherNet net(WeatherNetSpec::reduced({3, 3}));
    net.params().setZero();
    const Tensor4<double> out = net.forward(random_tensor(gen, 1, 2, 5, 7));
    EXPECT_EQ(out.data().cwiseAbs().maxCoeff(), 0.0);
}

TEST(WeatherNetModel, ShapesAndDeterminism)
{
    std::mt19937_64 gen(5);
    WeatherNet net(WeatherNetSpec::reduced({4, 4}));
    net.initialize(7);
    for (int cols : {400, 1800})
    {
        const RangeImage img = random_image(gen, 32, cols);
        const Tensor4<float> a = net.logits(img);
        EXPECT_EQ(a.channels(), 3);
        EXPECT_EQ(a.rows(), 32);
        EXPECT_EQ(a.cols(), cols);
        EXPECT_EQ(a.data(), net.logits(img).data());
    }
    const Tensor4<double> in = random_tensor(gen, 1, 2, 6, 8);
    EXPECT_EQ(net.forward(in).data(), net.forward(in).data());
    EXPECT_EQ(net.forward(in, true, 3).data(), net.forward(in, true, 3).data());
    EXPECT_NE(net.forward(in, true, 3).data(), net.forward(in).data());
    EXPECT_THROW(net.forward(Tensor4<double>(1, 3, 4, 4)), InvalidArgument);
}

TEST(WeatherNetModel, FloatMatchesDouble)
{
    std::mt19937_64 gen(6);
    WeatherNet net(WeatherNetSpec::reduced({6, 6, 6}));
    net.initialize(2);
    const RangeImage img = random_image(gen, 8, 30);
    const Tensor4<double> d = net.forward(make_input<double>(img, net.spec().distance_scale));
    const Tensor4<float> f = net.logits(img);
    EXPECT_LT((d.data().cast<float>() - f.data()).cwiseAbs().maxCoeff(), 1e-4f);
}

TEST(WeatherNetModel, FullyConvolutionalTileConsistency)
{
    // Interior pixels of a wide frame see the same receptive field as in a narrow tile.
    std::mt19937_64 gen(7);
    WeatherNet net(WeatherNetSpec::reduced({4, 4}));
    net.initialize(3);
    const RangeImage wide = random_image(gen, 32, 1800);
    const RangeImage tile = crop_fov(wide, 700, 100);
    const Tensor4<float> lw = net.logits(wide);
    const Tensor4<float> lt = net.logits(tile);
    for (int r = 0; r < 32; ++r)
        for (int c = 20; c < 80; ++c)
            for (int k = 0; k < 3; ++k)
                ASSERT_NEAR(lt(0, k, r, c), lw(0, k, r, 700 + c), 1e-4f);
}

TEST(Softmax, RowsSumToOne)
{
    std::mt19937_64 gen(8);
    Matrix<double> logits = random_tensor(gen, 1, 3, 1, 500).item(0);
    logits *= 30.0;
    const Matrix<double> p = softmax(logits);
    for (Eigen::Index k = 0; k < p.cols(); ++k)
        EXPECT_NEAR(p.col(k).sum(), 1.0, 1e-6);
    EXPECT_GE(p.minCoeff(), 0.0);
}

TEST(Predict, ArgmaxShiftInvariant)
{
    std::mt19937_64 gen(9);
    WeatherNet net(WeatherNetSpec::reduced({3, 3}));
    net.initialize(4);
    const RangeImage img = random_image(gen, 6, 12);
    const LabelImage before = predict_labels(net, img);
    // Adding a constant to every head bias shifts all three logits of each pixel equally.
    const long b = net.bias_offset(net.layer_count() - 1);
    net.params().segment(b, 3).array() += 17.5;
    EXPECT_EQ(predict_labels(net, img).codes, before.codes);
    EXPECT_TRUE(before.consistent_with(img));
}

TEST(Predict, DenoiseRules)
{
    std::mt19937_64 gen(10);
    WeatherNet net(WeatherNetSpec::reduced({3, 3}));
    net.params().setZero();
    const long b = net.bias_offset(net.layer_count() - 1);
    const RangeImage img = random_image(gen, 4, 9);
    net.params()(b) = 5.0; // Valid wins everywhere
    Denoised d = predict_and_denoise(net, img);
    EXPECT_EQ(d.image.distance, img.distance);
    EXPECT_EQ(d.image.intensity, img.intensity);
    net.params()(b) = 0.0;
    net.params()(b + 2) = 5.0; // Fog wins everywhere
    d = predict_and_denoise(net, img);
    EXPECT_EQ(d.image.return_count(), 0u);
    EXPECT_EQ(d.labels.count(Label::Fog), img.return_count());
}

// Zero-initialized biases put dead pixels exactly on a ReLU kink; move off it.
void jitter(WeatherNet& net, std::mt19937_64& gen)
{
    std::normal_distribution<double> n(0.0, 0.05);
    for (Eigen::Index k = 0; k < net.params().size(); ++k)
        net.params()(k) += n(gen);
}

class GradientCheck : public ::testing::TestWithParam<int>
{
};

TEST_P(GradientCheck, ReducedNetSmallInput)
{
    const auto seed = static_cast<std::uint64_t>(GetParam());
    std::mt19937_64 gen(seed);
    WeatherNet net(WeatherNetSpec::reduced({2, 2}));
    net.initialize(seed);
    jitter(net, gen);
    const Tensor4<double> in = random_tensor(gen, 1, 2, 8, 8);
    const LabelMatrix labels = random_labels(gen, 8, 8);
    EXPECT_LT(gradient_check(net, in, labels, 1e-5), 1e-4);
}

TEST_P(GradientCheck, WithDropoutAndWeights)
{
    const auto seed = static_cast<std::uint64_t>(GetParam());
    std::mt19937_64 gen(seed + 100);
    WeatherNet net(WeatherNetSpec::reduced({2, 3, 2}));
    net.initialize(seed + 100);
    jitter(net, gen);
    LossOptions opt;
    opt.class_weights = {1.0, 3.0, 0.5};
    opt.reduction = LossReduction::Sum;
    const Tensor4<double> in = random_tensor(gen, 1, 2, 6, 7);
    EXPECT_LT(gradient_check(net, in, random_labels(gen, 6, 7), 1e-5, opt, seed), 1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, GradientCheck, ::testing::Range(1, 11));

TEST(Loss, AllNoReturnGivesZeroGradient)
{
    std::mt19937_64 gen(11);
    WeatherNet net(WeatherNetSpec::reduced({2, 2}));
    net.initialize(1);
    const Tensor4<double> in = random_tensor(gen, 1, 2, 5, 5);
    const LabelMatrix labels = LabelMatrix::Constant(5, 5, code(Label::NoReturn));
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.param_count());
    const double loss = loss_and_gradient(net, in.item(0), 5, 5, labels, {}, 1.0, nullptr, grad);
    EXPECT_EQ(loss, 0.0);
    EXPECT_EQ(grad.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(gradient_check(net, in, labels), 0.0);
}

TEST(Loss, MatchesDirectCrossEntropy)
{
    std::mt19937_64 gen(12);
    WeatherNet net(WeatherNetSpec::reduced({3, 3}));
    net.initialize(2);
    const Tensor4<double> in = random_tensor(gen, 1, 2, 4, 6);
    const LabelMatrix labels = random_labels(gen, 4, 6);
    LossOptions opt;
    opt.class_weights = {0.5, 2.0, 3.0};
    const Matrix<double> p = softmax(Matrix<double>(net.forward(in).item(0)));
    double expected = 0;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 6; ++c)
            if (labels(r, c) != code(Label::NoReturn))
                expected -= opt.class_weights[labels(r, c)] * std::log(p(labels(r, c), r * 6 + c));
    const double got = loss_only(net, net.params(), in.item(0), 4, 6, labels, opt, 0.25, nullptr);
    EXPECT_NEAR(got, 0.25 * expected, 1e-12);
}

TEST(Dropout, MaskValuesAndRate)
{
    const DropoutMasks m = DropoutMasks::sample(8, 1000, 0.5, 42);
    ASSERT_EQ(m.scale.rows(), 8);
    ASSERT_EQ(m.scale.cols(), 1000);
    const auto kept = (m.scale.array() == 2.0).count();
    const auto dropped = (m.scale.array() == 0.0).count();
    EXPECT_EQ(kept + dropped, 8000);
    EXPECT_NEAR(static_cast<double>(kept) / 8000.0, 0.5, 0.03);
    EXPECT_EQ(DropoutMasks::sample(8, 1000, 0.5, 42).scale, m.scale);
}

TEST(Adam, FirstStepMagnitudeIsAlpha)
{
    AdamConfig cfg;
    cfg.alpha = 1e-3;
    AdamState st(3, cfg);
    Eigen::VectorXd p = Eigen::VectorXd::Zero(3);
    Eigen::VectorXd g(3);
    g << 2.0, -0.5, 1e-3;
    adam_step(p, g, st);
    EXPECT_EQ(st.step, 1);
    for (int k = 0; k < 3; ++k)
        EXPECT_NEAR(std::abs(p(k)), 1e-3, 1e-3 * 1e-3);
    EXPECT_LT(p(0), 0.0);
    EXPECT_GT(p(1), 0.0);
}

TEST(Adam, ZeroGradientDecaysMoments)
{
    AdamState st(2, AdamConfig{});
    Eigen::VectorXd p = Eigen::VectorXd::Ones(2);
    adam_step(p, Eigen::VectorXd::Constant(2, 1.0), st);
    const Eigen::VectorXd m = st.m, v = st.v, after_first = p;
    adam_step(p, Eigen::VectorXd::Zero(2), st);
    EXPECT_NEAR(st.m(0), 0.9 * m(0), 1e-15);
    EXPECT_NEAR(st.v(0), 0.999 * v(0), 1e-15);
    EXPECT_EQ(st.step, 2);
    // With zero gradient the update is driven only by the decayed first moment.
    EXPECT_LT(p(0), after_first(0));
    AdamState fresh(2, AdamConfig{});
    Eigen::VectorXd q = Eigen::VectorXd::Ones(2);
    adam_step(q, Eigen::VectorXd::Zero(2), fresh);
    EXPECT_EQ(q, Eigen::VectorXd::Ones(2));
}

TEST(Adam, MatchesReferenceFormula)
{
    AdamConfig cfg;
    cfg.alpha = 0.01;
    AdamState st(1, cfg);
    Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 0.5);
    double m = 0, v = 0, x = 0.5;
    for (int t = 1; t <= 5; ++t)
    {
        const double g = 0.3 * t - 1.0;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1 - std::pow(0.9, t));
        const double vh = v / (1 - std::pow(0.999, t));
        x -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        adam_step(p, Eigen::VectorXd::Constant(1, g), st);
        EXPECT_NEAR(p(0), x, 1e-14);
    }
}

TEST(Adam, EpochDecayAndErrors)
{
    AdamState st(2, AdamConfig{});
    EXPECT_EQ(st.learning_rate, 4e-8);
    st.end_epoch();
    EXPECT_NEAR(st.learning_rate, 0.9 * 4e-8, 1e-22);
    Eigen::VectorXd p = Eigen::VectorXd::Ones(2);
    Eigen::VectorXd g(2);
    g << 1.0, std::nan("");
    EXPECT_THROW(adam_step(p, g, st), NumericalError);
    EXPECT_EQ(st.step, 0);
    EXPECT_EQ(p, Eigen::VectorXd::Ones(2));
    EXPECT_THROW(adam_step(p, Eigen::VectorXd::Zero(3), st), InvalidArgument);
}

TEST(CheckpointFormat, RoundtripBitExact)
{
    WeatherNet net(WeatherNetSpec::reduced({5, 7, 3}));
    net.initialize(99);
    Checkpoint c{net.spec(), 4, 1234, net.params()};
    const auto bytes = encode_checkpoint(c);
    const Checkpoint d = decode_checkpoint(bytes);
    EXPECT_EQ(d.spec, net.spec());
    EXPECT_EQ(d.epoch, 4);
    EXPECT_EQ(d.seed, 1234u);
    EXPECT_EQ(d.params, net.params());
    EXPECT_EQ(d.network().params(), net.params());
    EXPECT_EQ(bytes.size() - static_cast<std::size_t>(std::find(bytes.begin(), bytes.end(), '\n') - bytes.begin()) - 1,
              static_cast<std::size_t>(net.param_count()) * 8);
}

TEST(CheckpointFormat, CorruptInputs)
{
    WeatherNet net(WeatherNetSpec::reduced({2, 2}));
    const auto bytes = encode_checkpoint({net.spec(), 1, 0, net.params()});
    auto truncated = bytes;
    truncated.pop_back();
    EXPECT_THROW(decode_checkpoint(truncated), FormatError);
    std::vector<std::uint8_t> junk{'{', '\n'};
    EXPECT_THROW(decode_checkpoint(junk), FormatError);
    EXPECT_THROW(decode_checkpoint(std::vector<std::uint8_t>{}), FormatError);
    EXPECT_THROW(load_checkpoint("/nonexistent/x.ckpt"), Error);
}

TEST(CheckpointFormat, SpecJson)
{
    WeatherNetSpec s = WeatherNetSpec::reduced({8, 16});
    s.dropout_rate = 0.25;
    EXPECT_EQ(spec_from_json(spec_to_json(s)), s);
    EXPECT_EQ(spec_from_json(spec_to_json(WeatherNetSpec::full())), WeatherNetSpec::full());
}
