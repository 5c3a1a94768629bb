#pragma once

#include <lidar_weather/core.hpp>
#include <lidar_weather/nnet/conv.hpp>
#include <lidar_weather/nnet/tensor.hpp>

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace lidar_weather::nnet
{

// Four parallel branches (7x3, 3x3, dilated 3x3, 3x7), each c -> n, concatenated to 4n
// and reduced back to n by a 1x1 bottleneck. ReLU after every conv.
struct LiLaBlockSpec
{
    int in_channels = 0;
    int branch_width = 0;

    // 60cn + 4n^2 + 5n
    long param_count() const noexcept;
    std::array<ConvSpec, 5> convs() const;
};

struct WeatherNetSpec
{
    int in_channels = 2;
    std::vector<int> block_widths{32, 64, 96, 96, 64};
    int dropout_after = 3; // block index followed by dropout, -1 for none
    double dropout_rate = 0.5;
    int classes = kNumClasses;
    double distance_scale = 0.01; // distance channel = meters * distance_scale

    static WeatherNetSpec full();
    // Same topology with custom block widths; dropout after the second-to-last block.
    static WeatherNetSpec reduced(std::vector<int> widths);

    std::vector<LiLaBlockSpec> blocks() const;
    ConvSpec head() const;
    void validate() const;
    long param_count() const;
    bool operator==(const WeatherNetSpec&) const = default;
};

struct DropoutMasks;

// Parameters live in one flat vector in serialization order: blocks in topology order,
// each block's branches (7x3, 3x3, dilated 3x3, 3x7) then bottleneck, weights before bias;
// the 1x1 head last.
class WeatherNet
{
  public:
    explicit WeatherNet(WeatherNetSpec spec = WeatherNetSpec::full());

    const WeatherNetSpec& spec() const noexcept { return spec_; }
    long param_count() const noexcept { return static_cast<long>(params_.size()); }
    std::vector<long> block_param_counts() const; // one per block, then the head

    Eigen::VectorXd& params() noexcept { return params_; }
    const Eigen::VectorXd& params() const noexcept { return params_; }

    // Fan-in scaled uniform weights in [-sqrt(6/fan_in), sqrt(6/fan_in)], zero biases.
    void initialize(std::uint64_t seed);

    std::size_t layer_count() const noexcept { return layers_.size(); }
    const ConvSpec& layer(std::size_t i) const { return layers_.at(i); }
    long weight_offset(std::size_t i) const { return offsets_.at(i); }
    long bias_offset(std::size_t i) const { return offsets_.at(i) + layers_.at(i).weight_count(); }

    // Per-item forward. input is in_channels x rows*cols; returns classes x rows*cols logits.
    // With masks, dropout is applied (training mode); without, the net is deterministic.
    template <typename Scalar>
    Matrix<Scalar> forward(const Eigen::Ref<const Matrix<Scalar>>& input, int rows, int cols,
                           const Vector<Scalar>& params, const DropoutMasks* masks = nullptr) const;

    Tensor4<double> forward(const Tensor4<double>& input, bool train_mode = false, std::uint64_t dropout_seed = 0) const;
    Tensor4<float> forward(const Tensor4<float>& input) const;

    // Logits for a single frame, computed in single precision.
    Tensor4<float> logits(const RangeImage& image) const;

  private:
    WeatherNetSpec spec_;
    std::vector<ConvSpec> layers_;
    std::vector<long> offsets_;
    Eigen::VectorXd params_;
};

struct DropoutMasks
{
    // One inverted-dropout scale per element of the dropped block output (0 or 1/(1-rate)).
    Matrix<double> scale;

    static DropoutMasks sample(int channels, Eigen::Index plane, double rate, std::uint64_t seed);
};

// Closed-form LiLaBlock parameter count.
long lila_param_count(int in_channels, int branch_width) noexcept;

// Stacks distance (scaled) and intensity into a 1 x 2 x rows x cols tensor.
template <typename Scalar>
Tensor4<Scalar> make_input(const RangeImage& image, double distance_scale);

// Per-pixel softmax over channels of a classes x pixels matrix.
Matrix<double> softmax(const Matrix<double>& logits);

enum class LossReduction
{
    Mean, // divided by the number of labeled pixels in the batch
    Sum
};

struct LossOptions
{
    LossReduction reduction = LossReduction::Mean;
    std::array<double, kNumClasses> class_weights{1.0, 1.0, 1.0};
};

// Weighted softmax cross-entropy over labeled pixels of one item, multiplied by `scale`.
// Adds d(loss)/d(params) into `grad`. NoReturn pixels contribute nothing.
double loss_and_gradient(const WeatherNet& net, const Eigen::Ref<const Matrix<double>>& input, int rows, int cols,
                         const LabelMatrix& labels, const LossOptions& options, double scale,
                         const DropoutMasks* masks, Eigen::Ref<Eigen::VectorXd> grad);

// Same loss without the backward pass.
double loss_only(const WeatherNet& net, const Vector<double>& params, const Eigen::Ref<const Matrix<double>>& input,
                 int rows, int cols, const LabelMatrix& labels, const LossOptions& options, double scale,
                 const DropoutMasks* masks);

std::size_t labeled_pixels(const LabelMatrix& labels) noexcept;

// Central differences over every parameter; returns the largest per-group relative error
// ||analytic - numeric|| / (||analytic|| + ||numeric||) over all weight and bias groups
// (0 when both are zero).
double gradient_check(const WeatherNet& net, const Tensor4<double>& input, const LabelMatrix& labels,
                      double epsilon = 1e-5, const LossOptions& options = {},
                      std::optional<std::uint64_t> dropout_seed = std::nullopt);

// Per-pixel argmax. Empty input pixels are NoReturn.
LabelImage predict_labels(const WeatherNet& net, const RangeImage& image);

struct Denoised
{
    LabelImage labels;
    RangeImage image; // Rain/Fog pixels replaced by the no-return sentinel
};

Denoised predict_and_denoise(const WeatherNet& net, const RangeImage& image);

// Applies a label image: keeps Valid returns, clears everything else.
RangeImage remove_clutter(const RangeImage& image, const LabelImage& labels);

} // namespace lidar_weather::nnet
