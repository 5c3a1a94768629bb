#pragma once

#include <lidar_weather/nnet/tensor.hpp>

#include <span>

namespace lidar_weather::nnet
{

// Zero-padded ("SAME") 2D convolution with odd kernels and optional dilation.
struct ConvSpec
{
    int in_channels = 1;
    int out_channels = 1;
    int kernel_h = 1;
    int kernel_w = 1;
    int dilation_h = 1;
    int dilation_w = 1;

    void validate() const;
    int patch_size() const noexcept { return in_channels * kernel_h * kernel_w; }
    long weight_count() const noexcept { return static_cast<long>(out_channels) * patch_size(); }
    long param_count() const noexcept { return weight_count() + out_channels; }
    bool pointwise() const noexcept { return kernel_h == 1 && kernel_w == 1; }
};

// Weights are out_channels x (in_channels * kernel_h * kernel_w), row-major with
// kernel x fastest, then kernel y, then input channel.
template <typename Scalar>
using ConstWeightMap = Eigen::Map<const Matrix<Scalar>>;
template <typename Scalar>
using WeightMap = Eigen::Map<Matrix<Scalar>>;

// Unfolds one item (channels x rows*cols) into a patch matrix (patch_size x rows*cols).
template <typename Scalar>
void im2col(const Eigen::Ref<const Matrix<Scalar>>& item, int rows, int cols, const ConvSpec& spec,
            Matrix<Scalar>& patches);

// Adds the patch-space gradient back onto the item-space gradient.
template <typename Scalar>
void col2im_add(const Matrix<Scalar>& patches, int rows, int cols, const ConvSpec& spec,
                Eigen::Ref<Matrix<Scalar>> item);

// Single item forward: returns out_channels x rows*cols.
template <typename Scalar>
Matrix<Scalar> conv_forward_item(const Eigen::Ref<const Matrix<Scalar>>& item, int rows, int cols,
                                 const ConvSpec& spec, const ConstWeightMap<Scalar>& weights,
                                 const Eigen::Ref<const Vector<Scalar>>& bias);

// Single item backward. Accumulates into grad_weights / grad_bias; when grad_input is
// non-null, adds the input gradient to it.
template <typename Scalar>
void conv_backward_item(const Eigen::Ref<const Matrix<Scalar>>& item, int rows, int cols, const ConvSpec& spec,
                        const ConstWeightMap<Scalar>& weights, const Matrix<Scalar>& grad_output,
                        WeightMap<Scalar> grad_weights, Eigen::Ref<Vector<Scalar>> grad_bias,
                        Matrix<Scalar>* grad_input);

// Batched convolution over a tensor. weights/bias sized per ConvSpec.
template <typename Scalar>
Tensor4<Scalar> conv2d(const Tensor4<Scalar>& input, const ConvSpec& spec, std::span<const Scalar> weights,
                       std::span<const Scalar> bias);

} // namespace lidar_weather::nnet
