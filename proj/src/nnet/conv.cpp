#include <lidar_weather/nnet/conv.hpp>

#include <algorithm>
#include <string>

namespace lidar_weather::nnet
{

void ConvSpec::validate() const
{
    if (in_channels < 1 || out_channels < 1)
        throw InvalidArgument("conv channel counts must be >= 1");
    if (kernel_h < 1 || kernel_w < 1 || kernel_h % 2 == 0 || kernel_w % 2 == 0)
        throw InvalidArgument("conv kernels must be odd, got " + std::to_string(kernel_h) + "x" +
                              std::to_string(kernel_w));
    if (dilation_h < 1 || dilation_w < 1)
        throw InvalidArgument("conv dilation must be >= 1");
}

namespace
{

// Visits every (patch row, dy, dx) of the unfolded layout.
template <typename Fn>
void for_each_tap(const ConvSpec& spec, Fn&& fn)
{
    const int half_h = spec.kernel_h / 2;
    const int half_w = spec.kernel_w / 2;
    int row = 0;
    for (int ci = 0; ci < spec.in_channels; ++ci)
        for (int ky = 0; ky < spec.kernel_h; ++ky)
            for (int kx = 0; kx < spec.kernel_w; ++kx, ++row)
                fn(row, ci, (ky - half_h) * spec.dilation_h, (kx - half_w) * spec.dilation_w);
}

} // namespace

template <typename Scalar>
void im2col(const Eigen::Ref<const Matrix<Scalar>>& item, int rows, int cols, const ConvSpec& spec,
            Matrix<Scalar>& patches)
{
    const Eigen::Index plane = static_cast<Eigen::Index>(rows) * cols;
    patches.setZero(spec.patch_size(), plane);
    for_each_tap(spec, [&](int prow, int ci, int dy, int dx) {
        Scalar* dst = patches.row(prow).data();
        const Scalar* src = item.row(ci).data();
        const int c0 = std::max(0, -dx);
        const int c1 = std::min(cols, cols - dx);
        if (c0 >= c1)
            return;
        for (int r = std::max(0, -dy); r < std::min(rows, rows - dy); ++r)
        {
            const Scalar* s = src + static_cast<Eigen::Index>(r + dy) * cols + dx;
            std::copy(s + c0, s + c1, dst + static_cast<Eigen::Index>(r) * cols + c0);
        }
    });
}

template <typename Scalar>
void col2im_add(const Matrix<Scalar>& patches, int rows, int cols, const ConvSpec& spec,
                Eigen::Ref<Matrix<Scalar>> item)
{
    for_each_tap(spec, [&](int prow, int ci, int dy, int dx) {
        const Scalar* src = patches.row(prow).data();
        Scalar* dst = item.row(ci).data();
        const int c0 = std::max(0, -dx);
        const int c1 = std::min(cols, cols - dx);
        if (c0 >= c1)
            return;
        for (int r = std::max(0, -dy); r < std::min(rows, rows - dy); ++r)
        {
            Scalar* d = dst + static_cast<Eigen::Index>(r + dy) * cols + dx;
            const Scalar* s = src + static_cast<Eigen::Index>(r) * cols;
            for (int c = c0; c < c1; ++c)
                d[c] += s[c];
        }
    });
}

template <typename Scalar>
Matrix<Scalar> conv_forward_item(const Eigen::Ref<const Matrix<Scalar>>& item, int rows, int cols,
                                 const ConvSpec& spec, const ConstWeightMap<Scalar>& weights,
                                 const Eigen::Ref<const Vector<Scalar>>& bias)
{
    if (item.rows() != spec.in_channels || item.cols() != static_cast<Eigen::Index>(rows) * cols)
        throw InvalidArgument("conv input has " + std::to_string(item.rows()) + " channels, expected " +
                              std::to_string(spec.in_channels));
    Matrix<Scalar> out(spec.out_channels, item.cols());
    if (spec.pointwise())
    {
        out.noalias() = weights * item;
    }
    else
    {
        Matrix<Scalar> patches;
        im2col<Scalar>(item, rows, cols, spec, patches);
        out.noalias() = weights * patches;
    }
    out.colwise() += bias;
    return out;
}

template <typename Scalar>
void conv_backward_item(const Eigen::Ref<const Matrix<Scalar>>& item, int rows, int cols, const ConvSpec& spec,
                        const ConstWeightMap<Scalar>& weights, const Matrix<Scalar>& grad_output,
                        WeightMap<Scalar> grad_weights, Eigen::Ref<Vector<Scalar>> grad_bias,
                        Matrix<Scalar>* grad_input)
{
    grad_bias += grad_output.rowwise().sum();
    if (spec.pointwise())
    {
        grad_weights.noalias() += grad_output * item.transpose();
        if (grad_input)
            grad_input->noalias() += weights.transpose() * grad_output;
        return;
    }
    Matrix<Scalar> patches;
    im2col<Scalar>(item, rows, cols, spec, patches);
    grad_weights.noalias() += grad_output * patches.transpose();
    if (grad_input)
    {
        patches.noalias() = weights.transpose() * grad_output;
        col2im_add<Scalar>(patches, rows, cols, spec, *grad_input);
    }
}

template <typename Scalar>
Tensor4<Scalar> conv2d(const Tensor4<Scalar>& input, const ConvSpec& spec, std::span<const Scalar> weights,
                       std::span<const Scalar> bias)
{
    spec.validate();
    if (input.channels() != spec.in_channels)
        throw InvalidArgument("conv2d input has " + std::to_string(input.channels()) + " channels, expected " +
                              std::to_string(spec.in_channels));
    if (static_cast<long>(weights.size()) != spec.weight_count() ||
        static_cast<int>(bias.size()) != spec.out_channels)
        throw InvalidArgument("conv2d weight or bias size does not match the ConvSpec");
    const ConstWeightMap<Scalar> w(weights.data(), spec.out_channels, spec.patch_size());
    const Eigen::Map<const Vector<Scalar>> b(bias.data(), spec.out_channels);
    Tensor4<Scalar> out(input.batch(), spec.out_channels, input.rows(), input.cols());
    for (int n = 0; n < input.batch(); ++n)
        out.item(n) = conv_forward_item<Scalar>(input.item(n), input.rows(), input.cols(), spec, w, b);
    return out;
}

#define LIDAR_WEATHER_INSTANTIATE_CONV(S)                                                                               \
    template void im2col<S>(const Eigen::Ref<const Matrix<S>>&, int, int, const ConvSpec&, Matrix<S>&);              \
    template void col2im_add<S>(const Matrix<S>&, int, int, const ConvSpec&, Eigen::Ref<Matrix<S>>);                 \
    template Matrix<S> conv_forward_item<S>(const Eigen::Ref<const Matrix<S>>&, int, int, const ConvSpec&,           \
                                            const ConstWeightMap<S>&, const Eigen::Ref<const Vector<S>>&);          \
    template void conv_backward_item<S>(const Eigen::Ref<const Matrix<S>>&, int, int, const ConvSpec&,               \
                                        const ConstWeightMap<S>&, const Matrix<S>&, WeightMap<S>,                    \
                                        Eigen::Ref<Vector<S>>, Matrix<S>*);                                          \
    template Tensor4<S> conv2d<S>(const Tensor4<S>&, const ConvSpec&, std::span<const S>, std::span<const S>);

LIDAR_WEATHER_INSTANTIATE_CONV(float)
LIDAR_WEATHER_INSTANTIATE_CONV(double)

#undef LIDAR_WEATHER_INSTANTIATE_CONV

} // namespace lidar_weather::nnet
