#pragma once

#include <lidar_weather/errors.hpp>

#include <Eigen/Core>

#include <string>

namespace lidar_weather::nnet
{

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Dense batch x channels x rows x cols tensor. Each batch item is stored as a
// channels x (rows*cols) row-major matrix, so one channel plane is one matrix row.
template <typename Scalar>
class Tensor4
{
  public:
    using ItemMap = Eigen::Map<Matrix<Scalar>>;
    using ConstItemMap = Eigen::Map<const Matrix<Scalar>>;

    Tensor4() = default;
    Tensor4(int batch, int channels, int rows, int cols)
        : batch_(batch), channels_(channels), rows_(rows), cols_(cols),
          data_(Vector<Scalar>::Zero(static_cast<Eigen::Index>(batch) * channels * rows * cols))
    {
        if (batch < 0 || channels < 0 || rows < 0 || cols < 0)
            throw InvalidArgument("negative tensor dimension");
    }

    int batch() const noexcept { return batch_; }
    int channels() const noexcept { return channels_; }
    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    Eigen::Index plane() const noexcept { return static_cast<Eigen::Index>(rows_) * cols_; }
    Eigen::Index size() const noexcept { return data_.size(); }

    Vector<Scalar>& data() noexcept { return data_; }
    const Vector<Scalar>& data() const noexcept { return data_; }

    Scalar& operator()(int n, int c, int r, int col) noexcept { return data_(index(n, c, r, col)); }
    Scalar operator()(int n, int c, int r, int col) const noexcept { return data_(index(n, c, r, col)); }

    ItemMap item(int n) noexcept { return ItemMap(data_.data() + n * channels_ * plane(), channels_, plane()); }
    ConstItemMap item(int n) const noexcept
    {
        return ConstItemMap(data_.data() + n * channels_ * plane(), channels_, plane());
    }

    template <typename Other>
    Tensor4<Other> cast() const
    {
        Tensor4<Other> out(batch_, channels_, rows_, cols_);
        out.data() = data_.template cast<Other>();
        return out;
    }

    void require_finite(const std::string& where) const
    {
        if (!data_.allFinite())
            throw NumericalError(where + ": non-finite tensor value");
    }

  private:
    Eigen::Index index(int n, int c, int r, int col) const noexcept
    {
        return ((static_cast<Eigen::Index>(n) * channels_ + c) * rows_ + r) * cols_ + col;
    }

    int batch_ = 0;
    int channels_ = 0;
    int rows_ = 0;
    int cols_ = 0;
    Vector<Scalar> data_;
};

} // namespace lidar_weather::nnet
