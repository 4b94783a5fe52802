#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace optspa {

// Dense row-major 2-D float tensor. Vectors are stored as 1 x n.
class Tensor2D {
  public:
    Tensor2D() = default;
    Tensor2D(std::size_t rows, std::size_t cols, float fill = 0.0f);
    Tensor2D(std::size_t rows, std::size_t cols, std::vector<float> data);

    static Tensor2D identity(std::size_t n);
    static Tensor2D row_vector(std::vector<float> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t numel() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    float& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    float operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<float> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    Tensor2D transposed() const;

    // Bitwise comparison of shape and payload.
    friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

enum class Axis { row, col };
enum class SortOrder { asc, desc };

// Standard matrix product with double accumulation in fixed k order.
Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);

// y = x * W for a single row vector x (length W.rows()). Same summation order as matmul.
void vec_matmul(std::span<const float> x, const Tensor2D& w, std::span<float> y);

// L2 norm of every row (axis::row) or every column (axis::col).
std::vector<double> axis_l2_norms(const Tensor2D& t, Axis axis);

// Max-shifted softmax, computed in double.
std::vector<double> softmax(std::span<const double> v);
std::vector<double> softmax(std::span<const float> v);

// Permutation that sorts v; equal values keep their original relative order.
std::vector<std::size_t> stable_argsort(std::span<const double> v, SortOrder order);
std::vector<std::size_t> stable_argsort(std::span<const float> v, SortOrder order);

}  // namespace optspa
