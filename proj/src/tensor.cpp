#include "optspa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "optspa/errors.hpp"

namespace optspa {

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, float fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw invalid_input_error("tensor payload has " + std::to_string(data_.size()) +
                                  " values, shape needs " + std::to_string(rows_ * cols_));
    }
}

Tensor2D Tensor2D::identity(std::size_t n) {
    Tensor2D t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0f;
    return t;
}

Tensor2D Tensor2D::row_vector(std::vector<float> values) {
    const std::size_t n = values.size();
    return Tensor2D(1, n, std::move(values));
}

Tensor2D Tensor2D::transposed() const {
    Tensor2D t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
    if (a.cols() != b.rows()) {
        throw invalid_input_error("matmul: inner dimensions differ (" + std::to_string(a.cols()) +
                                  " vs " + std::to_string(b.rows()) + ")");
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor2D out(m, n);
    std::vector<double> acc(n);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(i, p);
            if (av == 0.0) continue;
            const auto brow = b.row(p);
            for (std::size_t j = 0; j < n; ++j) acc[j] += av * brow[j];
        }
        for (std::size_t j = 0; j < n; ++j) out(i, j) = static_cast<float>(acc[j]);
    }
    return out;
}

void vec_matmul(std::span<const float> x, const Tensor2D& w, std::span<float> y) {
    if (x.size() != w.rows() || y.size() != w.cols()) {
        throw invalid_input_error("vec_matmul: shape mismatch");
    }
    thread_local std::vector<double> acc;
    acc.assign(w.cols(), 0.0);
    for (std::size_t p = 0; p < x.size(); ++p) {
        const double xv = x[p];
        if (xv == 0.0) continue;
        const auto wrow = w.row(p);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += xv * wrow[j];
    }
    for (std::size_t j = 0; j < acc.size(); ++j) y[j] = static_cast<float>(acc[j]);
}

std::vector<double> axis_l2_norms(const Tensor2D& t, Axis axis) {
    if (t.empty()) throw invalid_input_error("axis_l2_norms: empty tensor");
    std::vector<double> sq(axis == Axis::row ? t.rows() : t.cols(), 0.0);
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.cols(); ++c) {
            const double v = t(r, c);
            sq[axis == Axis::row ? r : c] += v * v;
        }
    }
    for (auto& s : sq) s = std::sqrt(s);
    return sq;
}

std::vector<double> softmax(std::span<const double> v) {
    std::vector<double> out(v.size());
    if (v.empty()) return out;
    const double mx = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        sum += out[i];
    }
    for (auto& o : out) o /= sum;
    return out;
}

std::vector<double> softmax(std::span<const float> v) {
    std::vector<double> wide(v.begin(), v.end());
    return softmax(std::span<const double>(wide));
}

namespace {

template <typename T>
std::vector<std::size_t> argsort_impl(std::span<const T> v, SortOrder order) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (order == SortOrder::asc) {
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    } else {
        std::stable_sort(idx.begin(), idx.end(),
                         [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
    }
    return idx;
}

}  // namespace

std::vector<std::size_t> stable_argsort(std::span<const double> v, SortOrder order) {
    return argsort_impl(v, order);
}

std::vector<std::size_t> stable_argsort(std::span<const float> v, SortOrder order) {
    return argsort_impl(v, order);
}

}  // namespace optspa
