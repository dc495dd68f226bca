#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "txlr/error.hpp"

namespace txlr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major tensor. Most of the library works on rank-2 tensors
/// (rows = time steps); rank-1 tensors are used for biases and gains.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T{0})
        : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
        if (values_.size() != shape_size(shape_)) {
            throw ShapeError("tensor: " + std::to_string(values_.size()) + " values for shape " +
                             shape_str(shape_));
        }
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, T fill = T{0}) {
        return Tensor({rows, cols}, fill);
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    // Rank-1 tensors behave as a single row.
    std::size_t rows() const noexcept {
        if (shape_.empty()) return 0;
        return shape_.size() == 1 ? 1 : shape_[0];
    }
    std::size_t cols() const noexcept {
        if (shape_.empty()) return 0;
        return shape_.size() == 1 ? shape_[0] : values_.size() / shape_[0];
    }

    std::span<T> data() noexcept { return values_; }
    std::span<const T> data() const noexcept { return values_; }
    std::vector<T>& values() noexcept { return values_; }
    const std::vector<T>& values() const noexcept { return values_; }

    T& operator[](std::size_t i) noexcept { return values_[i]; }
    const T& operator[](std::size_t i) const noexcept { return values_[i]; }

    T& at(std::size_t r, std::size_t c) noexcept { return values_[r * cols() + c]; }
    const T& at(std::size_t r, std::size_t c) const noexcept { return values_[r * cols() + c]; }

    std::span<T> row(std::size_t r) noexcept { return std::span<T>(values_).subspan(r * cols(), cols()); }
    std::span<const T> row(std::size_t r) const noexcept {
        return std::span<const T>(values_).subspan(r * cols(), cols());
    }

    void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

    bool all_finite() const {
        return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    Tensor<U> cast() const {
        return Tensor<U>(shape_, std::vector<U>(values_.begin(), values_.end()));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    Shape shape_;
    std::vector<T> values_;
};

}  // namespace txlr
