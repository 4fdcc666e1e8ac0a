#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pconet {

/// Raised whenever two shapes that must agree do not.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Rank 1..4 list of positive dimensions.
class Shape {
public:
    static constexpr std::size_t kMaxRank = 4;

    Shape() = default;
    Shape(std::initializer_list<std::size_t> dims);
    explicit Shape(std::span<const std::size_t> dims);

    std::size_t rank() const { return rank_; }
    std::size_t operator[](std::size_t axis) const;
    std::size_t elements() const;
    std::span<const std::size_t> dims() const { return {dims_.data(), rank_}; }

    /// Shape with `leading` prepended (e.g. a batch axis).
    Shape prepend(std::size_t leading) const;
    /// Shape with the first axis removed; requires rank >= 2.
    Shape drop_leading() const;

    std::string str() const;

    friend bool operator==(const Shape& a, const Shape& b);

private:
    std::array<std::size_t, kMaxRank> dims_{};
    std::size_t rank_ = 0;
};

/// NHWC view of a rank-4 shape.
struct Shape4 {
    std::size_t n, h, w, c;

    static Shape4 of(const Shape& s);
    Shape shape() const { return {n, h, w, c}; }
};

/// Dense row-major array. Storage length always equals the product of dims.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T{0});
    BasicTensor(Shape shape, std::vector<T> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.rank(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at(std::size_t n, std::size_t h, std::size_t w, std::size_t c);
    const T& at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) const;

    /// Same data under a new shape with the same element count.
    BasicTensor reshaped(Shape shape) const&;
    BasicTensor reshaped(Shape shape) &&;

    void fill(T value);

    template <typename U>
    BasicTensor<U> cast() const {
        BasicTensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

    bool all_finite() const;

    friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
        return a.shape_ == b.shape_ && a.data_ == b.data_;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace pconet
