#include "pconet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pconet {

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) {
    if (dims.empty() || dims.size() > kMaxRank)
        throw ShapeError("tensor rank must be between 1 and 4, got " + std::to_string(dims.size()));
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (dims[i] == 0) throw ShapeError("tensor dims must be >= 1 (axis " + std::to_string(i) + " is 0)");
        dims_[i] = dims[i];
    }
    rank_ = dims.size();
}

std::size_t Shape::operator[](std::size_t axis) const {
    if (axis >= rank_) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + str());
    return dims_[axis];
}

std::size_t Shape::elements() const {
    if (rank_ == 0) return 0;
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
    return n;
}

Shape Shape::prepend(std::size_t leading) const {
    std::array<std::size_t, kMaxRank + 1> d{};
    d[0] = leading;
    for (std::size_t i = 0; i < rank_; ++i) d[i + 1] = dims_[i];
    return Shape(std::span<const std::size_t>(d.data(), rank_ + 1));
}

Shape Shape::drop_leading() const {
    if (rank_ < 2) throw ShapeError("cannot drop the leading axis of " + str());
    return Shape(std::span<const std::size_t>(dims_.data() + 1, rank_ - 1));
}

std::string Shape::str() const {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < rank_; ++i) os << (i ? "," : "") << dims_[i];
    os << ')';
    return os.str();
}

bool operator==(const Shape& a, const Shape& b) {
    if (a.rank_ != b.rank_) return false;
    for (std::size_t i = 0; i < a.rank_; ++i)
        if (a.dims_[i] != b.dims_[i]) return false;
    return true;
}

Shape4 Shape4::of(const Shape& s) {
    if (s.rank() != 4) throw ShapeError("expected an NHWC rank-4 tensor, got " + s.str());
    return {s[0], s[1], s[2], s[3]};
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape), data_(shape.elements(), fill) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.elements())
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_.str());
}

template <typename T>
T& BasicTensor<T>::at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
    return data_[((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
}

template <typename T>
const T& BasicTensor<T>::at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) const {
    return data_[((n * shape_[1] + h) * shape_[2] + w) * shape_[3] + c];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const& {
    return BasicTensor(*this).reshaped(shape);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) && {
    if (shape.elements() != data_.size())
        throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
    shape_ = shape;
    return std::move(*this);
}

template <typename T>
void BasicTensor<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
    for (T v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

template class BasicTensor<float>;
template class BasicTensor<double>;

}  // namespace pconet
