#include <atomic>
#include <string>

#include "instantiate.hpp"
#include "pconet/kernels.hpp"

namespace pconet {
namespace {

std::atomic<KernelPath> g_path{KernelPath::Parallel};

void require_same(const Shape& a, const Shape& b, const char* what) {
    if (!(a == b)) throw ShapeError(std::string(what) + ": shape " + a.str() + " does not match " + b.str());
}

}  // namespace

void set_kernel_path(KernelPath path) { g_path.store(path, std::memory_order_relaxed); }
KernelPath kernel_path() { return g_path.load(std::memory_order_relaxed); }

Shape conv2d_output_shape(const Shape& input, const Shape& kernels, std::size_t stride) {
    if (stride == 0) throw ShapeError("conv2d: stride must be positive");
    const auto in = Shape4::of(input);
    if (kernels.rank() != 4) throw ShapeError("conv2d: kernels must be [kh,kw,cin,cout], got " + kernels.str());
    if (kernels[2] != in.c)
        throw ShapeError("conv2d: input channels " + std::to_string(in.c) + " != kernel cin " +
                         std::to_string(kernels[2]));
    if (kernels[0] > in.h)
        throw ShapeError("conv2d: kernel height " + std::to_string(kernels[0]) + " exceeds input height " +
                         std::to_string(in.h));
    if (kernels[1] > in.w)
        throw ShapeError("conv2d: kernel width " + std::to_string(kernels[1]) + " exceeds input width " +
                         std::to_string(in.w));
    return {in.n, valid_extent(in.h, kernels[0], stride), valid_extent(in.w, kernels[1], stride), kernels[3]};
}

Shape maxpool2d_output_shape(const Shape& input, std::size_t pool, std::size_t stride) {
    if (pool == 0 || stride == 0) throw ShapeError("maxpool2d: pool size and stride must be positive");
    const auto in = Shape4::of(input);
    if (in.h < pool || in.w < pool)
        throw ShapeError("maxpool2d: spatial dims (" + std::to_string(in.h) + "," + std::to_string(in.w) +
                         ") smaller than pool size " + std::to_string(pool));
    return {in.n, valid_extent(in.h, pool, stride), valid_extent(in.w, pool, stride), in.c};
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& kernels, const BasicTensor<T>& bias,
                              std::size_t stride) {
    const Shape out = conv2d_output_shape(input.shape(), kernels.shape(), stride);
    require_same(bias.shape(), Shape{out[3]}, "conv2d bias");
    return kernel_path() == KernelPath::Reference ? reference::conv2d_forward(input, kernels, bias, stride)
                                                  : parallel::conv2d_forward(input, kernels, bias, stride);
}

template <typename T>
Conv2DGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                               const BasicTensor<T>& grad_out, std::size_t stride) {
    require_same(grad_out.shape(), conv2d_output_shape(input.shape(), kernels.shape(), stride), "conv2d grad_out");
    return kernel_path() == KernelPath::Reference ? reference::conv2d_backward(input, kernels, grad_out, stride)
                                                  : parallel::conv2d_backward(input, kernels, grad_out, stride);
}

template <typename T>
PoolResult<T> maxpool2d_forward(const BasicTensor<T>& input, std::size_t pool, std::size_t stride) {
    maxpool2d_output_shape(input.shape(), pool, stride);
    return kernel_path() == KernelPath::Reference ? reference::maxpool2d_forward(input, pool, stride)
                                                  : parallel::maxpool2d_forward(input, pool, stride);
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const std::vector<std::size_t>& argmax, const BasicTensor<T>& grad_out,
                                  const Shape& input_shape) {
    if (argmax.size() != grad_out.size())
        throw ShapeError("maxpool2d backward: " + std::to_string(argmax.size()) + " indices for " +
                         std::to_string(grad_out.size()) + " gradients");
    const std::size_t limit = input_shape.elements();
    for (std::size_t idx : argmax)
        if (idx >= limit)
            throw std::out_of_range("maxpool2d backward: argmax index " + std::to_string(idx) +
                                    " out of range for input " + input_shape.str());
    return kernel_path() == KernelPath::Reference ? reference::maxpool2d_backward(argmax, grad_out, input_shape)
                                                  : parallel::maxpool2d_backward(argmax, grad_out, input_shape);
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: expected rank-2 operands, got " + a.shape().str() + " and " + b.shape().str());
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dims differ, " + std::to_string(a.dim(1)) + " vs " +
                         std::to_string(b.dim(0)));
    return kernel_path() == KernelPath::Reference ? reference::matmul(a, b) : parallel::matmul(a, b);
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
    return kernel_path() == KernelPath::Reference ? reference::relu(x) : parallel::relu(x);
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
    require_same(grad_out.shape(), x.shape(), "relu backward");
    return kernel_path() == KernelPath::Reference ? reference::relu_backward(x, grad_out)
                                                  : parallel::relu_backward(x, grad_out);
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
    return kernel_path() == KernelPath::Reference ? reference::sigmoid(x) : parallel::sigmoid(x);
}

template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_out) {
    require_same(grad_out.shape(), y.shape(), "sigmoid backward");
    return kernel_path() == KernelPath::Reference ? reference::sigmoid_backward(y, grad_out)
                                                  : parallel::sigmoid_backward(y, grad_out);
}

PCONET_INSTANTIATE(float)
PCONET_INSTANTIATE(double)

}  // namespace pconet
