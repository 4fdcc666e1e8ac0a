#pragma once

// Compute kernels for the layers of the network.
//
// Every op exists twice: `reference::` is a plain serial loop nest kept as the
// ground truth for tests, and `parallel::` is the im2col + packed-GEMM path with
// OpenMP over output elements. The unqualified functions in `pconet::` validate
// shapes and dispatch to whichever path is selected with set_kernel_path().
//
// Both paths assign each output element to exactly one thread and sum in a fixed
// order, so results do not depend on the thread count.

#include <cstddef>
#include <vector>

#include "pconet/tensor.hpp"

namespace pconet {

enum class KernelPath { Reference, Parallel };

void set_kernel_path(KernelPath path);
KernelPath kernel_path();

template <typename T>
struct Conv2DGrads {
    BasicTensor<T> input;
    BasicTensor<T> kernels;
    BasicTensor<T> bias;
};

template <typename T>
struct PoolResult {
    BasicTensor<T> output;
    /// Flat index into the input tensor of the element chosen for each output.
    std::vector<std::size_t> argmax;
};

/// Output extent of a valid (unpadded) window sweep.
constexpr std::size_t valid_extent(std::size_t in, std::size_t window, std::size_t stride) {
    return (in - window) / stride + 1;
}

/// Shape of conv2d_forward's result; throws ShapeError on any mismatch.
Shape conv2d_output_shape(const Shape& input, const Shape& kernels, std::size_t stride);
Shape maxpool2d_output_shape(const Shape& input, std::size_t pool, std::size_t stride);

// input NHWC, kernels [kh,kw,cin,cout], bias [cout]. No padding.
template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                              const BasicTensor<T>& bias, std::size_t stride = 1);

template <typename T>
Conv2DGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                               const BasicTensor<T>& grad_out, std::size_t stride = 1);

template <typename T>
PoolResult<T> maxpool2d_forward(const BasicTensor<T>& input, std::size_t pool = 2, std::size_t stride = 2);

template <typename T>
BasicTensor<T> maxpool2d_backward(const std::vector<std::size_t>& argmax, const BasicTensor<T>& grad_out,
                                  const Shape& input_shape);

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x);
/// Upstream gradient masked by x > 0 (the derivative at exactly 0 is 0).
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x);
/// Takes the forward *output* y, since sigmoid' = y(1-y).
template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_out);

// The two implementations. Callers are expected to have validated shapes.
#define PCONET_DECLARE_KERNELS                                                                             \
    template <typename T>                                                                                  \
    BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,              \
                                  const BasicTensor<T>& bias, std::size_t stride);                         \
    template <typename T>                                                                                  \
    Conv2DGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,             \
                                   const BasicTensor<T>& grad_out, std::size_t stride);                    \
    template <typename T>                                                                                  \
    PoolResult<T> maxpool2d_forward(const BasicTensor<T>& input, std::size_t pool, std::size_t stride);    \
    template <typename T>                                                                                  \
    BasicTensor<T> maxpool2d_backward(const std::vector<std::size_t>& argmax,                              \
                                      const BasicTensor<T>& grad_out, const Shape& input_shape);           \
    template <typename T>                                                                                  \
    BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b);                               \
    template <typename T>                                                                                  \
    BasicTensor<T> relu(const BasicTensor<T>& x);                                                          \
    template <typename T>                                                                                  \
    BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);                 \
    template <typename T>                                                                                  \
    BasicTensor<T> sigmoid(const BasicTensor<T>& x);                                                       \
    template <typename T>                                                                                  \
    BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_out);

namespace reference {
PCONET_DECLARE_KERNELS
}

namespace parallel {
PCONET_DECLARE_KERNELS

/// C = op(A) * op(B) (+ C when accumulate). Row-major, leading dims in elements.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda,
          const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate);
}  // namespace parallel

#undef PCONET_DECLARE_KERNELS

}  // namespace pconet
