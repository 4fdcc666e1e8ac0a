#include <algorithm>
#include <cmath>
#include <cstring>

#include "instantiate.hpp"
#include "pconet/kernels.hpp"

namespace pconet::parallel {
namespace {

// Row (oy, ox) of the column matrix holds the receptive field in [ky][kx][ci]
// order, matching the kernel tensor's [kh,kw,cin,cout] layout. For a fixed ky
// the kx x cin run is contiguous in NHWC memory.
template <typename T>
void im2col(const T* image, const Shape4& in, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t oh,
            std::size_t ow, T* cols) {
    const std::size_t run = kw * in.c;
    const std::size_t kdim = kh * run;
#pragma omp parallel for schedule(static)
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            T* row = cols + (oy * ow + ox) * kdim;
            for (std::size_t ky = 0; ky < kh; ++ky)
                std::memcpy(row + ky * run, image + ((oy * stride + ky) * in.w + ox * stride) * in.c, run * sizeof(T));
        }
}

// Gather form of col2im: every input pixel sums the column entries that read it,
// so rows can be split across threads without write conflicts.
template <typename T>
void col2im(const T* cols, const Shape4& in, std::size_t kh, std::size_t kw, std::size_t stride, std::size_t oh,
            std::size_t ow, T* image) {
    const std::size_t kdim = kh * kw * in.c;
#pragma omp parallel for schedule(static)
    for (std::size_t iy = 0; iy < in.h; ++iy)
        for (std::size_t ix = 0; ix < in.w; ++ix) {
            T* px = image + (iy * in.w + ix) * in.c;
            std::fill(px, px + in.c, T{0});
            for (std::size_t ky = 0; ky < kh && ky <= iy; ++ky) {
                const std::size_t ty = iy - ky;
                if (ty % stride || ty / stride >= oh) continue;
                const std::size_t oy = ty / stride;
                for (std::size_t kx = 0; kx < kw && kx <= ix; ++kx) {
                    const std::size_t tx = ix - kx;
                    if (tx % stride || tx / stride >= ow) continue;
                    const T* src = cols + (oy * ow + tx / stride) * kdim + (ky * kw + kx) * in.c;
                    for (std::size_t c = 0; c < in.c; ++c) px[c] += src[c];
                }
            }
        }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& kernels, const BasicTensor<T>& bias,
                              std::size_t stride) {
    const auto in = Shape4::of(input.shape());
    const std::size_t kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);
    const std::size_t oh = valid_extent(in.h, kh, stride), ow = valid_extent(in.w, kw, stride);
    const std::size_t rows = oh * ow, kdim = kh * kw * in.c;

    BasicTensor<T> out({in.n, oh, ow, cout});
    std::vector<T> cols(rows * kdim);
    for (std::size_t n = 0; n < in.n; ++n) {
        T* dst = out.data() + n * rows * cout;
#pragma omp parallel for schedule(static)
        for (std::size_t r = 0; r < rows; ++r) std::copy(bias.data(), bias.data() + cout, dst + r * cout);
        im2col(input.data() + n * in.h * in.w * in.c, in, kh, kw, stride, oh, ow, cols.data());
        gemm(false, false, rows, cout, kdim, cols.data(), kdim, kernels.data(), cout, dst, cout, true);
    }
    return out;
}

template <typename T>
Conv2DGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                               const BasicTensor<T>& grad_out, std::size_t stride) {
    const auto in = Shape4::of(input.shape());
    const auto go = Shape4::of(grad_out.shape());
    const std::size_t kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);
    const std::size_t rows = go.h * go.w, kdim = kh * kw * in.c;

    Conv2DGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(kernels.shape()), BasicTensor<T>({cout})};
    std::vector<T> cols(rows * kdim), gcols(rows * kdim);
    for (std::size_t n = 0; n < in.n; ++n) {
        const T* gn = grad_out.data() + n * rows * cout;
        im2col(input.data() + n * in.h * in.w * in.c, in, kh, kw, stride, go.h, go.w, cols.data());
        gemm(true, false, kdim, cout, rows, cols.data(), kdim, gn, cout, g.kernels.data(), cout, true);
        gemm(false, true, rows, kdim, cout, gn, cout, kernels.data(), cout, gcols.data(), kdim, false);
        col2im(gcols.data(), in, kh, kw, stride, go.h, go.w, g.input.data() + n * in.h * in.w * in.c);

#pragma omp parallel for schedule(static)
        for (std::size_t co = 0; co < cout; ++co) {
            T sum = 0;
            for (std::size_t r = 0; r < rows; ++r) sum += gn[r * cout + co];
            g.bias[co] += sum;
        }
    }
    return g;
}

template <typename T>
PoolResult<T> maxpool2d_forward(const BasicTensor<T>& input, std::size_t pool, std::size_t stride) {
    const auto in = Shape4::of(input.shape());
    const std::size_t oh = valid_extent(in.h, pool, stride), ow = valid_extent(in.w, pool, stride);
    PoolResult<T> r{BasicTensor<T>({in.n, oh, ow, in.c}), {}};
    r.argmax.resize(r.output.size());

    const T* src = input.data();
#pragma omp parallel for schedule(static)
    for (std::size_t line = 0; line < in.n * oh; ++line) {
        const std::size_t n = line / oh, oy = line % oh;
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const std::size_t o = ((n * oh + oy) * ow + ox) * in.c;
            const std::size_t origin = ((n * in.h + oy * stride) * in.w + ox * stride) * in.c;
            for (std::size_t c = 0; c < in.c; ++c) {
                std::size_t best = origin + c;
                for (std::size_t py = 0; py < pool; ++py)
                    for (std::size_t px = 0; px < pool; ++px) {
                        const std::size_t idx = origin + (py * in.w + px) * in.c + c;
                        if (src[idx] > src[best]) best = idx;
                    }
                r.output[o + c] = src[best];
                r.argmax[o + c] = best;
            }
        }
    }
    return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const std::vector<std::size_t>& argmax, const BasicTensor<T>& grad_out,
                                  const Shape& input_shape) {
    // Serial scatter: one add per output element, and windows may overlap when
    // stride < pool.
    BasicTensor<T> g(input_shape);
    for (std::size_t o = 0; o < grad_out.size(); ++o) g[argmax[o]] += grad_out[o];
    return g;
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    BasicTensor<T> c({m, n});
    gemm(false, false, m, n, k, a.data(), k, b.data(), n, c.data(), n, false);
    return c;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
    BasicTensor<T> y(x.shape());
    const std::size_t n = x.size();
#pragma omp parallel for simd schedule(static)
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
    return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
    BasicTensor<T> g(x.shape());
    const std::size_t n = x.size();
#pragma omp parallel for simd schedule(static)
    for (std::size_t i = 0; i < n; ++i) g[i] = x[i] > T{0} ? grad_out[i] : T{0};
    return g;
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
    BasicTensor<T> y(x.shape());
    const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) y[i] = T{1} / (T{1} + std::exp(-x[i]));
    return y;
}

template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_out) {
    BasicTensor<T> g(y.shape());
    const std::size_t n = y.size();
#pragma omp parallel for simd schedule(static)
    for (std::size_t i = 0; i < n; ++i) g[i] = grad_out[i] * y[i] * (T{1} - y[i]);
    return g;
}

PCONET_INSTANTIATE(float)
PCONET_INSTANTIATE(double)

}  // namespace pconet::parallel
