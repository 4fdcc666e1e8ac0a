// Serial loop-nest kernels. Straightforward on purpose: these are what the
// parallel path is tested against.

#include <cmath>

#include "instantiate.hpp"
#include "pconet/kernels.hpp"

namespace pconet::reference {

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& input, const BasicTensor<T>& kernels, const BasicTensor<T>& bias,
                              std::size_t stride) {
    const auto in = Shape4::of(input.shape());
    const std::size_t kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);
    const std::size_t oh = valid_extent(in.h, kh, stride), ow = valid_extent(in.w, kw, stride);
    BasicTensor<T> out({in.n, oh, ow, cout});

    for (std::size_t n = 0; n < in.n; ++n)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox)
                for (std::size_t co = 0; co < cout; ++co) {
                    T sum = bias[co];
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx)
                            for (std::size_t ci = 0; ci < in.c; ++ci)
                                sum += input.at(n, oy * stride + ky, ox * stride + kx, ci) *
                                       kernels[((ky * kw + kx) * in.c + ci) * cout + co];
                    out.at(n, oy, ox, co) = sum;
                }
    return out;
}

template <typename T>
Conv2DGrads<T> conv2d_backward(const BasicTensor<T>& input, const BasicTensor<T>& kernels,
                               const BasicTensor<T>& grad_out, std::size_t stride) {
    const auto in = Shape4::of(input.shape());
    const auto go = Shape4::of(grad_out.shape());
    const std::size_t kh = kernels.dim(0), kw = kernels.dim(1), cout = kernels.dim(3);

    Conv2DGrads<T> g{BasicTensor<T>(input.shape()), BasicTensor<T>(kernels.shape()), BasicTensor<T>({cout})};
    for (std::size_t n = 0; n < in.n; ++n)
        for (std::size_t oy = 0; oy < go.h; ++oy)
            for (std::size_t ox = 0; ox < go.w; ++ox)
                for (std::size_t co = 0; co < cout; ++co) {
                    const T up = grad_out.at(n, oy, ox, co);
                    g.bias[co] += up;
                    for (std::size_t ky = 0; ky < kh; ++ky)
                        for (std::size_t kx = 0; kx < kw; ++kx)
                            for (std::size_t ci = 0; ci < in.c; ++ci) {
                                const std::size_t widx = ((ky * kw + kx) * in.c + ci) * cout + co;
                                const std::size_t iy = oy * stride + ky, ix = ox * stride + kx;
                                g.kernels[widx] += up * input.at(n, iy, ix, ci);
                                g.input.at(n, iy, ix, ci) += up * kernels[widx];
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

    std::size_t o = 0;
    for (std::size_t n = 0; n < in.n; ++n)
        for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox)
                for (std::size_t c = 0; c < in.c; ++c, ++o) {
                    std::size_t best = ((n * in.h + oy * stride) * in.w + ox * stride) * in.c + c;
                    for (std::size_t py = 0; py < pool; ++py)
                        for (std::size_t px = 0; px < pool; ++px) {
                            const std::size_t idx = ((n * in.h + oy * stride + py) * in.w + ox * stride + px) * in.c + c;
                            if (input[idx] > input[best]) best = idx;
                        }
                    r.output[o] = input[best];
                    r.argmax[o] = best;
                }
    return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const std::vector<std::size_t>& argmax, const BasicTensor<T>& grad_out,
                                  const Shape& input_shape) {
    BasicTensor<T> g(input_shape);
    for (std::size_t o = 0; o < grad_out.size(); ++o) g[argmax[o]] += grad_out[o];
    return g;
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    BasicTensor<T> c({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            T sum = 0;
            for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
            c[i * n + j] = sum;
        }
    return c;
}

template <typename T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
    BasicTensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
    return y;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
    BasicTensor<T> g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T{0} ? grad_out[i] : T{0};
    return g;
}

template <typename T>
BasicTensor<T> sigmoid(const BasicTensor<T>& x) {
    BasicTensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = T{1} / (T{1} + std::exp(-x[i]));
    return y;
}

template <typename T>
BasicTensor<T> sigmoid_backward(const BasicTensor<T>& y, const BasicTensor<T>& grad_out) {
    BasicTensor<T> g(y.shape());
    for (std::size_t i = 0; i < y.size(); ++i) g[i] = grad_out[i] * y[i] * (T{1} - y[i]);
    return g;
}

PCONET_INSTANTIATE(float)
PCONET_INSTANTIATE(double)

}  // namespace pconet::reference
