#pragma once

// Explicit instantiation list shared by the kernel translation units.
#define PCONET_INSTANTIATE(T)                                                                                      \
    template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,    \
                                           std::size_t);                                                           \
    template Conv2DGrads<T> conv2d_backward(const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&,   \
                                            std::size_t);                                                          \
    template PoolResult<T> maxpool2d_forward(const BasicTensor<T>&, std::size_t, std::size_t);                     \
    template BasicTensor<T> maxpool2d_backward(const std::vector<std::size_t>&, const BasicTensor<T>&,             \
                                               const Shape&);                                                      \
    template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);                                  \
    template BasicTensor<T> relu(const BasicTensor<T>&);                                                           \
    template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);                           \
    template BasicTensor<T> sigmoid(const BasicTensor<T>&);                                                        \
    template BasicTensor<T> sigmoid_backward(const BasicTensor<T>&, const BasicTensor<T>&);
