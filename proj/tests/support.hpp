#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include <unistd.h>

#include "pconet/kernels.hpp"
#include "pconet/nn.hpp"
#include "pconet/tensor.hpp"

namespace testing {

using pconet::BasicTensor;
using pconet::Shape;

template <typename T>
BasicTensor<T> random_tensor(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    BasicTensor<T> t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(dist(gen));
    return t;
}

template <typename T>
double norm(const BasicTensor<T>& t) {
    double s = 0;
    for (std::size_t i = 0; i < t.size(); ++i) s += static_cast<double>(t[i]) * static_cast<double>(t[i]);
    return std::sqrt(s);
}

/// ||a - b|| / max(||a||, ||b||), 0 when both vanish.
template <typename A, typename B>
double rel_error(const BasicTensor<A>& a, const BasicTensor<B>& b) {
    double diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        diff += d * d;
    }
    const double scale = std::max(norm(a), norm(b));
    return scale == 0 ? 0.0 : std::sqrt(diff) / scale;
}

template <typename T>
double dot(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

/// Central differences of a scalar function with respect to every element of x.
inline pconet::TensorD numeric_gradient(pconet::TensorD& x, const std::function<double()>& f, double h = 1e-6) {
    pconet::TensorD g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f();
        x[i] = saved - h;
        const double down = f();
        x[i] = saved;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

// Checks d<r, layer(x)>/dx and d/dparams against central differences.
// Dropout layers are reseeded before every forward so the mask stays fixed.
inline double worst_layer_error(pconet::Layer<double>& layer, const pconet::Shape& batch_in, bool training,
                                std::uint64_t seed) {
    pconet::TensorD x = random_tensor<double>(batch_in, seed);
    for (auto& p : layer.parameters())
        p.value = random_tensor<double>(p.value.shape(), seed + 1 + p.value.size());
    auto* drop = dynamic_cast<pconet::Dropout<double>*>(&layer);
    auto run = [&] {
        if (drop) drop->reseed(seed);
        return layer.forward(x, training);
    };
    const pconet::TensorD r = random_tensor<double>(run().shape(), seed + 99);
    auto loss = [&] { return dot(run(), r); };

    run();
    layer.zero_grad();
    const pconet::TensorD gx = layer.backward(r);
    double worst = rel_error(gx, numeric_gradient(x, loss));
    std::vector<pconet::TensorD> analytic;
    for (auto& p : layer.parameters()) analytic.push_back(p.grad);
    for (std::size_t i = 0; i < analytic.size(); ++i)
        worst = std::max(worst, rel_error(analytic[i], numeric_gradient(layer.parameters()[i].value, loss)));
    return worst;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("pconet_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

/// Switches the kernel path for the lifetime of the guard.
class KernelPathGuard {
public:
    explicit KernelPathGuard(pconet::KernelPath p) : saved_(pconet::kernel_path()) { pconet::set_kernel_path(p); }
    ~KernelPathGuard() { pconet::set_kernel_path(saved_); }

private:
    pconet::KernelPath saved_;
};

}  // namespace testing
