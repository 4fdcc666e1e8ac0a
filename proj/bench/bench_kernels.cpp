// Reference vs parallel kernels at the shapes the model actually runs.
// The second argument of every benchmark selects the path: 0 reference, 1 parallel.

#include <random>

#include <benchmark/benchmark.h>

#include "pconet/kernels.hpp"
#include "pconet/model.hpp"
#include "pconet/optim.hpp"

using namespace pconet;

namespace {

struct ConvShape {
    std::size_t h, w, cin, cout;
};

// Conv_1 .. Conv_5 inputs.
constexpr ConvShape kConv[] = {{224, 224, 3, 32}, {111, 111, 32, 32}, {54, 54, 32, 64}, {26, 26, 64, 64},
                               {12, 12, 64, 128}};

Tensor random(const Shape& s, unsigned seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<float> d(-1.0f, 1.0f);
    Tensor t(s);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(gen);
    return t;
}

KernelPath path_of(const benchmark::State& state) {
    return state.range(1) ? KernelPath::Parallel : KernelPath::Reference;
}

constexpr std::size_t kBatch = 4;

void BM_ConvForward(benchmark::State& state) {
    const auto c = kConv[state.range(0)];
    set_kernel_path(path_of(state));
    const Tensor x = random({kBatch, c.h, c.w, c.cin}, 1);
    const Tensor k = random({3, 3, c.cin, c.cout}, 2);
    const Tensor b = random({c.cout}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d_forward(x, k, b));
    state.SetItemsProcessed(state.iterations() * kBatch);
}

void BM_ConvBackward(benchmark::State& state) {
    const auto c = kConv[state.range(0)];
    set_kernel_path(path_of(state));
    const Tensor x = random({kBatch, c.h, c.w, c.cin}, 1);
    const Tensor k = random({3, 3, c.cin, c.cout}, 2);
    const Tensor g = random({kBatch, c.h - 2, c.w - 2, c.cout}, 3);
    for (auto _ : state) benchmark::DoNotOptimize(conv2d_backward(x, k, g));
    state.SetItemsProcessed(state.iterations() * kBatch);
}

void BM_MaxPool(benchmark::State& state) {
    const auto c = kConv[state.range(0)];
    set_kernel_path(path_of(state));
    const Tensor x = random({kBatch, c.h - 2, c.w - 2, c.cout}, 4);
    for (auto _ : state) benchmark::DoNotOptimize(maxpool2d_forward(x));
    state.SetItemsProcessed(state.iterations() * kBatch);
}

void BM_Matmul(benchmark::State& state) {
    set_kernel_path(path_of(state));
    const Tensor a = random({16, 3200}, 5);
    const Tensor w = random({3200, 128}, 6);
    for (auto _ : state) benchmark::DoNotOptimize(matmul(a, w));
}

void BM_TrainStep(benchmark::State& state) {
    set_kernel_path(path_of(state));
    Model m = build_pconet(0);
    Adam<float> adam({1e-5});
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    Tensor x = random({n, kImageSize, kImageSize, 3}, 7);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.5f * (x[i] + 1.0f);
    Tensor y({n, 2});
    for (std::size_t i = 0; i < n; ++i) y[i * 2 + i % 2] = 1.0f;
    for (auto _ : state) {
        m.zero_grad();
        const auto loss = bce_loss(m.forward(x, true), y);
        m.backward(loss.grad);
        adam.step(m.parameters());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

void conv_args(benchmark::internal::Benchmark* b) {
    for (int layer = 0; layer < 5; ++layer)
        for (int p = 0; p < 2; ++p) b->Args({layer, p});
}

}  // namespace

BENCHMARK(BM_ConvForward)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_MaxPool)->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Matmul)->Args({0, 0})->Args({0, 1})->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TrainStep)->Args({4, 0})->Args({4, 1})->Args({16, 1})->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
