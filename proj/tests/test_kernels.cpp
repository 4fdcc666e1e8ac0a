#include <doctest.h>

#include <cmath>
#include <numeric>

#include <omp.h>

#include "pconet/kernels.hpp"
#include "support.hpp"

using namespace pconet;
using testing::KernelPathGuard;
using testing::random_tensor;
using testing::rel_error;

TEST_SUITE_BEGIN("kernels");

namespace {

const KernelPath kPaths[] = {KernelPath::Reference, KernelPath::Parallel};

const char* path_name(KernelPath p) { return p == KernelPath::Reference ? "reference" : "parallel"; }

}  // namespace

TEST_CASE("shape and tensor invariants") {
    CHECK_THROWS_AS(Shape({}), ShapeError);
    CHECK_THROWS_AS(Shape({1, 2, 3, 4, 5}), ShapeError);
    CHECK_THROWS_AS(Shape({3, 0}), ShapeError);
    CHECK(Shape({222, 222, 32}).str() == "(222,222,32)");
    CHECK(Shape({2, 3, 4}).elements() == 24);

    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK_THROWS_AS(Tensor(Shape{2, 3}, std::vector<float>(5)), ShapeError);
    CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
    CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
}

TEST_CASE("conv2d window sums on a 4x4 ramp") {
    for (auto p : kPaths) {
        KernelPathGuard guard(p);
        CAPTURE(path_name(p));
        std::vector<float> ramp(16);
        std::iota(ramp.begin(), ramp.end(), 1.0f);
        const Tensor input(Shape{1, 4, 4, 1}, ramp);
        const Tensor kernels(Shape{3, 3, 1, 1}, 1.0f);
        const Tensor out = conv2d_forward(input, kernels, Tensor({1}));
        REQUIRE(out.shape() == Shape{1, 2, 2, 1});
        // Hand window sums: rows 1-3 x cols 1-3 of the ramp and its shifts.
        CHECK(out[0] == 54.0f);
        CHECK(out[1] == 63.0f);
        CHECK(out[2] == 90.0f);
        CHECK(out[3] == 99.0f);
    }
}

TEST_CASE("conv2d of zero input is the bias") {
    for (auto p : kPaths) {
        KernelPathGuard guard(p);
        const Tensor kernels = random_tensor<float>({3, 3, 2, 4}, 1);
        const Tensor bias(Shape{4}, std::vector<float>{0.5f, -1.0f, 2.0f, 0.0f});
        const Tensor out = conv2d_forward(Tensor({2, 5, 6, 2}), kernels, bias);
        REQUIRE(out.shape() == Shape{2, 3, 4, 4});
        for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == bias[i % 4]);
    }
}

TEST_CASE("conv2d output shapes") {
    CHECK(conv2d_output_shape({1, 224, 224, 3}, {3, 3, 3, 32}, 1) == Shape{1, 222, 222, 32});
    CHECK(conv2d_output_shape({1, 9, 9, 1}, {3, 3, 1, 1}, 2) == Shape{1, 4, 4, 1});
    const Tensor big = conv2d_forward(Tensor({1, 224, 224, 3}), random_tensor<float>({3, 3, 3, 32}, 2), Tensor({32}));
    CHECK(big.shape() == Shape{1, 222, 222, 32});
}

TEST_CASE("conv2d rejects bad shapes") {
    const Tensor in({1, 5, 5, 3});
    CHECK_THROWS_AS(conv2d_forward(in, Tensor({3, 3, 2, 4}), Tensor({4})), ShapeError);
    CHECK_THROWS_AS(conv2d_forward(in, Tensor({6, 3, 3, 4}), Tensor({4})), ShapeError);
    CHECK_THROWS_AS(conv2d_forward(in, Tensor({3, 3, 3, 4}), Tensor({3})), ShapeError);
    CHECK_THROWS_AS(conv2d_forward(in, Tensor({3, 3, 3, 4}), Tensor({4}), 0), std::invalid_argument);
    try {
        conv2d_forward(in, Tensor({3, 3, 2, 4}), Tensor({4}));
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find('3') != std::string::npos);
        CHECK(msg.find('2') != std::string::npos);
    }
}

TEST_CASE("conv2d is linear in input and in kernels") {
    const Tensor x = random_tensor<float>({2, 7, 7, 3}, 3);
    const Tensor k = random_tensor<float>({3, 3, 3, 5}, 4);
    const Tensor zero({5});
    Tensor x2 = x, k2 = k;
    for (std::size_t i = 0; i < x2.size(); ++i) x2[i] *= 2.5f;
    for (std::size_t i = 0; i < k2.size(); ++i) k2[i] *= -0.5f;
    const Tensor base = conv2d_forward(x, k, zero);
    const Tensor sx = conv2d_forward(x2, k, zero);
    const Tensor sk = conv2d_forward(x, k2, zero);
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(sx[i] == doctest::Approx(2.5 * base[i]).epsilon(1e-5));
        CHECK(sk[i] == doctest::Approx(-0.5 * base[i]).epsilon(1e-5));
    }
}

TEST_CASE("conv2d backward special cases") {
    for (auto p : kPaths) {
        KernelPathGuard guard(p);
        CAPTURE(path_name(p));
        const TensorD x = random_tensor<double>({2, 5, 5, 2}, 5);
        const TensorD k = random_tensor<double>({3, 3, 2, 3}, 6);
        const auto zero = conv2d_backward(x, k, TensorD({2, 3, 3, 3}));
        CHECK(testing::norm(zero.input) == 0.0);
        CHECK(testing::norm(zero.kernels) == 0.0);
        CHECK(testing::norm(zero.bias) == 0.0);

        // A single output position sees exactly the input patch.
        const TensorD patch = random_tensor<double>({1, 3, 3, 1}, 7);
        const auto g = conv2d_backward(patch, random_tensor<double>({3, 3, 1, 1}, 8), TensorD({1, 1, 1, 1}, 1.0));
        for (std::size_t i = 0; i < 9; ++i) CHECK(g.kernels[i] == patch[i]);

        const TensorD go = random_tensor<double>({2, 3, 3, 3}, 9);
        const auto gb = conv2d_backward(x, k, go);
        for (std::size_t c = 0; c < 3; ++c) {
            double s = 0;
            for (std::size_t i = c; i < go.size(); i += 3) s += go[i];
            CHECK(gb.bias[c] == doctest::Approx(s).epsilon(1e-12));
        }
    }
}

TEST_CASE("conv2d gradients match finite differences") {
    struct Case {
        Shape in, k;
        std::size_t stride;
    };
    const Case cases[] = {{{2, 6, 6, 3}, {3, 3, 3, 4}, 1}, {{1, 7, 8, 2}, {3, 3, 2, 3}, 2}, {{1, 5, 5, 1}, {2, 2, 1, 2}, 1}};
    for (auto p : kPaths) {
        KernelPathGuard guard(p);
        for (const auto& c : cases) {
            CAPTURE(path_name(p));
            CAPTURE(c.in.str());
            TensorD x = random_tensor<double>(c.in, 10);
            TensorD k = random_tensor<double>(c.k, 11);
            TensorD b = random_tensor<double>({c.k[3]}, 12);
            const auto out_shape = conv2d_output_shape(c.in, c.k, c.stride);
            const TensorD r = random_tensor<double>(out_shape, 13);
            auto loss = [&] { return testing::dot(conv2d_forward(x, k, b, c.stride), r); };
            const auto g = conv2d_backward(x, k, r, c.stride);
            CHECK(rel_error(g.input, testing::numeric_gradient(x, loss)) < 1e-7);
            CHECK(rel_error(g.kernels, testing::numeric_gradient(k, loss)) < 1e-7);
            CHECK(rel_error(g.bias, testing::numeric_gradient(b, loss)) < 1e-7);
        }
    }
}

TEST_CASE("maxpool picks the window maximum") {
    for (auto p : kPaths) {
        KernelPathGuard guard(p);
        const Tensor in(Shape{1, 2, 2, 1}, std::vector<float>{1, 5, 3, 2});
        const auto r = maxpool2d_forward(in);
        REQUIRE(r.output.size() == 1);
        CHECK(r.output[0] == 5.0f);
        CHECK(r.argmax[0] == 1);

        const auto odd = maxpool2d_forward(Tensor({1, 109, 109, 32}));
        CHECK(odd.output.shape() == Shape{1, 54, 54, 32});

        const auto flat = maxpool2d_forward(Tensor({2, 6, 6, 3}, 0.75f));
        for (std::size_t i = 0; i < flat.output.size(); ++i) CHECK(flat.output[i] == 0.75f);
        CHECK_THROWS_AS(maxpool2d_forward(Tensor({1, 1, 4, 1})), ShapeError);
    }
}

TEST_CASE("maxpool backward routes to the argmax") {
    for (auto p : kPaths) {
        KernelPathGuard guard(p);
        const Tensor in(Shape{1, 2, 2, 1}, std::vector<float>{1, 5, 3, 2});
        const auto r = maxpool2d_forward(in);
        const Tensor g = maxpool2d_backward(r.argmax, Tensor({1, 1, 1, 1}, 2.0f), in.shape());
        CHECK(g[0] == 0.0f);
        CHECK(g[1] == 2.0f);
        CHECK(g[2] == 0.0f);
        CHECK(g[3] == 0.0f);

        const Tensor zero = maxpool2d_backward(r.argmax, Tensor({1, 1, 1, 1}), in.shape());
        CHECK(testing::norm(zero) == 0.0);

        const Tensor x = random_tensor<float>({3, 9, 7, 4}, 14);
        const auto rx = maxpool2d_forward(x);
        const Tensor go = random_tensor<float>(rx.output.shape(), 15);
        const Tensor gi = maxpool2d_backward(rx.argmax, go, x.shape());
        double s_in = 0, s_out = 0;
        for (std::size_t i = 0; i < gi.size(); ++i) s_in += gi[i];
        for (std::size_t i = 0; i < go.size(); ++i) s_out += go[i];
        CHECK(s_in == doctest::Approx(s_out).epsilon(1e-6));

        std::vector<std::size_t> bad = r.argmax;
        bad[0] = 4;
        CHECK_THROWS_AS(maxpool2d_backward(bad, Tensor({1, 1, 1, 1}), in.shape()), std::out_of_range);
    }
}

TEST_CASE("maxpool gradient matches finite differences") {
    for (auto p : kPaths) {
        KernelPathGuard guard(p);
        TensorD x = random_tensor<double>({2, 4, 4, 2}, 16);
        const auto fwd = maxpool2d_forward(x);
        const TensorD r = random_tensor<double>(fwd.output.shape(), 17);
        auto loss = [&] { return testing::dot(maxpool2d_forward(x).output, r); };
        const TensorD g = maxpool2d_backward(fwd.argmax, r, x.shape());
        CHECK(rel_error(g, testing::numeric_gradient(x, loss)) < 1e-7);
    }
}

TEST_CASE("matmul") {
    for (auto p : kPaths) {
        KernelPathGuard guard(p);
        const Tensor a(Shape{2, 2}, std::vector<float>{1, 2, 3, 4});
        const Tensor b(Shape{2, 1}, std::vector<float>{5, 6});
        const Tensor c = matmul(a, b);
        REQUIRE(c.shape() == Shape{2, 1});
        CHECK(c[0] == 17.0f);
        CHECK(c[1] == 39.0f);

        const Tensor m = random_tensor<float>({5, 7}, 18);
        Tensor eye({7, 7});
        for (std::size_t i = 0; i < 7; ++i) eye[i * 7 + i] = 1.0f;
        CHECK(matmul(m, eye) == m);

        CHECK(matmul(Tensor({16, 3200}), Tensor({3200, 128})).shape() == Shape{16, 128});
        CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({4, 2})), ShapeError);
        CHECK_THROWS_AS(matmul(Tensor({2, 3, 1}), Tensor({3, 2})), ShapeError);
    }
}

TEST_CASE("gemm agrees with a naive triple loop for every transpose") {
    const std::size_t sizes[][3] = {{1, 1, 1}, {7, 33, 5}, {150, 70, 300}, {13, 1100, 9}};
    for (const auto& s : sizes) {
        const std::size_t m = s[0], n = s[1], k = s[2];
        for (int ta = 0; ta < 2; ++ta)
            for (int tb = 0; tb < 2; ++tb)
                for (int acc = 0; acc < 2; ++acc) {
                    CAPTURE(m);
                    CAPTURE(n);
                    CAPTURE(k);
                    const TensorD a = random_tensor<double>({m * k}, 19);
                    const TensorD b = random_tensor<double>({k * n}, 20);
                    TensorD c = random_tensor<double>({m * n}, 21);
                    TensorD want = c;
                    for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) {
                            double sum = acc ? want[i * n + j] : 0.0;
                            for (std::size_t p = 0; p < k; ++p)
                                sum += (ta ? a[p * m + i] : a[i * k + p]) * (tb ? b[j * k + p] : b[p * n + j]);
                            want[i * n + j] = sum;
                        }
                    parallel::gemm<double>(ta, tb, m, n, k, a.data(), ta ? m : k, b.data(), tb ? k : n, c.data(), n,
                                           acc);
                    CHECK(rel_error(c, want) < 1e-13);
                }
    }
}

TEST_CASE("elementwise activations") {
    const Tensor x(Shape{3}, std::vector<float>{-3.0f, 0.0f, 2.0f});
    const Tensor r = relu(x);
    CHECK(r[0] == 0.0f);
    CHECK(r[1] == 0.0f);
    CHECK(r[2] == 2.0f);
    const Tensor rb = relu_backward(x, Tensor({3}, 1.0f));
    CHECK(rb[0] == 0.0f);
    CHECK(rb[1] == 0.0f);  // derivative at exactly zero
    CHECK(rb[2] == 1.0f);

    const TensorD z({1});
    const TensorD s = sigmoid(z);
    CHECK(s[0] == 0.5);
    const TensorD ds = sigmoid_backward(s, TensorD({1}, 1.0));
    CHECK(ds[0] == doctest::Approx(0.25).epsilon(1e-15));
    TensorD zz = z;
    auto f = [&] { return sigmoid(zz)[0]; };
    CHECK(testing::numeric_gradient(zz, f)[0] == doctest::Approx(0.25).epsilon(1e-8));

    TensorD big = random_tensor<double>({4, 6}, 22, -4, 4);
    const TensorD rr = random_tensor<double>({4, 6}, 23);
    auto g_sig = [&] { return testing::dot(sigmoid(big), rr); };
    CHECK(rel_error(sigmoid_backward(sigmoid(big), rr), testing::numeric_gradient(big, g_sig)) < 1e-8);
    auto g_relu = [&] { return testing::dot(relu(big), rr); };
    CHECK(rel_error(relu_backward(big, rr), testing::numeric_gradient(big, g_relu)) < 1e-8);
}

TEST_CASE("reference and parallel paths agree") {
    struct Case {
        Shape in, k;
        std::size_t stride;
    };
    const Case cases[] = {{{2, 30, 30, 3}, {3, 3, 3, 32}, 1},
                          {{1, 26, 26, 64}, {3, 3, 64, 64}, 1},
                          {{3, 17, 11, 5}, {3, 3, 5, 7}, 2},
                          {{1, 12, 12, 128}, {3, 3, 128, 128}, 1}};
    for (const auto& c : cases) {
        CAPTURE(c.in.str());
        const Tensor x = random_tensor<float>(c.in, 24, 0, 1);
        const Tensor k = random_tensor<float>(c.k, 25, -0.2, 0.2);
        const Tensor b = random_tensor<float>({c.k[3]}, 26);
        Tensor out[2];
        Conv2DGrads<float> grads[2];
        PoolResult<float> pools[2];
        for (int i = 0; i < 2; ++i) {
            KernelPathGuard guard(kPaths[i]);
            out[i] = conv2d_forward(x, k, b, c.stride);
            grads[i] = conv2d_backward(x, k, random_tensor<float>(out[i].shape(), 27), c.stride);
            pools[i] = maxpool2d_forward(out[i]);
        }
        CHECK(rel_error(out[0], out[1]) <= 1e-5);
        CHECK(rel_error(grads[0].input, grads[1].input) <= 1e-5);
        CHECK(rel_error(grads[0].kernels, grads[1].kernels) <= 1e-5);
        CHECK(rel_error(grads[0].bias, grads[1].bias) <= 1e-5);
        CHECK(rel_error(pools[0].output, pools[1].output) <= 1e-5);
    }
    const Tensor a = random_tensor<float>({16, 3200}, 28);
    const Tensor w = random_tensor<float>({3200, 128}, 29);
    Tensor mm[2];
    for (int i = 0; i < 2; ++i) {
        KernelPathGuard guard(kPaths[i]);
        mm[i] = matmul(a, w);
    }
    CHECK(rel_error(mm[0], mm[1]) <= 1e-5);
}

TEST_CASE("parallel kernels do not depend on the thread count") {
    KernelPathGuard guard(KernelPath::Parallel);
    const Tensor x = random_tensor<float>({3, 40, 40, 16}, 30);
    const Tensor k = random_tensor<float>({3, 3, 16, 32}, 31);
    const Tensor b = random_tensor<float>({32}, 32);
    const int saved = omp_get_max_threads();
    Tensor outs[3];
    Conv2DGrads<float> grads[3];
    const int threads[] = {1, 3, 8};
    for (int i = 0; i < 3; ++i) {
        omp_set_num_threads(threads[i]);
        outs[i] = conv2d_forward(x, k, b);
        grads[i] = conv2d_backward(x, k, outs[i]);
    }
    omp_set_num_threads(saved);
    for (int i = 1; i < 3; ++i) {
        CHECK(outs[i] == outs[0]);
        CHECK(grads[i].input == grads[0].input);
        CHECK(grads[i].kernels == grads[0].kernels);
        CHECK(grads[i].bias == grads[0].bias);
    }
    CHECK(conv2d_forward(x, k, b) == outs[0]);
}

TEST_SUITE_END();
