#include <doctest.h>

#include <cmath>

#include "qbnn/errors.hpp"
#include "qbnn/rng.hpp"
#include "qbnn/tensor.hpp"

using namespace qbnn;

TEST_CASE("tensor basics enforce the shape invariant") {
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("matmul identity and zero cases") {
    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor i2 = Tensor::identity(2);

    const Tensor ii = ops::matmul(i2, i2);
    CHECK(ii.at(0, 0) == 1.0);
    CHECK(ii.at(0, 1) == 0.0);
    CHECK(ii.at(1, 1) == 1.0);

    const Tensor az = ops::matmul(a, Tensor({2, 1}, {0, 0}));
    CHECK(az.at(0, 0) == 0.0);
    CHECK(az.at(1, 0) == 0.0);

    // matmul(A, I) = A exactly
    const Tensor ai = ops::matmul(a, i2);
    for (int k = 0; k < a.size(); ++k) CHECK(ai[k] == a[k]);
}

TEST_CASE("matmul hand-expanded product") {
    const Tensor a({2, 2}, {1, 2, 3, 4});
    const Tensor b({2, 1}, {5, 6});
    const Tensor c = ops::matmul(a, b);
    CHECK(c.at(0, 0) == 17.0);
    CHECK(c.at(1, 0) == 39.0);
}

TEST_CASE("matmul rejects mismatched inner dims") {
    CHECK_THROWS_AS(ops::matmul(Tensor({2, 3}), Tensor({2, 2})), ShapeError);
}

TEST_CASE("conv2d zero kernel, unit kernel, window sums") {
    Tensor input({1, 3, 3}, {1, 1, 1, 1, 1, 1, 1, 1, 1});

    const Tensor zero_k({1, 1, 2, 2});
    const Tensor out0 = ops::conv2d(input, zero_k, 1);
    for (int k = 0; k < out0.size(); ++k) CHECK(out0[k] == 0.0);

    // 1x1 unit kernel reproduces a single-channel input exactly
    Tensor varied({1, 2, 3}, {0.5, -1.25, 3.0, 2.0, 0.0, -7.5});
    const Tensor unit_k({1, 1, 1, 1}, {1.0});
    const Tensor same = ops::conv2d(varied, unit_k, 1);
    for (int k = 0; k < varied.size(); ++k) CHECK(same[k] == varied[k]);

    const Tensor ones_k({1, 1, 2, 2}, {1, 1, 1, 1});
    const Tensor sums = ops::conv2d(input, ones_k, 1);
    CHECK(sums.dims() == std::vector<int>{1, 2, 2});
    for (int k = 0; k < sums.size(); ++k) CHECK(sums[k] == 4.0);
}

TEST_CASE("conv2d sums over input channels and rejects oversized kernels") {
    // two channels, 1x1 kernel with weights 2 and 3: output = 2*a + 3*b
    Tensor input({2, 1, 2}, {1, 2, 10, 20});
    const Tensor k({1, 2, 1, 1}, {2, 3});
    const Tensor out = ops::conv2d(input, k, 1);
    CHECK(out[0] == 32.0);
    CHECK(out[1] == 64.0);

    CHECK_THROWS_AS(ops::conv2d(Tensor({1, 2, 2}), Tensor({1, 1, 3, 1}), 1), ShapeError);
}

TEST_CASE("maxpool_2x1 windows along H, trailing row dropped") {
    const Tensor two({1, 2, 1}, {1, 3});
    const Tensor p = ops::maxpool_2x1(two);
    CHECK(p.dims() == std::vector<int>{1, 1, 1});
    CHECK(p[0] == 3.0);

    const Tensor constant = Tensor::full({2, 4, 3}, 7.5);
    const Tensor pc = ops::maxpool_2x1(constant);
    CHECK(pc.dims() == std::vector<int>{2, 2, 3});
    for (int k = 0; k < pc.size(); ++k) CHECK(pc[k] == 7.5);

    // H=5: rows pair as (0,1), (2,3); row 4 is dropped
    const Tensor odd({1, 5, 1}, {1, 2, 3, 4, 100});
    const Tensor po = ops::maxpool_2x1(odd);
    CHECK(po.dims() == std::vector<int>{1, 2, 1});
    CHECK(po[0] == 2.0);
    CHECK(po[1] == 4.0);

    CHECK_THROWS_AS(ops::maxpool_2x1(Tensor({1, 1, 3})), ShapeError);
}

TEST_CASE("softmax symmetry, shift invariance, hand values") {
    const Tensor u = ops::softmax(Tensor::vector1d({0, 0, 0}));
    for (int k = 0; k < 3; ++k) CHECK(u[k] == doctest::Approx(1.0 / 3).epsilon(1e-15));

    const Tensor c = ops::softmax(Tensor::vector1d({42.5, 42.5, 42.5, 42.5}));
    for (int k = 0; k < 4; ++k) CHECK(c[k] == doctest::Approx(0.25).epsilon(1e-15));

    const Tensor logs =
        ops::softmax(Tensor::vector1d({std::log(1.0), std::log(2.0), std::log(3.0)}));
    CHECK(logs[0] == doctest::Approx(1.0 / 6).epsilon(1e-14));
    CHECK(logs[1] == doctest::Approx(2.0 / 6).epsilon(1e-14));
    CHECK(logs[2] == doctest::Approx(3.0 / 6).epsilon(1e-14));
}

TEST_CASE("softmax sums to one even for extreme logits") {
    RngStream rng(7, 0);
    for (int trial = 0; trial < 200; ++trial) {
        Tensor logits({5});
        for (int k = 0; k < 5; ++k)
            logits[k] = (rng.next_uniform() - 0.5) * 2e4;  // up to +-1e4
        const Tensor p = ops::softmax(logits);
        double sum = 0.0;
        for (int k = 0; k < 5; ++k) {
            CHECK(p[k] >= 0.0);
            sum += p[k];
        }
        CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("cross_entropy perfect, uniform, floored") {
    CHECK(ops::cross_entropy(Tensor::vector1d({0, 1, 0}), 1) == 0.0);
    CHECK(ops::cross_entropy(Tensor::vector1d({1.0 / 3, 1.0 / 3, 1.0 / 3}), 0) ==
          doctest::Approx(std::log(3.0)).epsilon(1e-15));
    const double floored = ops::cross_entropy(Tensor::vector1d({0, 1, 0}), 0);
    CHECK(floored == doctest::Approx(std::log(1e12)).epsilon(1e-12));
    CHECK(std::isfinite(floored));
    CHECK_THROWS_AS(ops::cross_entropy(Tensor::vector1d({1, 0}), 2), DomainError);
}

TEST_CASE("conv2d backward kernels and input agree with finite differences") {
    RngStream rng(11, 0);
    Tensor input = gaussian_sample(rng, {2, 3, 5});
    Tensor kernels = gaussian_sample(rng, {3, 2, 2, 2});
    const int stride = 1;

    // loss = sum of conv output; its gradient w.r.t. output is all ones
    auto loss = [&](const Tensor& in, const Tensor& k) {
        const Tensor out = ops::conv2d(in, k, stride);
        double s = 0.0;
        for (int i = 0; i < out.size(); ++i) s += out[i];
        return s;
    };
    const Tensor out = ops::conv2d(input, kernels, stride);
    const Tensor ones = Tensor::full(out.dims(), 1.0);
    const Tensor gk = ops::conv2d_backward_kernels(ones, input, kernels.dims(), stride);
    const Tensor gi = ops::conv2d_backward_input(ones, kernels, input.dims(), stride);

    const double h = 1e-6;
    for (int i = 0; i < kernels.size(); i += 3) {
        Tensor kp = kernels, km = kernels;
        kp[i] += h;
        km[i] -= h;
        const double fd = (loss(input, kp) - loss(input, km)) / (2 * h);
        CHECK(gk[i] == doctest::Approx(fd).epsilon(1e-5));
    }
    for (int i = 0; i < input.size(); i += 7) {
        Tensor ip = input, im = input;
        ip[i] += h;
        im[i] -= h;
        const double fd = (loss(ip, kernels) - loss(im, kernels)) / (2 * h);
        CHECK(gi[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("softplus and its inverse are consistent") {
    for (double y : {1e-3, 0.01, 0.5, 1.0, 10.0, 50.0})
        CHECK(softplus(inverse_softplus(y)) == doctest::Approx(y).epsilon(1e-12));
    CHECK(softplus(-40.0) > 0.0);
    CHECK(softplus(40.0) == doctest::Approx(40.0).epsilon(1e-15));
}
