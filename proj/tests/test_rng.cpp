#include <doctest.h>

#include <cmath>

#include "qbnn/rng.hpp"

using namespace qbnn;

TEST_CASE("identical (seed, stream) replays the identical sequence") {
    RngStream a(123, 7), b(123, 7);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

    RngStream c(123, 7), d(123, 7);
    Tensor ta = gaussian_sample(c, {4, 5});
    Tensor tb = gaussian_sample(d, {4, 5});
    for (int i = 0; i < ta.size(); ++i) CHECK(ta[i] == tb[i]);
}

TEST_CASE("distinct stream ids differ") {
    RngStream a(123, 0), b(123, 1);
    Tensor ta = gaussian_sample(a, {64});
    Tensor tb = gaussian_sample(b, {64});
    int same = 0;
    for (int i = 0; i < 64; ++i)
        if (ta[i] == tb[i]) ++same;
    CHECK(same == 0);
}

TEST_CASE("substreams are reproducible and unrelated to the parent") {
    RngStream root(99, 0);
    RngStream s1 = root.substream(5);
    RngStream s2 = root.substream(5);
    for (int i = 0; i < 100; ++i) CHECK(s1.next_u64() == s2.next_u64());

    RngStream s3 = root.substream(6);
    RngStream s4 = root.substream(5);
    int same = 0;
    for (int i = 0; i < 100; ++i)
        if (s3.next_u64() == s4.next_u64()) ++same;
    CHECK(same == 0);
}

TEST_CASE("gaussian draws match the normal moments at 1e5 samples") {
    RngStream rng(2024, 3);
    const int n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.next_gaussian();
        sum += x;
        sum_sq += x * x;
    }
    const double mean = sum / n;
    const double var = sum_sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("uniform draws stay inside the open unit interval") {
    RngStream rng(5, 5);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.next_uniform();
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("shuffle is deterministic per stream") {
    std::vector<int> a{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, b = a;
    RngStream r1(77, 1), r2(77, 1);
    shuffle_indices(a, r1);
    shuffle_indices(b, r2);
    CHECK(a == b);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}
