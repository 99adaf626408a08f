#include <doctest.h>

#include <cmath>
#include <vector>

#include "qbnn/errors.hpp"
#include "qbnn/quantizer.hpp"
#include "qbnn/rng.hpp"

using namespace qbnn;

namespace {

// Independent oracle: enumerate every grid value and pick the nearest,
// resolving exact ties toward the larger magnitude (round half away from
// zero on the index scale).
double nearest_grid_oracle(double x, const QuantSpec& spec) {
    const long long kmin = static_cast<long long>(spec.grid_min_index());
    const long long kmax = static_cast<long long>(spec.grid_max_index());
    double best = kmin * spec.scale;
    double best_dist = std::abs(x - best);
    for (long long k = kmin + 1; k <= kmax; ++k) {
        const double v = k * spec.scale;
        const double d = std::abs(x - v);
        if (d < best_dist || (d == best_dist && std::abs(v) > std::abs(best))) {
            best = v;
            best_dist = d;
        }
    }
    return best;
}

} // namespace

TEST_CASE("compute_scale direct substitutions") {
    CHECK(compute_scale(-1.0, 1.0, 8) == doctest::Approx(2.0 / 255).epsilon(1e-15));
    CHECK(compute_scale(0.0, 3.0, 2) == 1.0);
    CHECK(compute_scale(-0.5, 0.5, 4) == doctest::Approx(1.0 / 15).epsilon(1e-15));
    CHECK_THROWS_AS(compute_scale(1.0, 1.0, 8), DomainError);
    CHECK_THROWS_AS(compute_scale(2.0, 1.0, 8), DomainError);
    CHECK_THROWS_AS(compute_scale(-1.0, 1.0, 1), DomainError);
}

TEST_CASE("quantize hand-evaluated clipping cases") {
    const QuantSpec spec = QuantSpec::make(8, -1.0, 1.0, QuantSite::Weight);
    CHECK(quantize(0.0, spec) == 0.0);
    CHECK(quantize(2.0, spec) == doctest::Approx(254.0 / 255).epsilon(1e-15));   // clipped to 127*S
    CHECK(quantize(-3.0, spec) == doctest::Approx(-256.0 / 255).epsilon(1e-15)); // clipped to -128*S

    // asymmetric range: S = 0.5, 0.3/0.5 = 0.6 rounds to 1 -> 0.5
    const QuantSpec narrow = QuantSpec::make(2, -1.0, 0.5, QuantSite::Activation);
    CHECK(narrow.scale == 0.5);
    CHECK(quantize(0.3, narrow) == 0.5);
}

TEST_CASE("quantize is idempotent on its own grid") {
    RngStream rng(31, 0);
    for (int trial = 0; trial < 2000; ++trial) {
        const int b = std::vector<int>{2, 3, 4, 8}[rng.next_u64() % 4];
        const double lo = -0.1 - 3.0 * rng.next_uniform();
        const double hi = 0.1 + 3.0 * rng.next_uniform();
        const QuantSpec spec = QuantSpec::make(b, lo, hi, QuantSite::Weight);
        const double x = (rng.next_uniform() - 0.5) * 10.0;
        const double q = quantize(x, spec);
        CHECK(quantize(q, spec) == q);
    }
}

TEST_CASE("quantize matches the brute-force nearest-grid oracle on sweeps") {
    RngStream rng(32, 0);
    for (int trial = 0; trial < 10; ++trial) {
        for (int b : {2, 3, 4}) {
            const double m = 0.25 + 2.0 * rng.next_uniform();
            const QuantSpec spec = QuantSpec::make(b, -m, m, QuantSite::Weight);
            for (int i = 0; i <= 1000; ++i) {
                const double x = -2.0 * m + (4.0 * m) * i / 1000.0;
                CHECK(quantize(x, spec) == nearest_grid_oracle(x, spec));
            }
        }
    }
}

TEST_CASE("fake_quant output lands exactly on the grid") {
    RngStream rng(33, 0);
    Tensor x = gaussian_sample(rng, {257});
    const QuantSpec spec = QuantSpec::make(4, -1.3, 0.9, QuantSite::Activation);
    const Tensor q = fake_quant_forward(x, spec);
    for (int i = 0; i < q.size(); ++i) {
        const double k = std::round(q[i] / spec.scale);
        CHECK(k >= spec.grid_min_index());
        CHECK(k <= spec.grid_max_index());
        CHECK(k * spec.scale == q[i]);
    }
    // idempotent as a tensor op
    const Tensor qq = fake_quant_forward(q, spec);
    for (int i = 0; i < q.size(); ++i) CHECK(qq[i] == q[i]);
}

TEST_CASE("rounding error stays within half a step inside a symmetric range") {
    RngStream rng(34, 0);
    for (int trial = 0; trial < 5000; ++trial) {
        const int b = std::vector<int>{2, 3, 4, 8}[rng.next_u64() % 4];
        const double m = 0.2 + 4.0 * rng.next_uniform();
        const QuantSpec spec = QuantSpec::make(b, -m, m, QuantSite::Weight);
        const double x = (2.0 * rng.next_uniform() - 1.0) * m;  // inside [-m, m]
        CHECK(std::abs(x - quantize(x, spec)) <= spec.scale / 2 + 1e-15);
    }
}

TEST_CASE("quantize is monotone") {
    RngStream rng(35, 0);
    for (int trial = 0; trial < 5000; ++trial) {
        const QuantSpec spec =
            QuantSpec::make(3, -1.0 - rng.next_uniform(), 0.5 + rng.next_uniform(),
                            QuantSite::Activation);
        double x = (rng.next_uniform() - 0.5) * 6.0;
        double y = (rng.next_uniform() - 0.5) * 6.0;
        if (x > y) std::swap(x, y);
        CHECK(quantize(x, spec) <= quantize(y, spec));
    }
}

TEST_CASE("ste_backward passes the gradient inside and zeroes saturation") {
    const QuantSpec spec = QuantSpec::make(4, -1.0, 1.0, QuantSite::Weight);
    Tensor x = Tensor::vector1d({0.0, 0.5, -0.9, 10.0, -10.0, 0.99});
    Tensor g = Tensor::vector1d({1, 2, 3, 4, 5, 6});
    const Tensor out = ste_backward(g, x, spec);
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 2.0);
    CHECK(out[2] == 3.0);
    CHECK(out[3] == 0.0);  // saturated high
    CHECK(out[4] == 0.0);  // saturated low
    CHECK(out[5] == 6.0);

    CHECK_THROWS_AS(ste_backward(Tensor({3}), Tensor({4}), spec), ShapeError);
}

TEST_CASE("ste mask matches the per-element rule on random tensors") {
    RngStream rng(36, 0);
    for (int trial = 0; trial < 200; ++trial) {
        const QuantSpec spec = QuantSpec::make(
            2 + static_cast<int>(rng.next_u64() % 3), -0.5 - rng.next_uniform(),
            0.5 + rng.next_uniform(), QuantSite::Weight);
        Tensor x = gaussian_sample(rng, {50});
        for (int i = 0; i < x.size(); ++i) x[i] *= 2.0;
        Tensor g = gaussian_sample(rng, {50});
        const Tensor out = ste_backward(g, x, spec);
        for (int i = 0; i < x.size(); ++i) {
            const double k = std::round(x[i] / spec.scale);
            const bool inside = k >= spec.grid_min_index() && k <= spec.grid_max_index();
            CHECK(out[i] == (inside ? g[i] : 0.0));
        }
    }
}

TEST_CASE("calibrate_range single batch, symmetric rule, ema") {
    RangeCalibrator minmax(CalibrationMode::MinMax);
    minmax.observe(Tensor::vector1d({-2.0, 3.0, 0.5}));
    CHECK(minmax.finalize(false) == std::pair<double, double>(-2.0, 3.0));
    CHECK(minmax.finalize(true) == std::pair<double, double>(-3.0, 3.0));

    RangeCalibrator ema(CalibrationMode::Ema, 0.9);
    ema.observe(-1.0, 1.0);
    ema.observe(-3.0, 2.0);
    const auto [lo, hi] = ema.finalize(false);
    CHECK(lo == doctest::Approx(-1.2).epsilon(1e-15));
    CHECK(hi == doctest::Approx(1.1).epsilon(1e-15));

    RangeCalibrator empty(CalibrationMode::MinMax);
    CHECK_THROWS_AS(empty.finalize(false), DomainError);
}

TEST_CASE("degenerate calibration ranges are widened so lo < hi") {
    RangeCalibrator cal(CalibrationMode::MinMax);
    cal.observe(Tensor::full({10}, 0.0));
    const auto [lo, hi] = cal.finalize(true);
    CHECK(lo < hi);
    CHECK_NOTHROW(QuantSpec::make(8, lo, hi, QuantSite::Activation));
}

TEST_CASE("quant plan reports missing sites") {
    QuantPlan plan;
    plan.set({0, QuantSite::Weight}, QuantSpec::make(8, -1, 1, QuantSite::Weight));
    CHECK(plan.has({0, QuantSite::Weight}));
    CHECK_FALSE(plan.has({0, QuantSite::Activation}));
    CHECK_THROWS_AS(plan.at({0, QuantSite::Activation}), ConfigError);
    CHECK(plan.bit_width() == 8);
}

TEST_CASE("supported bit widths") {
    CHECK(is_supported_bit_width(2));
    CHECK(is_supported_bit_width(32));
    CHECK_FALSE(is_supported_bit_width(5));
    CHECK_FALSE(is_supported_bit_width(64));
}
