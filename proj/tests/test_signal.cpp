#include <doctest.h>

#include <cmath>

#include "qbnn/errors.hpp"
#include "qbnn/signal.hpp"

using namespace qbnn;

TEST_CASE("generation is bit-identical for identical inputs") {
    RngStream rng(1, 0);
    const SignalWindow a = generate_fault_window(3, 0.5, std::nullopt, rng);
    const SignalWindow b = generate_fault_window(3, 0.5, std::nullopt, rng);
    REQUIRE(a.channels.size() == b.channels.size());
    for (int i = 0; i < a.channels.size(); ++i) CHECK(a.channels[i] == b.channels[i]);

    const SignalWindow c = generate_fault_window(3, 0.5, 0.0, rng);
    const SignalWindow d = generate_fault_window(3, 0.5, 0.0, rng);
    for (int i = 0; i < c.channels.size(); ++i) CHECK(c.channels[i] == d.channels[i]);
}

TEST_CASE("clean window equals the noiseless signature exactly") {
    RngStream rng(2, 0);
    const SignalWindow clean = generate_fault_window(1, 0.75, std::nullopt, rng);
    CHECK_FALSE(clean.snr_db.has_value());
    // the signature part of a noisy window matches: subtracting the clean
    // window from the noisy one leaves only the injected noise
    const SignalWindow noisy = generate_fault_window(1, 0.75, 10.0, rng);
    double diff_power = 0.0;
    for (int i = 0; i < clean.channels.size(); ++i) {
        const double d = noisy.channels[i] - clean.channels[i];
        diff_power += d * d;
    }
    CHECK(diff_power > 0.0);
}

TEST_CASE("distinct fault labels produce distinct signatures") {
    RngStream rng(3, 0);
    for (int a = 1; a <= 5; ++a)
        for (int b = a + 1; b <= 5; ++b) {
            const SignalWindow wa = generate_fault_window(a, 0.5, std::nullopt, rng);
            const SignalWindow wb = generate_fault_window(b, 0.5, std::nullopt, rng);
            double dist = 0.0;
            for (int i = 0; i < wa.channels.size(); ++i) {
                const double d = wa.channels[i] - wb.channels[i];
                dist += d * d;
            }
            CHECK(std::sqrt(dist) > 0.0);
        }
}

TEST_CASE("invalid labels and loads are rejected") {
    RngStream rng(4, 0);
    CHECK_THROWS_AS(generate_fault_window(0, 0.5, std::nullopt, rng), DomainError);
    CHECK_THROWS_AS(generate_fault_window(6, 0.5, std::nullopt, rng), DomainError);
    CHECK_THROWS_AS(generate_fault_window(1, 1.5, std::nullopt, rng), DomainError);
}

TEST_CASE("inject_noise hits the requested noise power") {
    RngStream rng(5, 0);
    const SignalWindow clean = generate_fault_window(2, 0.5, std::nullopt, rng);

    // -20 dB: noise power must be ~100x signal power per channel
    const SignalWindow noisy = inject_noise(clean, -20.0, rng.substream(1));
    for (int c = 0; c < kChannelCount; ++c) {
        double p_sig = 0.0, p_noise = 0.0;
        for (int t = 0; t < clean.length(); ++t) {
            const double s = clean.channels.at(c, t);
            const double n = noisy.channels.at(c, t) - s;
            p_sig += s * s;
            p_noise += n * n;
        }
        const double ratio = p_noise / p_sig;
        CHECK(ratio == doctest::Approx(100.0).epsilon(0.25));
    }

    // 0 dB: equal powers within 5% at T=256
    const SignalWindow zero_db = inject_noise(clean, 0.0, rng.substream(2));
    for (int c = 0; c < kChannelCount; ++c) {
        double p_sig = 0.0, p_noise = 0.0;
        for (int t = 0; t < clean.length(); ++t) {
            const double s = clean.channels.at(c, t);
            const double n = zero_db.channels.at(c, t) - s;
            p_sig += s * s;
            p_noise += n * n;
        }
        CHECK(p_noise / p_sig == doctest::Approx(1.0).epsilon(0.05));
    }

    // +60 dB: output within 0.2% relative L2 of the input
    const SignalWindow faint = inject_noise(clean, 60.0, rng.substream(3));
    double num = 0.0, den = 0.0;
    for (int i = 0; i < clean.channels.size(); ++i) {
        const double d = faint.channels[i] - clean.channels[i];
        num += d * d;
        den += clean.channels[i] * clean.channels[i];
    }
    CHECK(std::sqrt(num / den) < 0.002);
}

TEST_CASE("measured snr averages within half a dB of the request") {
    RngStream rng(6, 0);
    const SignalWindow clean = generate_fault_window(3, 1.0, std::nullopt, rng);
    for (double target : {-20.0, 0.0, 10.0}) {
        double sum_db = 0.0;
        int count = 0;
        for (int seed = 0; seed < 100; ++seed) {
            const SignalWindow noisy = inject_noise(clean, target, rng.substream(100 + seed));
            for (int c = 0; c < kChannelCount; ++c) {
                double p_sig = 0.0, p_noise = 0.0;
                for (int t = 0; t < clean.length(); ++t) {
                    const double s = clean.channels.at(c, t);
                    const double n = noisy.channels.at(c, t) - s;
                    p_sig += s * s;
                    p_noise += n * n;
                }
                sum_db += 10.0 * std::log10(p_sig / p_noise);
                ++count;
            }
        }
        CHECK(std::abs(sum_db / count - target) < 0.5);
    }
}

TEST_CASE("zero-power channels make the snr undefined") {
    SignalWindow flat;
    flat.channels = Tensor({kChannelCount, 16});
    flat.label = 1;
    CHECK_THROWS_AS(inject_noise(flat, 0.0, RngStream(1, 1)), DomainError);
}

TEST_CASE("noise composes additively across injections") {
    RngStream rng(7, 0);
    const SignalWindow clean = generate_fault_window(4, 0.25, std::nullopt, rng);
    const SignalWindow once = inject_noise(clean, 0.0, rng.substream(1));
    const SignalWindow twice = inject_noise(once, 0.0, rng.substream(2));
    CHECK(twice.snr_db.has_value());
    // two equal-power noise layers halve the SNR (-3 dB)
    CHECK(*twice.snr_db == doctest::Approx(-3.0103).epsilon(1e-3));
}
