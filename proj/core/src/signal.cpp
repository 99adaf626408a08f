#include "qbnn/signal.hpp"

#include <cmath>
#include <string>

#include "qbnn/errors.hpp"

namespace qbnn {

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

// shared baseline, per channel
constexpr double kOffset[kChannelCount] = {1.0, 0.6, 1.5, 0.8, 0.4};
constexpr double kFundAmp[kChannelCount] = {0.20, 0.30, 0.10, 0.30, 0.20};
constexpr double kChannelPhase[kChannelCount] = {0.0, 0.7, 1.4, 2.1, 2.8};

// gear geometry of the synthetic drive
constexpr double kBaseRotationHz = 100.0;  // at full load
constexpr int kMeshRatio = 16;             // teeth per rotation
constexpr double kMeshAmp = 0.05;          // baseline mesh tone on torque/currents

double rotation_hz(double load) { return kBaseRotationHz * (0.5 + 0.5 * load); }

bool torque_or_current(int c) {
    return c == kMotorTorque || c == kActiveCurrent || c == kReactiveCurrent;
}

// decaying impulse train: one impulse of amplitude `amp` at every rotation
// instant, decay constant tau seconds
void add_impulse_train(Tensor& ch, int c, int t_len, double f_rot, double phase01,
                       double amp, double tau_s, double extra_phase01) {
    const double period = kSampleRateHz / f_rot;  // samples per rotation
    const double first = period * (1.0 - std::fmod(phase01 + extra_phase01, 1.0));
    for (double t0 = first - period; t0 < t_len; t0 += period) {
        const int start = static_cast<int>(std::ceil(std::max(t0, 0.0)));
        for (int t = start; t < t_len && t - t0 < 6.0 * tau_s * kSampleRateHz; ++t) {
            ch.at(c, t) += amp * std::exp(-(t - t0) / (tau_s * kSampleRateHz));
        }
    }
}

} // namespace

SignalWindow generate_fault_window(int label, double load, std::optional<double> snr_db,
                                   const RngStream& rng, int window_length) {
    if (label < 1 || label > 5)
        throw DomainError("fault label must be in 1..5, got " + std::to_string(label));
    if (load < 0.0 || load > 1.0)
        throw DomainError("load must lie in [0, 1]");
    if (window_length < 8) throw DomainError("window length too short");

    RngStream sig_rng = rng.substream(0);
    const int t_len = window_length;
    const double f_rot = rotation_hz(load);
    const double phase01 = sig_rng.next_uniform();  // shared rotation phase, in turns

    SignalWindow win;
    win.channels = Tensor({kChannelCount, t_len});
    win.label = label;
    win.load = load;
    win.snr_db = std::nullopt;

    // baseline
    for (int c = 0; c < kChannelCount; ++c) {
        for (int t = 0; t < t_len; ++t) {
            const double arg = kTwoPi * (f_rot * t / kSampleRateHz + phase01) + kChannelPhase[c];
            double v = kOffset[c] + kFundAmp[c] * std::sin(arg);
            if (torque_or_current(c)) {
                const double mesh = kTwoPi * (kMeshRatio * f_rot * t / kSampleRateHz + phase01);
                v += kMeshAmp * std::sin(mesh);
            }
            win.channels.at(c, t) = v;
        }
    }

    switch (label) {
        case 1:  // missing tooth: one sharp impulse per rotation
            for (int c = 0; c < kChannelCount; ++c) {
                if (!torque_or_current(c)) continue;
                const double amp = c == kMotorTorque ? 0.9 : 0.55;
                add_impulse_train(win.channels, c, t_len, f_rot, phase01, amp, 0.0016, 0.0);
            }
            break;
        case 2:  // chipped tooth: weaker double impulse per rotation
            for (int c = 0; c < kChannelCount; ++c) {
                if (!torque_or_current(c)) continue;
                const double amp = c == kMotorTorque ? 0.4 : 0.25;
                add_impulse_train(win.channels, c, t_len, f_rot, phase01, amp, 0.0012, 0.0);
                add_impulse_train(win.channels, c, t_len, f_rot, phase01, amp, 0.0012, 0.18);
            }
            break;
        case 3:  // root crack: amplitude-modulated mesh harmonic
            for (int c = 0; c < kChannelCount; ++c) {
                if (!torque_or_current(c)) continue;
                const double amp = c == kMotorTorque ? 0.30 : 0.20;
                for (int t = 0; t < t_len; ++t) {
                    const double rot = kTwoPi * (f_rot * t / kSampleRateHz + phase01);
                    const double mesh = kTwoPi * (kMeshRatio * f_rot * t / kSampleRateHz + phase01);
                    win.channels.at(c, t) += amp * (1.0 + 0.8 * std::sin(rot)) * std::sin(mesh + 0.5);
                }
            }
            break;
        case 4: {  // surface crack: intermittent broadband high-frequency bursts
            const int n_bursts = 2 + static_cast<int>(sig_rng.next_u64() % 3ull);
            for (int k = 0; k < n_bursts; ++k) {
                const int center = static_cast<int>(sig_rng.next_uniform() * (t_len - 24)) + 12;
                const int half = 8;
                double prev[kChannelCount] = {0, 0, 0, 0, 0};
                for (int t = center - half; t <= center + half; ++t) {
                    const double env = 0.5 * (1.0 + std::cos(kTwoPi * (t - center) / (2.0 * half + 1)));
                    for (int c = 0; c < kChannelCount; ++c) {
                        if (!torque_or_current(c)) continue;
                        const double e = sig_rng.next_gaussian();
                        // first-difference whitens toward high frequency
                        win.channels.at(c, t) += 0.6 * env * (e - prev[c]) * M_SQRT1_2;
                        prev[c] = e;
                    }
                }
            }
            break;
        }
        case 5:  // eccentricity: low-frequency modulation of the speed channel
            for (int t = 0; t < t_len; ++t) {
                const double slow = kTwoPi * (0.25 * f_rot * t / kSampleRateHz + phase01);
                const double rot = kTwoPi * (f_rot * t / kSampleRateHz + phase01) + kChannelPhase[kSpeed];
                win.channels.at(kSpeed, t) +=
                    0.35 * std::sin(slow) + 0.7 * kFundAmp[kSpeed] * std::sin(slow) * std::sin(rot);
                win.channels.at(kReactiveCurrent, t) += 0.12 * std::sin(slow + 0.9);
            }
            break;
        default:
            break;
    }

    if (snr_db.has_value()) {
        win = inject_noise(win, *snr_db, rng.substream(1));
        win.snr_db = snr_db;
    }
    return win;
}

SignalWindow inject_noise(const SignalWindow& window, double snr_db, RngStream rng) {
    const int t_len = window.length();
    SignalWindow out = window;
    for (int c = 0; c < kChannelCount; ++c) {
        double power = 0.0;
        for (int t = 0; t < t_len; ++t) power += window.channels.at(c, t) * window.channels.at(c, t);
        power /= t_len;
        if (power <= 0.0)
            throw DomainError("inject_noise: channel " + std::to_string(c) +
                              " has zero power, SNR undefined");
        const double noise_sigma = std::sqrt(power * std::pow(10.0, -snr_db / 10.0));
        RngStream ch_rng = rng.substream(static_cast<uint64_t>(c));
        for (int t = 0; t < t_len; ++t)
            out.channels.at(c, t) += noise_sigma * ch_rng.next_gaussian();
    }
    if (window.snr_db.has_value()) {
        // powers compose additively; report the combined level
        const double p_old = std::pow(10.0, -*window.snr_db / 10.0);
        const double p_new = std::pow(10.0, -snr_db / 10.0);
        out.snr_db = -10.0 * std::log10(p_old + p_new);
    } else {
        out.snr_db = snr_db;
    }
    return out;
}

} // namespace qbnn
