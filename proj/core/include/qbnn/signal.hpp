#pragma once

#include <optional>

#include "qbnn/rng.hpp"
#include "qbnn/tensor.hpp"

namespace qbnn {

inline constexpr int kChannelCount = 5;
inline constexpr double kSampleRateHz = 5000.0;

/// Channel order within a window. The five drive-intrinsic measurements.
enum Channel : int {
    kSpeed = 0,
    kMotorTorque = 1,
    kDcLinkVoltage = 2,
    kActiveCurrent = 3,
    kReactiveCurrent = 4,
};

/// One labeled multichannel window of synthetic drive signals.
/// channels is [5 x T]; snr_db empty means the window is clean.
struct SignalWindow {
    Tensor channels;
    int label = 1;  // fault id, 1..5
    double load = 0.5;
    std::optional<double> snr_db;

    int length() const { return channels.dim(1); }
};

/// Synthesizes a clean fault window. Every fault class imprints a distinct
/// signature on a shared baseline (offset + rotation-frequency sinusoid per
/// channel, with a weak gear-mesh tone on torque and current channels):
///   1 missing tooth  - one sharp decaying impulse per rotation on torque and
///                      current channels
///   2 chipped tooth  - weaker double impulse per rotation
///   3 root crack     - strong amplitude modulation of the mesh tone
///   4 surface crack  - intermittent broadband high-frequency bursts
///   5 eccentricity   - low-frequency modulation of the speed channel
/// The rotation frequency scales with load. The rng drives the per-window
/// rotation phase and any intermittency; identical inputs reproduce the
/// window bit for bit.
SignalWindow generate_fault_window(int label, double load, std::optional<double> snr_db,
                                   const RngStream& rng, int window_length = 256);

/// Adds white Gaussian noise per channel, scaled so that
/// 10*log10(P_signal / P_noise) = snr_db with P the mean squared value of the
/// channel. Noise composes additively with whatever the window already holds.
SignalWindow inject_noise(const SignalWindow& window, double snr_db, RngStream rng);

} // namespace qbnn
