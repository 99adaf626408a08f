#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qbnn/qat.hpp"
#include "qbnn/uncertainty.hpp"

namespace qbnn {

/// One row of a bit-width sweep: accuracy A(b), calibration error U(b),
/// modeled compute cost C(b), deployed memory, and the float/quant fidelity
/// bound measured against the full-precision reference.
struct BitWidthReport {
    int bit_width = 32;
    double accuracy = 0.0;
    double ece = 0.0;
    double cost = 0.0;
    long long memory_payload_bytes = 0;
    long long memory_total_bytes = 0;
    double epsilon = 0.0;
    uint64_t seed = 1;
};

struct SelectionConstraints {
    double a_min = 0.0;  // required accuracy floor
    double u_max = 1.0;  // allowed calibration-error ceiling
};

/// Bit-product compute proxy: forward MACs scaled by (b_w * b_a) / (32 * 32).
double compute_cost(const Architecture& arch, int bits_weights, int bits_activations);

/// Deployed weight payload: one value per weight at b bits, rounded up to
/// whole bytes. Biases and quantizer constants are metadata, reported
/// separately by memory_overhead_bytes.
long long memory_payload_bytes(const BnnModel& model, int bit_width);

/// Fixed metadata: biases at 8 bytes each, three 8-byte range constants plus
/// a 4-byte bit-width per quantizer site, and a 16-byte header.
long long memory_overhead_bytes(const BnnModel& model);

struct SweepConfig {
    std::vector<int> bits = {2, 4, 8, 16};
    QatConfig qat;        // bit_width is overridden per sweep leg
    int eval_mc = 64;
    int fidelity_mc = 32;
    uint64_t seed = 1;
};

/// Runs QAT at every requested bit width from the same pretrained starting
/// point and evaluates each result. A b=32 row holding the unquantized
/// full-precision baseline is always included. Rows are ordered by bit width.
std::vector<BitWidthReport> sweep_bitwidths(const BnnModel& pretrained, const Dataset& dataset,
                                            const SweepConfig& config);

struct Selection {
    bool feasible = false;
    int bit_width = 0;        // valid when feasible
    BitWidthReport report;    // the chosen row, or the least-violating row
    double violation = 0.0;   // constraint violation of `report` (0 when feasible)
};

/// b* = argmin_b C(b) subject to A(b) >= a_min and U(b) <= u_max. Cost ties
/// break toward the smaller bit width. When no row is feasible the result
/// carries the row with the smallest total constraint violation.
Selection select_bitwidth(const std::vector<BitWidthReport>& reports,
                          const SelectionConstraints& constraints);

/// sweep.csv serialization (columns: b, accuracy, ece, cost,
/// memory_payload_bytes, memory_total_bytes, epsilon, seed).
std::string sweep_to_csv(const std::vector<BitWidthReport>& reports);
std::vector<BitWidthReport> sweep_from_csv(const std::string& content);

} // namespace qbnn
