#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qbnn/tensor.hpp"

namespace qbnn {

enum class QuantSite { Weight, Activation };

/// One per-tensor quantizer: bit width b, clipping range [clip_lo, clip_hi]
/// and the derived scale S = (clip_hi - clip_lo) / (2^b - 1). Dequantized
/// values live on the signed grid {k*S : k in [-2^(b-1), 2^(b-1)-1]}; there
/// is no zero point, so for an asymmetric range the grid covers
/// [-2^(b-1)*S, (2^(b-1)-1)*S] rather than [clip_lo, clip_hi] itself.
struct QuantSpec {
    int bit_width = 8;
    double clip_lo = -1.0;
    double clip_hi = 1.0;
    double scale = 0.0;
    QuantSite site = QuantSite::Weight;

    static QuantSpec make(int bit_width, double clip_lo, double clip_hi, QuantSite site);

    double grid_min_index() const;  // -2^(b-1)
    double grid_max_index() const;  //  2^(b-1) - 1
};

/// S = (beta - alpha) / (2^b - 1). Requires alpha < beta and b >= 2.
double compute_scale(double alpha, double beta, int bit_width);

/// clip(round(x / S), -2^(b-1), 2^(b-1)-1) * S with round-half-away-from-zero.
double quantize(double x, const QuantSpec& spec);

/// Elementwise quantize-dequantize; every output lands on the spec's grid.
Tensor fake_quant_forward(const Tensor& x, const QuantSpec& spec);

/// Straight-through backward rule for fake_quant_forward: the upstream
/// gradient passes unchanged wherever round(x/S) stays inside the integer
/// grid and is zeroed on saturated (clipped) elements.
Tensor ste_backward(const Tensor& upstream_grad, const Tensor& x, const QuantSpec& spec);

/// True where round(x/S) lies inside the integer grid (no clipping).
bool ste_passes(double x, const QuantSpec& spec);

enum class CalibrationMode { MinMax, Ema };

/// Accumulates per-batch observations into a clipping range. MinMax keeps the
/// running min/max over everything seen; Ema keeps an exponential moving
/// average of the per-batch min/max with factor gamma (first batch seeds the
/// average). finalize() optionally symmetrizes to [-m, m], m = max(|lo|,|hi|),
/// and widens degenerate ranges so the QuantSpec invariant lo < hi holds.
class RangeCalibrator {
  public:
    explicit RangeCalibrator(CalibrationMode mode, double gamma = 0.99);

    void observe(const Tensor& batch);
    void observe(double lo, double hi);
    bool has_observations() const { return seen_; }

    std::pair<double, double> finalize(bool symmetric) const;

  private:
    CalibrationMode mode_;
    double gamma_;
    bool seen_ = false;
    double lo_ = 0.0;
    double hi_ = 0.0;
};

/// Identifies one quantizable site of a model: the weight tensor or the
/// post-activation output of parameterized layer `layer_index`.
struct SiteKey {
    int layer_index = 0;
    QuantSite site = QuantSite::Weight;

    bool operator<(const SiteKey& other) const {
        if (layer_index != other.layer_index) return layer_index < other.layer_index;
        return static_cast<int>(site) < static_cast<int>(other.site);
    }
    bool operator==(const SiteKey& other) const {
        return layer_index == other.layer_index && site == other.site;
    }
};

/// Map from model site to its frozen QuantSpec.
struct QuantPlan {
    std::map<SiteKey, QuantSpec> specs;

    bool has(const SiteKey& key) const { return specs.count(key) != 0; }
    const QuantSpec& at(const SiteKey& key) const;
    void set(const SiteKey& key, const QuantSpec& spec) { specs[key] = spec; }
    int bit_width() const;  // common bit width of all sites (plans are single-b)
};

bool is_supported_bit_width(int b);
const std::vector<int>& supported_bit_widths();  // {2, 3, 4, 8, 16, 32}

} // namespace qbnn
