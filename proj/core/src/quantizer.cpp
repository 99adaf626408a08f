#include "qbnn/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qbnn/errors.hpp"

namespace qbnn {

QuantSpec QuantSpec::make(int bit_width, double clip_lo, double clip_hi, QuantSite site) {
    QuantSpec spec;
    spec.bit_width = bit_width;
    spec.clip_lo = clip_lo;
    spec.clip_hi = clip_hi;
    spec.scale = compute_scale(clip_lo, clip_hi, bit_width);
    spec.site = site;
    return spec;
}

double QuantSpec::grid_min_index() const {
    return -std::ldexp(1.0, bit_width - 1);
}

double QuantSpec::grid_max_index() const {
    return std::ldexp(1.0, bit_width - 1) - 1.0;
}

double compute_scale(double alpha, double beta, int bit_width) {
    if (bit_width < 2) throw DomainError("bit width must be >= 2, got " + std::to_string(bit_width));
    if (!(alpha < beta)) throw DomainError("clip range requires alpha < beta");
    const double levels = std::ldexp(1.0, bit_width) - 1.0;  // 2^b - 1
    return (beta - alpha) / levels;
}

namespace {

// round half away from zero
double round_away(double x) {
    return std::round(x);
}

} // namespace

double quantize(double x, const QuantSpec& spec) {
    const double k = round_away(x / spec.scale);
    const double clipped = std::min(std::max(k, spec.grid_min_index()), spec.grid_max_index());
    return clipped * spec.scale;
}

Tensor fake_quant_forward(const Tensor& x, const QuantSpec& spec) {
    Tensor out(x.dims());
    for (int i = 0; i < x.size(); ++i) out[i] = quantize(x[i], spec);
    return out;
}

bool ste_passes(double x, const QuantSpec& spec) {
    const double k = round_away(x / spec.scale);
    return k >= spec.grid_min_index() && k <= spec.grid_max_index();
}

Tensor ste_backward(const Tensor& upstream_grad, const Tensor& x, const QuantSpec& spec) {
    if (!upstream_grad.same_shape(x))
        throw ShapeError("ste_backward: gradient and input shapes differ");
    Tensor out(x.dims());
    for (int i = 0; i < x.size(); ++i)
        out[i] = ste_passes(x[i], spec) ? upstream_grad[i] : 0.0;
    return out;
}

RangeCalibrator::RangeCalibrator(CalibrationMode mode, double gamma)
    : mode_(mode), gamma_(gamma) {}

void RangeCalibrator::observe(const Tensor& batch) {
    double lo = batch[0], hi = batch[0];
    for (int i = 1; i < batch.size(); ++i) {
        lo = std::min(lo, batch[i]);
        hi = std::max(hi, batch[i]);
    }
    observe(lo, hi);
}

void RangeCalibrator::observe(double lo, double hi) {
    if (!seen_) {
        lo_ = lo;
        hi_ = hi;
        seen_ = true;
        return;
    }
    if (mode_ == CalibrationMode::MinMax) {
        lo_ = std::min(lo_, lo);
        hi_ = std::max(hi_, hi);
    } else {
        lo_ = gamma_ * lo_ + (1.0 - gamma_) * lo;
        hi_ = gamma_ * hi_ + (1.0 - gamma_) * hi;
    }
}

std::pair<double, double> RangeCalibrator::finalize(bool symmetric) const {
    if (!seen_) throw DomainError("calibrate_range: no observations");
    double lo = lo_, hi = hi_;
    if (symmetric) {
        const double m = std::max(std::abs(lo), std::abs(hi));
        lo = -m;
        hi = m;
    }
    if (!(hi - lo > 1e-12)) {
        // constant tensors give a degenerate range; widen so lo < hi
        const double pad = std::max(1e-6, std::abs(hi) * 1e-6);
        lo -= pad;
        hi += pad;
    }
    return {lo, hi};
}

const QuantSpec& QuantPlan::at(const SiteKey& key) const {
    auto it = specs.find(key);
    if (it == specs.end())
        throw ConfigError("quant plan is missing a spec for layer " +
                          std::to_string(key.layer_index) +
                          (key.site == QuantSite::Weight ? " (weight)" : " (activation)"));
    return it->second;
}

int QuantPlan::bit_width() const {
    if (specs.empty()) throw ConfigError("quant plan is empty");
    return specs.begin()->second.bit_width;
}

const std::vector<int>& supported_bit_widths() {
    static const std::vector<int> kBits = {2, 3, 4, 8, 16, 32};
    return kBits;
}

bool is_supported_bit_width(int b) {
    const auto& bits = supported_bit_widths();
    return std::find(bits.begin(), bits.end(), b) != bits.end();
}

} // namespace qbnn
