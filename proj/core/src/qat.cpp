#include "qbnn/qat.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qbnn/errors.hpp"
#include "qbnn/io.hpp"
#include "qbnn/uncertainty.hpp"

namespace qbnn {

void QatConfig::validate() const {
    if (!is_supported_bit_width(bit_width))
        throw ConfigError("unsupported bit width: " + std::to_string(bit_width));
    if (epochs < 0) throw ConfigError("epochs must be >= 0 (0 derives a default)");
    if (learning_rate < 0.0) throw ConfigError("learning rate must be >= 0 (0 derives a default)");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (mc_train_samples < 1 || val_mc_samples < 1)
        throw ConfigError("Monte-Carlo sample counts must be >= 1");
    if (ema_gamma <= 0.0 || ema_gamma >= 1.0) throw ConfigError("ema gamma must lie in (0, 1)");
}

namespace {

// symmetric clip range covering mu +- 3 * softplus(rho)
QuantSpec weight_spec_from_posterior(const VariationalLayer& layer, int bits) {
    RangeCalibrator cal(CalibrationMode::MinMax);
    for (int i = 0; i < layer.mu.size(); ++i) {
        const double sigma = softplus(layer.rho[i]);
        cal.observe(layer.mu[i] - 3.0 * sigma, layer.mu[i] + 3.0 * sigma);
    }
    const auto [lo, hi] = cal.finalize(true);
    return QuantSpec::make(bits, lo, hi, QuantSite::Weight);
}

// symmetric clip range over the posterior means only (the naive scheme)
QuantSpec weight_spec_from_means(const VariationalLayer& layer, int bits) {
    RangeCalibrator cal(CalibrationMode::MinMax);
    cal.observe(layer.mu);
    const auto [lo, hi] = cal.finalize(true);
    return QuantSpec::make(bits, lo, hi, QuantSite::Weight);
}

// Hooks used during the first QAT epoch: weight specs are frozen, while each
// activation site keeps an EMA of per-batch min/max that is updated by the
// current tensor and then immediately applied.
class CalibratingHooks : public QuantHooks {
  public:
    CalibratingHooks(std::vector<QuantSpec> weight_specs, int bits, double gamma)
        : weight_specs_(std::move(weight_specs)), bits_(bits) {
        calibrators_.resize(weight_specs_.size(), RangeCalibrator(CalibrationMode::Ema, gamma));
    }

    std::optional<QuantSpec> weight_spec(int p) override { return weight_specs_[p]; }

    std::optional<QuantSpec> activation_spec(int p, const Tensor& values) override {
        calibrators_[p].observe(values);
        const auto [lo, hi] = calibrators_[p].finalize(false);
        return QuantSpec::make(bits_, lo, hi, QuantSite::Activation);
    }

    QuantPlan freeze() const {
        QuantPlan plan;
        for (size_t p = 0; p < weight_specs_.size(); ++p) {
            plan.set({static_cast<int>(p), QuantSite::Weight}, weight_specs_[p]);
            const auto [lo, hi] = calibrators_[p].finalize(false);
            plan.set({static_cast<int>(p), QuantSite::Activation},
                     QuantSpec::make(bits_, lo, hi, QuantSite::Activation));
        }
        return plan;
    }

    bool calibrated() const {
        for (const auto& c : calibrators_)
            if (!c.has_observations()) return false;
        return true;
    }

  private:
    std::vector<QuantSpec> weight_specs_;
    std::vector<RangeCalibrator> calibrators_;
    int bits_;
};

// Calibration-only pass for PTQ: quantizes weights, observes activations,
// quantizes nothing on the activation side.
class ObservingHooks : public QuantHooks {
  public:
    ObservingHooks(std::vector<QuantSpec> weight_specs)
        : weight_specs_(std::move(weight_specs)),
          calibrators_(weight_specs_.size(), RangeCalibrator(CalibrationMode::MinMax)) {}

    std::optional<QuantSpec> weight_spec(int p) override { return weight_specs_[p]; }

    std::optional<QuantSpec> activation_spec(int p, const Tensor& values) override {
        calibrators_[p].observe(values);
        return std::nullopt;
    }

    QuantPlan freeze(int bits) const {
        QuantPlan plan;
        for (size_t p = 0; p < weight_specs_.size(); ++p) {
            plan.set({static_cast<int>(p), QuantSite::Weight}, weight_specs_[p]);
            const auto [lo, hi] = calibrators_[p].finalize(false);
            plan.set({static_cast<int>(p), QuantSite::Activation},
                     QuantSpec::make(bits, lo, hi, QuantSite::Activation));
        }
        return plan;
    }

  private:
    std::vector<QuantSpec> weight_specs_;
    std::vector<RangeCalibrator> calibrators_;
};

double quantized_accuracy(const BnnModel& model, const QuantPlan& plan,
                          const std::vector<Tensor>& inputs, const std::vector<int>& labels,
                          int mc_samples, const RngStream& rng) {
    if (inputs.empty()) return 0.0;
    FrozenPlanHooks hooks(model, plan);
    int correct = 0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        RngStream wrng = rng.substream(i);
        std::vector<double> mean(model.arch.class_count, 0.0);
        for (int s = 0; s < mc_samples; ++s) {
            const Tensor logits =
                forward_input(model, inputs[i], wrng.substream(static_cast<uint64_t>(s)), &hooks);
            const Tensor probs = ops::softmax(logits);
            for (int k = 0; k < probs.size(); ++k) mean[k] += probs[k];
        }
        int arg = 0;
        for (size_t k = 1; k < mean.size(); ++k)
            if (mean[k] > mean[arg]) arg = static_cast<int>(k);
        if (arg == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / inputs.size();
}

std::vector<std::pair<SiteKey, std::pair<double, double>>> plan_ranges(const QuantPlan& plan) {
    std::vector<std::pair<SiteKey, std::pair<double, double>>> out;
    for (const auto& [key, spec] : plan.specs)
        out.emplace_back(key, std::make_pair(spec.clip_lo, spec.clip_hi));
    return out;
}

} // namespace

QatResult qat_finetune(const BnnModel& pretrained, const Dataset& dataset,
                       const QatConfig& config) {
    config.validate();
    const int epochs =
        config.epochs > 0 ? config.epochs : std::max(1, pretrained.train_config.epochs / 4);
    const double lr = config.learning_rate > 0.0 ? config.learning_rate
                                                 : pretrained.train_config.learning_rate * 0.1;

    QatResult result;
    result.model = pretrained;
    BnnModel& model = result.model;

    const auto train_idx = dataset.indices_of(Split::Train);
    const auto val_idx = dataset.indices_of(Split::Val);
    if (train_idx.empty()) throw ConfigError("training split is empty");

    std::vector<Tensor> train_inputs;
    std::vector<int> train_labels;
    for (int i : train_idx) {
        train_inputs.push_back(standardize(dataset.windows[i], model.stats));
        train_labels.push_back(dataset.windows[i].label - 1);
    }
    std::vector<Tensor> val_inputs;
    std::vector<int> val_labels;
    for (int i : val_idx) {
        val_inputs.push_back(standardize(dataset.windows[i], model.stats));
        val_labels.push_back(dataset.windows[i].label - 1);
    }

    std::vector<QuantSpec> weight_specs;
    for (const auto& layer : model.layers)
        weight_specs.push_back(weight_spec_from_posterior(layer, config.bit_width));

    CalibratingHooks calib_hooks(weight_specs, config.bit_width, config.ema_gamma);
    QuantPlan frozen;
    std::unique_ptr<FrozenPlanHooks> frozen_hooks;

    const int n = static_cast<int>(train_inputs.size());
    const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    RngStream root(config.seed, 8181);
    TrainHistory& history = result.history;
    long long step = 0;

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 1; epoch <= epochs; ++epoch) {
        const bool calibrating = epoch == 1;
        RngStream shuffle_rng = root.substream(static_cast<uint64_t>(epoch));
        shuffle_indices(order, shuffle_rng);
        double loss_sum = 0.0;
        for (int start = 0; start < n; start += config.batch_size) {
            const int end = std::min(n, start + config.batch_size);
            std::vector<const Tensor*> batch_in;
            std::vector<int> batch_lab;
            for (int k = start; k < end; ++k) {
                batch_in.push_back(&train_inputs[order[k]]);
                batch_lab.push_back(train_labels[order[k]]);
            }
            ElboSettings settings{1.0, n, config.mc_train_samples};
            const RngStream step_rng = root.substream(1000000ull + static_cast<uint64_t>(step));
            QuantHooks* hooks = calibrating ? static_cast<QuantHooks*>(&calib_hooks)
                                            : static_cast<QuantHooks*>(frozen_hooks.get());
            ElboResult res = elbo_loss(model, batch_in, batch_lab, step_rng, settings, hooks);
            if (!std::isfinite(res.loss))
                throw NumericError("non-finite fine-tuning loss at step " + std::to_string(step) +
                                   "; try a lower learning rate (current " + io::format_double(lr) +
                                   ")");
            loss_sum += res.loss;
            for (size_t p = 0; p < model.layers.size(); ++p) {
                auto& layer = model.layers[p];
                const auto& g = res.grads.layers[p];
                for (int i = 0; i < layer.mu.size(); ++i) {
                    layer.mu[i] -= lr * g.d_mu[i];
                    layer.rho[i] -= lr * g.d_rho[i];
                }
                for (int i = 0; i < layer.bias.size(); ++i) layer.bias[i] -= lr * g.d_bias[i];
            }
            ++step;
        }
        if (calibrating) {
            if (!calib_hooks.calibrated())
                throw ConfigError("activation calibration saw no data during the first epoch");
            frozen = calib_hooks.freeze();
            frozen_hooks = std::make_unique<FrozenPlanHooks>(model, frozen);
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / steps_per_epoch;
        stats.kl_weight = 1.0;
        stats.val_accuracy =
            quantized_accuracy(model, frozen, val_inputs, val_labels, config.val_mc_samples,
                               root.substream(9000000ull + static_cast<uint64_t>(epoch)));
        history.epochs.push_back(stats);
        history.range_trace.push_back(plan_ranges(frozen));
    }

    result.plan = frozen;
    return result;
}

PtqResult post_training_quantize(const BnnModel& pretrained, int bit_width,
                                 const Dataset& dataset, Split calibration_split, uint64_t seed) {
    if (!is_supported_bit_width(bit_width))
        throw ConfigError("unsupported bit width: " + std::to_string(bit_width));
    const auto calib_idx = dataset.indices_of(calibration_split);
    if (calib_idx.empty()) throw ConfigError("post_training_quantize: calibration slice is empty");

    PtqResult result;
    result.model = pretrained;

    std::vector<QuantSpec> weight_specs;
    for (const auto& layer : result.model.layers)
        weight_specs.push_back(weight_spec_from_means(layer, bit_width));

    ObservingHooks observe(weight_specs);
    RngStream root(seed, 9191);
    for (size_t j = 0; j < calib_idx.size(); ++j) {
        const Tensor input = standardize(dataset.windows[calib_idx[j]], result.model.stats);
        forward_input(result.model, input, root.substream(j), &observe);
    }
    result.plan = observe.freeze(bit_width);
    return result;
}

double fidelity_epsilon(const BnnModel& reference, const QuantPlan* reference_plan,
                        const BnnModel& quantized, const QuantPlan* quantized_plan,
                        const Dataset& dataset, Split slice, int mc_samples,
                        const RngStream& rng) {
    if (reference.arch.descriptor() != quantized.arch.descriptor())
        throw ConfigError("fidelity_epsilon: models have different architectures");
    const auto idx = dataset.indices_of(slice);
    if (idx.empty()) throw ConfigError("fidelity_epsilon: slice is empty");
    double eps = 0.0;
    for (size_t j = 0; j < idx.size(); ++j) {
        const SignalWindow& w = dataset.windows[idx[j]];
        const RngStream wrng = rng.substream(j);
        const PredictiveSummary a = predict_mc(reference, w, mc_samples, wrng, reference_plan);
        const PredictiveSummary b = predict_mc(quantized, w, mc_samples, wrng, quantized_plan);
        double dist_sq = 0.0;
        for (int k = 0; k < a.mean_probs.size(); ++k) {
            const double d = a.mean_probs[k] - b.mean_probs[k];
            dist_sq += d * d;
        }
        eps = std::max(eps, std::sqrt(dist_sq));
    }
    return eps;
}

} // namespace qbnn
