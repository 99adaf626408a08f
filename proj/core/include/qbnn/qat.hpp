#pragma once

#include <cstdint>

#include "qbnn/bayes_net.hpp"

namespace qbnn {

struct QatConfig {
    int bit_width = 8;
    // 0 means "derive from the pretrained model's config":
    // epochs = max(1, pretrain epochs / 4), learning_rate = pretrain lr / 10
    int epochs = 0;
    double learning_rate = 0.0;
    int batch_size = 16;
    int mc_train_samples = 2;
    int val_mc_samples = 16;
    double ema_gamma = 0.99;
    uint64_t seed = 1;

    void validate() const;
};

struct QatResult {
    BnnModel model;
    QuantPlan plan;
    TrainHistory history;
};

/// Quantization-aware fine-tuning of a pretrained model. Weight clip ranges
/// are fixed up front from the posterior (symmetric over mu +- 3 sigma);
/// activation ranges follow an exponential moving average of per-batch
/// min/max during the first fine-tuning epoch and freeze afterwards. Every
/// step samples posterior weights, fake-quantizes them and the activations,
/// and sends straight-through gradients into (mu, rho) and the biases.
QatResult qat_finetune(const BnnModel& pretrained, const Dataset& dataset, const QatConfig& config);

struct PtqResult {
    BnnModel model;
    QuantPlan plan;
};

/// Direct post-training quantization: no weight updates. Weight ranges come
/// from the posterior means alone; activation ranges from a single
/// calibration pass over the given split.
PtqResult post_training_quantize(const BnnModel& pretrained, int bit_width,
                                 const Dataset& dataset, Split calibration_split,
                                 uint64_t seed = 1);

/// Max over the slice of || mean_probs_ref - mean_probs_quant ||_2, with the
/// posterior sampling noise paired between the two models through a shared
/// stream, so the measurement isolates the quantization effect.
double fidelity_epsilon(const BnnModel& reference, const QuantPlan* reference_plan,
                        const BnnModel& quantized, const QuantPlan* quantized_plan,
                        const Dataset& dataset, Split slice, int mc_samples,
                        const RngStream& rng);

} // namespace qbnn
