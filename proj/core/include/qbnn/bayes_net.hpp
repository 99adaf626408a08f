#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qbnn/dataset.hpp"
#include "qbnn/quantizer.hpp"
#include "qbnn/rng.hpp"
#include "qbnn/tensor.hpp"

namespace qbnn {

enum class Activation { Relu, None };

struct LayerSpec {
    enum class Kind { Conv, Pool, Flatten, Dense } kind = Kind::Dense;
    // conv
    int filters = 0;
    int kernel_h = 1;
    int kernel_w = 1;
    int stride = 1;
    // dense
    int units = 0;
    Activation activation = Activation::None;
};

/// Network architecture as a composable layer list plus the input shape.
/// Pool layers halve the time (W) axis. The textual descriptor round-trips
/// through parse()/descriptor() and is what checkpoints store, e.g.
///   in:5x1x256|conv:8:1x5:s1:relu|pool|conv:16:1x5:s1:relu|pool|flatten|
///   dense:32:relu|dense:16:relu|dense:3:none
struct Architecture {
    int in_channels = kChannelCount;
    int in_height = 1;
    int in_width = 256;
    int class_count = 3;
    std::vector<LayerSpec> layers;

    static Architecture desk_default(int window_length);
    static Architecture parse(const std::string& descriptor);
    std::string descriptor() const;

    /// Resolved input/output shape per layer; throws ShapeError if the
    /// stack does not compose or the head width differs from class_count.
    std::vector<std::vector<int>> shapes() const;

    /// Multiply-accumulate count of one forward pass.
    long long mac_count() const;

    int parameterized_layer_count() const;
};

/// Mean-field Gaussian posterior over one layer's weights: each weight has
/// an independent N(mu, softplus(rho)^2) posterior against a shared
/// N(0, prior_sigma^2) prior. Biases are deterministic point parameters.
struct VariationalLayer {
    LayerSpec spec;
    Tensor mu;
    Tensor rho;
    Tensor bias;
    std::vector<int> in_dims;
    std::vector<int> out_dims;
};

struct TrainConfig {
    double learning_rate = 0.05;
    int epochs = 30;
    int batch_size = 16;
    int mc_train_samples = 2;
    int val_mc_samples = 16;
    uint64_t seed = 1;

    void validate() const;
};

struct BnnModel {
    Architecture arch;
    double prior_sigma = 0.1;
    std::vector<VariationalLayer> layers;  // parameterized layers, in arch order
    ChannelStats stats = ChannelStats::identity();
    TrainConfig train_config;  // config the model was last trained with

    int weight_parameter_count() const;
    int bias_parameter_count() const;
};

/// Fresh model: mu ~ N(0, 0.05^2), softplus(rho) = 0.01, biases zero.
BnnModel build_model(const Architecture& arch, double prior_sigma, uint64_t init_seed);

/// Per-call quantization policy for a forward pass. The frozen-plan
/// implementation reads a QuantPlan; the calibrating implementations used by
/// QAT and PTQ additionally update range estimates as activations stream by.
/// Returning nullopt leaves that site unquantized (calibration-only passes).
class QuantHooks {
  public:
    virtual ~QuantHooks() = default;
    virtual std::optional<QuantSpec> weight_spec(int param_index) = 0;
    virtual std::optional<QuantSpec> activation_spec(int param_index, const Tensor& values) = 0;
};

/// QuantHooks over a frozen plan; verifies the plan covers every site.
class FrozenPlanHooks : public QuantHooks {
  public:
    FrozenPlanHooks(const BnnModel& model, const QuantPlan& plan);
    std::optional<QuantSpec> weight_spec(int param_index) override;
    std::optional<QuantSpec> activation_spec(int param_index, const Tensor& values) override;

  private:
    const QuantPlan& plan_;
};

/// w = mu + softplus(rho) * eps with eps drawn from the stream.
Tensor sample_weights(const VariationalLayer& layer, RngStream& rng);

/// Closed-form KL( N(mu, sigma^2) || N(0, prior_sigma^2) ) summed over the
/// layer's weights.
double kl_divergence(const VariationalLayer& layer, double prior_sigma);
double kl_divergence(const BnnModel& model);

/// One stochastic forward pass on a standardized input [C x 1 x W].
/// Weight sample l uses rng.substream(l), so results are a pure function of
/// (model, input, rng identity) regardless of evaluation order. With hooks,
/// sampled weights and post-activation tensors pass through fake
/// quantization.
Tensor forward_input(const BnnModel& model, const Tensor& input, const RngStream& rng,
                     QuantHooks* hooks = nullptr);

/// Same, standardizing a raw window with the model's channel statistics.
Tensor forward(const BnnModel& model, const SignalWindow& window, const RngStream& rng,
               QuantHooks* hooks = nullptr);
Tensor forward(const BnnModel& model, const SignalWindow& window, const RngStream& rng,
               const QuantPlan& plan);

/// Parameter gradients, mirroring the parameterized layers of a model.
struct Gradients {
    struct LayerGrads {
        Tensor d_mu;
        Tensor d_rho;
        Tensor d_bias;
    };
    std::vector<LayerGrads> layers;

    static Gradients zeros_like(const BnnModel& model);
    void axpy(double scale, const Gradients& other);  // this += scale * other
};

struct ElboSettings {
    double kl_weight = 1.0;
    int dataset_size = 1;
    int mc_samples = 1;
};

struct ElboResult {
    double loss = 0.0;
    double data_term = 0.0;
    double kl_term = 0.0;
    Gradients grads;
};

/// Batch ELBO loss and its exact gradients via manual backprop:
///   loss = mean_{batch, samples} CE(softmax(logits), label)
///        + kl_weight * KL(model) / dataset_size.
/// The reparameterization path carries gradients into (mu, rho); quantizers
/// on the path apply the straight-through rule with saturation masking.
/// Inputs are standardized [C x 1 x W] tensors paired with labels in 0..2.
ElboResult elbo_loss(const BnnModel& model, const std::vector<const Tensor*>& inputs,
                     const std::vector<int>& labels, const RngStream& rng,
                     const ElboSettings& settings, QuantHooks* hooks = nullptr);

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double val_accuracy = 0.0;
    double kl_weight = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    // per-epoch clip ranges per site, recorded during QAT for the freeze audit
    std::vector<std::vector<std::pair<SiteKey, std::pair<double, double>>>> range_trace;
};

/// SGD training of the full-precision model on the train split, with the KL
/// weight annealed linearly from 0 to 1 over the first half of training.
/// Deterministic for a fixed config seed. Throws NumericError with
/// learning-rate guidance if the loss leaves the finite range.
TrainHistory train_fp32(BnnModel& model, const Dataset& dataset, const TrainConfig& config);

/// Checkpoint persistence (versioned JSON; exact double round-trip).
void save_checkpoint(const BnnModel& model, const std::string& path,
                     const QuantPlan* plan = nullptr);
struct Checkpoint {
    BnnModel model;
    std::optional<QuantPlan> plan;
};
Checkpoint load_checkpoint(const std::string& path);

} // namespace qbnn
