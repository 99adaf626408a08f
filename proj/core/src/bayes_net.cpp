#include "qbnn/bayes_net.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qbnn/errors.hpp"
#include "qbnn/io.hpp"

namespace qbnn {

using nlohmann::json;

namespace {

const char* act_name(Activation a) { return a == Activation::Relu ? "relu" : "none"; }

Activation act_from_name(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "none") return Activation::None;
    throw ConfigError("unknown activation: " + s);
}

std::vector<std::string> split_on(const std::string& text, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    for (char ch : text) {
        if (ch == sep) {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    parts.push_back(cur);
    return parts;
}

int parse_int(const std::string& s) {
    try {
        size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw ConfigError("trailing characters in integer: " + s);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("cannot parse integer: '" + s + "'");
    }
}

} // namespace

Architecture Architecture::desk_default(int window_length) {
    std::ostringstream d;
    d << "in:" << kChannelCount << "x1x" << window_length
      << "|conv:8:1x5:s1:relu|pool|conv:16:1x5:s1:relu|pool|flatten"
      << "|dense:32:relu|dense:16:relu|dense:3:none";
    return parse(d.str());
}

Architecture Architecture::parse(const std::string& descriptor) {
    const auto segs = split_on(descriptor, '|');
    if (segs.empty() || segs[0].rfind("in:", 0) != 0)
        throw ConfigError("architecture descriptor must start with in:CxHxW");
    Architecture arch;
    {
        const auto dims = split_on(segs[0].substr(3), 'x');
        if (dims.size() != 3) throw ConfigError("input shape must be CxHxW");
        arch.in_channels = parse_int(dims[0]);
        arch.in_height = parse_int(dims[1]);
        arch.in_width = parse_int(dims[2]);
    }
    for (size_t i = 1; i < segs.size(); ++i) {
        const auto f = split_on(segs[i], ':');
        LayerSpec spec;
        if (f[0] == "conv") {
            if (f.size() != 5) throw ConfigError("conv layer needs conv:F:KHxKW:sS:ACT");
            spec.kind = LayerSpec::Kind::Conv;
            spec.filters = parse_int(f[1]);
            const auto k = split_on(f[2], 'x');
            if (k.size() != 2) throw ConfigError("conv kernel must be KHxKW");
            spec.kernel_h = parse_int(k[0]);
            spec.kernel_w = parse_int(k[1]);
            if (f[3].empty() || f[3][0] != 's') throw ConfigError("conv stride must be sN");
            spec.stride = parse_int(f[3].substr(1));
            spec.activation = act_from_name(f[4]);
        } else if (f[0] == "pool") {
            spec.kind = LayerSpec::Kind::Pool;
        } else if (f[0] == "flatten") {
            spec.kind = LayerSpec::Kind::Flatten;
        } else if (f[0] == "dense") {
            if (f.size() != 3) throw ConfigError("dense layer needs dense:N:ACT");
            spec.kind = LayerSpec::Kind::Dense;
            spec.units = parse_int(f[1]);
            spec.activation = act_from_name(f[2]);
        } else {
            throw ConfigError("unknown layer kind: " + f[0]);
        }
        arch.layers.push_back(spec);
    }
    if (arch.layers.empty() || arch.layers.back().kind != LayerSpec::Kind::Dense)
        throw ConfigError("architecture must end in a dense classification head");
    arch.class_count = arch.layers.back().units;
    arch.shapes();  // validate composition
    return arch;
}

std::string Architecture::descriptor() const {
    std::ostringstream out;
    out << "in:" << in_channels << "x" << in_height << "x" << in_width;
    for (const LayerSpec& l : layers) {
        switch (l.kind) {
            case LayerSpec::Kind::Conv:
                out << "|conv:" << l.filters << ":" << l.kernel_h << "x" << l.kernel_w << ":s"
                    << l.stride << ":" << act_name(l.activation);
                break;
            case LayerSpec::Kind::Pool: out << "|pool"; break;
            case LayerSpec::Kind::Flatten: out << "|flatten"; break;
            case LayerSpec::Kind::Dense:
                out << "|dense:" << l.units << ":" << act_name(l.activation);
                break;
        }
    }
    return out.str();
}

std::vector<std::vector<int>> Architecture::shapes() const {
    std::vector<std::vector<int>> out;
    std::vector<int> cur = {in_channels, in_height, in_width};
    out.push_back(cur);
    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        switch (l.kind) {
            case LayerSpec::Kind::Conv: {
                if (cur.size() != 3) throw ShapeError("conv layer needs a [CxHxW] input");
                if (l.kernel_h > cur[1] || l.kernel_w > cur[2])
                    throw ShapeError("conv kernel larger than input");
                cur = {l.filters, (cur[1] - l.kernel_h) / l.stride + 1,
                       (cur[2] - l.kernel_w) / l.stride + 1};
                break;
            }
            case LayerSpec::Kind::Pool: {
                if (cur.size() != 3) throw ShapeError("pool layer needs a [CxHxW] input");
                if (cur[2] < 2) throw ShapeError("pool layer needs W >= 2");
                cur = {cur[0], cur[1], cur[2] / 2};
                break;
            }
            case LayerSpec::Kind::Flatten: {
                if (cur.size() != 3) throw ShapeError("flatten needs a [CxHxW] input");
                cur = {cur[0] * cur[1] * cur[2]};
                break;
            }
            case LayerSpec::Kind::Dense: {
                if (cur.size() != 1)
                    throw ShapeError("dense layer needs a flat input; add a flatten layer");
                cur = {l.units};
                break;
            }
        }
        out.push_back(cur);
    }
    if (out.back().size() != 1 || out.back()[0] != class_count)
        throw ShapeError("classification head width does not match class count");
    return out;
}

long long Architecture::mac_count() const {
    const auto ss = shapes();
    long long macs = 0;
    for (size_t i = 0; i < layers.size(); ++i) {
        const LayerSpec& l = layers[i];
        const auto& in = ss[i];
        const auto& out = ss[i + 1];
        if (l.kind == LayerSpec::Kind::Conv)
            macs += static_cast<long long>(l.filters) * in[0] * l.kernel_h * l.kernel_w * out[1] *
                    out[2];
        else if (l.kind == LayerSpec::Kind::Dense)
            macs += static_cast<long long>(in[0]) * l.units;
    }
    return macs;
}

int Architecture::parameterized_layer_count() const {
    int n = 0;
    for (const LayerSpec& l : layers)
        if (l.kind == LayerSpec::Kind::Conv || l.kind == LayerSpec::Kind::Dense) ++n;
    return n;
}

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("learning rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (mc_train_samples < 1 || val_mc_samples < 1)
        throw ConfigError("Monte-Carlo sample counts must be >= 1");
}

int BnnModel::weight_parameter_count() const {
    int n = 0;
    for (const auto& l : layers) n += l.mu.size();
    return n;
}

int BnnModel::bias_parameter_count() const {
    int n = 0;
    for (const auto& l : layers) n += l.bias.size();
    return n;
}

BnnModel build_model(const Architecture& arch, double prior_sigma, uint64_t init_seed) {
    if (prior_sigma <= 0.0) throw ConfigError("prior sigma must be positive");
    const auto ss = arch.shapes();
    BnnModel model;
    model.arch = arch;
    model.prior_sigma = prior_sigma;
    RngStream init_rng(init_seed, 77);
    const double rho0 = inverse_softplus(0.01);
    int p = 0;
    for (size_t i = 0; i < arch.layers.size(); ++i) {
        const LayerSpec& spec = arch.layers[i];
        if (spec.kind != LayerSpec::Kind::Conv && spec.kind != LayerSpec::Kind::Dense) continue;
        VariationalLayer layer;
        layer.spec = spec;
        layer.in_dims = ss[i];
        layer.out_dims = ss[i + 1];
        std::vector<int> wdims;
        int bias_n;
        if (spec.kind == LayerSpec::Kind::Conv) {
            wdims = {spec.filters, ss[i][0], spec.kernel_h, spec.kernel_w};
            bias_n = spec.filters;
        } else {
            wdims = {spec.units, ss[i][0]};
            bias_n = spec.units;
        }
        RngStream lr = init_rng.substream(static_cast<uint64_t>(p));
        layer.mu = gaussian_sample(lr, wdims);
        for (int k = 0; k < layer.mu.size(); ++k) layer.mu[k] *= 0.05;
        layer.rho = Tensor::full(wdims, rho0);
        layer.bias = Tensor::zeros({bias_n});
        model.layers.push_back(std::move(layer));
        ++p;
    }
    return model;
}

FrozenPlanHooks::FrozenPlanHooks(const BnnModel& model, const QuantPlan& plan) : plan_(plan) {
    for (int p = 0; p < static_cast<int>(model.layers.size()); ++p) {
        plan.at({p, QuantSite::Weight});
        plan.at({p, QuantSite::Activation});
    }
}

std::optional<QuantSpec> FrozenPlanHooks::weight_spec(int param_index) {
    return plan_.at({param_index, QuantSite::Weight});
}

std::optional<QuantSpec> FrozenPlanHooks::activation_spec(int param_index, const Tensor&) {
    return plan_.at({param_index, QuantSite::Activation});
}

Tensor sample_weights(const VariationalLayer& layer, RngStream& rng) {
    Tensor w = gaussian_sample(rng, layer.mu.dims());
    for (int i = 0; i < w.size(); ++i)
        w[i] = layer.mu[i] + softplus(layer.rho[i]) * w[i];
    return w;
}

double kl_divergence(const VariationalLayer& layer, double prior_sigma) {
    double kl = 0.0;
    const double s0_sq = prior_sigma * prior_sigma;
    for (int i = 0; i < layer.mu.size(); ++i) {
        const double sigma = softplus(layer.rho[i]);
        kl += std::log(prior_sigma / sigma) +
              (sigma * sigma + layer.mu[i] * layer.mu[i]) / (2.0 * s0_sq) - 0.5;
    }
    return kl;
}

double kl_divergence(const BnnModel& model) {
    double kl = 0.0;
    for (const auto& layer : model.layers) kl += kl_divergence(layer, model.prior_sigma);
    return kl;
}

namespace {

struct SampledLayer {
    Tensor eps;
    Tensor w_raw;   // mu + softplus(rho) * eps
    Tensor w_used;  // after optional fake quantization
    QuantSpec w_spec;
    bool quantized = false;
};

std::vector<SampledLayer> sample_all_weights(const BnnModel& model, const RngStream& rng,
                                             QuantHooks* hooks) {
    std::vector<SampledLayer> out(model.layers.size());
    for (size_t p = 0; p < model.layers.size(); ++p) {
        const VariationalLayer& layer = model.layers[p];
        RngStream lr = rng.substream(p);
        out[p].eps = gaussian_sample(lr, layer.mu.dims());
        out[p].w_raw = Tensor(layer.mu.dims());
        for (int i = 0; i < layer.mu.size(); ++i)
            out[p].w_raw[i] = layer.mu[i] + softplus(layer.rho[i]) * out[p].eps[i];
        std::optional<QuantSpec> spec;
        if (hooks != nullptr) spec = hooks->weight_spec(static_cast<int>(p));
        if (spec.has_value()) {
            out[p].w_spec = *spec;
            out[p].w_used = fake_quant_forward(out[p].w_raw, out[p].w_spec);
            out[p].quantized = true;
        } else {
            out[p].w_used = out[p].w_raw;
        }
    }
    return out;
}

struct LayerTrace {
    Tensor input;
    Tensor preact;
    Tensor act;
    bool a_quant = false;
    QuantSpec a_spec;
    std::vector<int> pool_argmax;
    std::vector<int> pool_tr_dims;  // dims of the transposed tensor fed to maxpool
};

struct Trace {
    std::vector<LayerTrace> entries;
};

Tensor forward_with_weights(const BnnModel& model, const std::vector<SampledLayer>& weights,
                            const Tensor& input, QuantHooks* hooks, Trace* trace) {
    if (input.rank() != 3 || input.dim(0) != model.arch.in_channels ||
        input.dim(1) != model.arch.in_height || input.dim(2) != model.arch.in_width)
        throw ShapeError("forward input shape does not match the architecture");
    Tensor cur = input;
    if (trace) trace->entries.resize(model.arch.layers.size());
    int p = 0;
    for (size_t i = 0; i < model.arch.layers.size(); ++i) {
        const LayerSpec& spec = model.arch.layers[i];
        LayerTrace* tr = trace ? &trace->entries[i] : nullptr;
        switch (spec.kind) {
            case LayerSpec::Kind::Pool: {
                const Tensor transposed = ops::transpose_hw(cur);
                std::vector<int> argmax;
                const Tensor pooled = ops::maxpool_2x1_with_argmax(transposed, argmax);
                if (tr) {
                    tr->pool_argmax = std::move(argmax);
                    tr->pool_tr_dims = transposed.dims();
                }
                cur = ops::transpose_hw(pooled);
                break;
            }
            case LayerSpec::Kind::Flatten: {
                cur = Tensor({cur.size()}, cur.data());
                break;
            }
            case LayerSpec::Kind::Conv:
            case LayerSpec::Kind::Dense: {
                const SampledLayer& sl = weights[p];
                if (tr) tr->input = cur;
                Tensor pre;
                if (spec.kind == LayerSpec::Kind::Conv) {
                    pre = ops::conv2d(cur, sl.w_used, spec.stride);
                    for (int f = 0; f < pre.dim(0); ++f) {
                        const double b = model.layers[p].bias[f];
                        for (int r = 0; r < pre.dim(1); ++r)
                            for (int c = 0; c < pre.dim(2); ++c) pre.at(f, r, c) += b;
                    }
                } else {
                    const Tensor& w = sl.w_used;
                    const Tensor x({cur.size(), 1}, cur.data());
                    Tensor y = ops::matmul(w, x);
                    pre = Tensor({w.dim(0)}, y.data());
                    for (int o = 0; o < pre.size(); ++o) pre[o] += model.layers[p].bias[o];
                }
                Tensor act = spec.activation == Activation::Relu ? ops::relu(pre) : pre;
                if (tr) {
                    tr->preact = pre;
                    tr->act = act;
                }
                std::optional<QuantSpec> aspec;
                if (hooks != nullptr) aspec = hooks->activation_spec(p, act);
                if (aspec.has_value()) {
                    cur = fake_quant_forward(act, *aspec);
                    if (tr) {
                        tr->a_quant = true;
                        tr->a_spec = *aspec;
                    }
                } else {
                    cur = act;
                }
                ++p;
                break;
            }
        }
    }
    return cur;
}

// Backward through one traced forward pass. Accumulates the gradient w.r.t.
// the (possibly quantized) weight tensors and biases; the weight-side STE and
// reparameterization steps happen once per Monte-Carlo sample in elbo_loss.
void backward_with_weights(const BnnModel& model, const std::vector<SampledLayer>& weights,
                           const Trace& trace, const Tensor& grad_output,
                           std::vector<Tensor>& d_w_used, Gradients& grads) {
    const auto shapes = model.arch.shapes();
    Tensor g = grad_output;
    int p = static_cast<int>(model.layers.size());
    for (int i = static_cast<int>(model.arch.layers.size()) - 1; i >= 0; --i) {
        const LayerSpec& spec = model.arch.layers[i];
        const LayerTrace& tr = trace.entries[i];
        switch (spec.kind) {
            case LayerSpec::Kind::Pool: {
                Tensor g_tr = ops::transpose_hw(g);
                Tensor g_in_tr = ops::maxpool_2x1_backward(g_tr, tr.pool_argmax, tr.pool_tr_dims);
                g = ops::transpose_hw(g_in_tr);
                break;
            }
            case LayerSpec::Kind::Flatten: {
                g = Tensor(shapes[i], g.data());
                break;
            }
            case LayerSpec::Kind::Conv:
            case LayerSpec::Kind::Dense: {
                --p;
                const SampledLayer& sl = weights[p];
                if (tr.a_quant) g = ste_backward(g, tr.act, tr.a_spec);
                if (spec.activation == Activation::Relu)
                    for (int k = 0; k < g.size(); ++k)
                        if (tr.preact[k] <= 0.0) g[k] = 0.0;
                if (spec.kind == LayerSpec::Kind::Dense) {
                    const Tensor& x = tr.input;
                    const Tensor& w = sl.w_used;
                    for (int o = 0; o < w.dim(0); ++o) {
                        grads.layers[p].d_bias[o] += g[o];
                        for (int in = 0; in < w.dim(1); ++in)
                            d_w_used[p].at(o, in) += g[o] * x[in];
                    }
                    Tensor g_in({w.dim(1)});
                    for (int in = 0; in < w.dim(1); ++in) {
                        double acc = 0.0;
                        for (int o = 0; o < w.dim(0); ++o) acc += w.at(o, in) * g[o];
                        g_in[in] = acc;
                    }
                    g = g_in;
                } else {
                    for (int f = 0; f < g.dim(0); ++f) {
                        double acc = 0.0;
                        for (int r = 0; r < g.dim(1); ++r)
                            for (int c = 0; c < g.dim(2); ++c) acc += g.at(f, r, c);
                        grads.layers[p].d_bias[f] += acc;
                    }
                    const Tensor dk =
                        ops::conv2d_backward_kernels(g, tr.input, sl.w_used.dims(), spec.stride);
                    for (int k = 0; k < dk.size(); ++k) d_w_used[p][k] += dk[k];
                    g = ops::conv2d_backward_input(g, sl.w_used, tr.input.dims(), spec.stride);
                }
                break;
            }
        }
    }
}

Tensor softmax_backward_from_ce(const Tensor& probs, int label, double scale) {
    Tensor g(probs.dims());
    if (probs[label] <= 1e-12) return g;  // the probability floor is active; flat region
    for (int i = 0; i < probs.size(); ++i)
        g[i] = (probs[i] - (i == label ? 1.0 : 0.0)) * scale;
    return g;
}

} // namespace

Tensor forward_input(const BnnModel& model, const Tensor& input, const RngStream& rng,
                     QuantHooks* hooks) {
    const auto weights = sample_all_weights(model, rng, hooks);
    return forward_with_weights(model, weights, input, hooks, nullptr);
}

Tensor forward(const BnnModel& model, const SignalWindow& window, const RngStream& rng,
               QuantHooks* hooks) {
    return forward_input(model, standardize(window, model.stats), rng, hooks);
}

Tensor forward(const BnnModel& model, const SignalWindow& window, const RngStream& rng,
               const QuantPlan& plan) {
    FrozenPlanHooks hooks(model, plan);
    return forward(model, window, rng, &hooks);
}

Gradients Gradients::zeros_like(const BnnModel& model) {
    Gradients g;
    for (const auto& layer : model.layers) {
        LayerGrads lg;
        lg.d_mu = Tensor::zeros(layer.mu.dims());
        lg.d_rho = Tensor::zeros(layer.rho.dims());
        lg.d_bias = Tensor::zeros(layer.bias.dims());
        g.layers.push_back(std::move(lg));
    }
    return g;
}

void Gradients::axpy(double scale, const Gradients& other) {
    for (size_t p = 0; p < layers.size(); ++p) {
        for (int i = 0; i < layers[p].d_mu.size(); ++i) {
            layers[p].d_mu[i] += scale * other.layers[p].d_mu[i];
            layers[p].d_rho[i] += scale * other.layers[p].d_rho[i];
        }
        for (int i = 0; i < layers[p].d_bias.size(); ++i)
            layers[p].d_bias[i] += scale * other.layers[p].d_bias[i];
    }
}

ElboResult elbo_loss(const BnnModel& model, const std::vector<const Tensor*>& inputs,
                     const std::vector<int>& labels, const RngStream& rng,
                     const ElboSettings& settings, QuantHooks* hooks) {
    if (inputs.empty()) throw DomainError("elbo_loss: batch must be non-empty");
    if (inputs.size() != labels.size())
        throw ShapeError("elbo_loss: inputs and labels differ in length");
    if (settings.mc_samples < 1 || settings.dataset_size < 1)
        throw DomainError("elbo_loss: mc_samples and dataset_size must be >= 1");

    const int batch = static_cast<int>(inputs.size());
    const int samples = settings.mc_samples;
    const double inv = 1.0 / (static_cast<double>(batch) * samples);

    ElboResult res;
    res.grads = Gradients::zeros_like(model);
    double ce_sum = 0.0;

    for (int s = 0; s < samples; ++s) {
        const auto weights = sample_all_weights(model, rng.substream(static_cast<uint64_t>(s)), hooks);
        std::vector<Tensor> d_w_used;
        d_w_used.reserve(model.layers.size());
        for (const auto& layer : model.layers) d_w_used.push_back(Tensor::zeros(layer.mu.dims()));

        for (int b = 0; b < batch; ++b) {
            Trace trace;
            const Tensor logits = forward_with_weights(model, weights, *inputs[b], hooks, &trace);
            const Tensor probs = ops::softmax(logits);
            ce_sum += ops::cross_entropy(probs, labels[b]);
            const Tensor g_logits = softmax_backward_from_ce(probs, labels[b], inv);
            backward_with_weights(model, weights, trace, g_logits, d_w_used, res.grads);
        }

        for (size_t p = 0; p < model.layers.size(); ++p) {
            const VariationalLayer& layer = model.layers[p];
            Tensor d_w = weights[p].quantized
                             ? ste_backward(d_w_used[p], weights[p].w_raw, weights[p].w_spec)
                             : d_w_used[p];
            for (int i = 0; i < d_w.size(); ++i) {
                res.grads.layers[p].d_mu[i] += d_w[i];
                res.grads.layers[p].d_rho[i] +=
                    d_w[i] * weights[p].eps[i] * sigmoid(layer.rho[i]);
            }
        }
    }

    res.data_term = ce_sum * inv;
    const double kl = kl_divergence(model);
    const double kl_scale = settings.kl_weight / settings.dataset_size;
    res.kl_term = kl * kl_scale;
    res.loss = res.data_term + res.kl_term;

    if (kl_scale != 0.0) {
        const double s0_sq = model.prior_sigma * model.prior_sigma;
        for (size_t p = 0; p < model.layers.size(); ++p) {
            const VariationalLayer& layer = model.layers[p];
            for (int i = 0; i < layer.mu.size(); ++i) {
                const double sigma = softplus(layer.rho[i]);
                res.grads.layers[p].d_mu[i] += kl_scale * layer.mu[i] / s0_sq;
                res.grads.layers[p].d_rho[i] +=
                    kl_scale * (-1.0 / sigma + sigma / s0_sq) * sigmoid(layer.rho[i]);
            }
        }
    }
    return res;
}

namespace {

double mc_accuracy(const BnnModel& model, const std::vector<Tensor>& inputs,
                   const std::vector<int>& labels, int mc_samples, const RngStream& rng) {
    if (inputs.empty()) return 0.0;
    int correct = 0;
    for (size_t i = 0; i < inputs.size(); ++i) {
        RngStream wrng = rng.substream(i);
        Tensor mean_probs({model.arch.class_count});
        for (int s = 0; s < mc_samples; ++s) {
            const Tensor logits =
                forward_input(model, inputs[i], wrng.substream(static_cast<uint64_t>(s)), nullptr);
            const Tensor probs = ops::softmax(logits);
            for (int k = 0; k < probs.size(); ++k) mean_probs[k] += probs[k] / mc_samples;
        }
        int arg = 0;
        for (int k = 1; k < mean_probs.size(); ++k)
            if (mean_probs[k] > mean_probs[arg]) arg = k;
        if (arg == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / inputs.size();
}

} // namespace

TrainHistory train_fp32(BnnModel& model, const Dataset& dataset, const TrainConfig& config) {
    config.validate();
    const auto train_idx = dataset.indices_of(Split::Train);
    const auto val_idx = dataset.indices_of(Split::Val);
    if (train_idx.empty()) throw ConfigError("training split is empty");

    model.stats = dataset.stats;
    model.train_config = config;

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

    const int n = static_cast<int>(train_inputs.size());
    const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
    const long long total_steps = static_cast<long long>(steps_per_epoch) * config.epochs;
    const long long anneal_steps = std::max(1ll, total_steps / 2);

    RngStream root(config.seed, 4242);
    TrainHistory history;
    long long step = 0;

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        RngStream shuffle_rng = root.substream(static_cast<uint64_t>(epoch));
        shuffle_indices(order, shuffle_rng);
        double loss_sum = 0.0;
        double kl_weight = 0.0;
        for (int start = 0; start < n; start += config.batch_size) {
            const int end = std::min(n, start + config.batch_size);
            std::vector<const Tensor*> batch_in;
            std::vector<int> batch_lab;
            for (int k = start; k < end; ++k) {
                batch_in.push_back(&train_inputs[order[k]]);
                batch_lab.push_back(train_labels[order[k]]);
            }
            kl_weight = std::min(1.0, static_cast<double>(step) / anneal_steps);
            ElboSettings settings{kl_weight, n, config.mc_train_samples};
            const RngStream step_rng = root.substream(1000000ull + static_cast<uint64_t>(step));
            ElboResult res = elbo_loss(model, batch_in, batch_lab, step_rng, settings, nullptr);
            if (!std::isfinite(res.loss))
                throw NumericError(
                    "non-finite training loss at step " + std::to_string(step) +
                    "; try a lower learning rate (current " + io::format_double(config.learning_rate) + ")");
            loss_sum += res.loss;
            for (size_t p = 0; p < model.layers.size(); ++p) {
                auto& layer = model.layers[p];
                const auto& g = res.grads.layers[p];
                for (int i = 0; i < layer.mu.size(); ++i) {
                    layer.mu[i] -= config.learning_rate * g.d_mu[i];
                    layer.rho[i] -= config.learning_rate * g.d_rho[i];
                }
                for (int i = 0; i < layer.bias.size(); ++i)
                    layer.bias[i] -= config.learning_rate * g.d_bias[i];
            }
            ++step;
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = loss_sum / steps_per_epoch;
        stats.kl_weight = kl_weight;
        stats.val_accuracy = mc_accuracy(model, val_inputs, val_labels, config.val_mc_samples,
                                         root.substream(9000000ull + static_cast<uint64_t>(epoch)));
        history.epochs.push_back(stats);
    }
    return history;
}

void save_checkpoint(const BnnModel& model, const std::string& path, const QuantPlan* plan) {
    json doc;
    doc["format"] = "qbnn-checkpoint-v1";
    doc["architecture"] = model.arch.descriptor();
    doc["prior_sigma"] = model.prior_sigma;
    doc["standardization"] = {{"mean", model.stats.mean}, {"std", model.stats.std_dev}};
    doc["train_config"] = {
        {"learning_rate", model.train_config.learning_rate},
        {"epochs", model.train_config.epochs},
        {"batch_size", model.train_config.batch_size},
        {"mc_train_samples", model.train_config.mc_train_samples},
        {"val_mc_samples", model.train_config.val_mc_samples},
        {"seed", model.train_config.seed},
    };
    json layers = json::array();
    for (const auto& layer : model.layers) {
        json entry;
        entry["mu"] = layer.mu.data();
        entry["rho"] = layer.rho.data();
        entry["bias"] = layer.bias.data();
        layers.push_back(std::move(entry));
    }
    doc["layers"] = std::move(layers);
    if (plan != nullptr) {
        json sites = json::array();
        for (const auto& [key, spec] : plan->specs) {
            sites.push_back({
                {"layer", key.layer_index},
                {"site", key.site == QuantSite::Weight ? "weight" : "activation"},
                {"bits", spec.bit_width},
                {"clip_lo", spec.clip_lo},
                {"clip_hi", spec.clip_hi},
                {"scale", spec.scale},
            });
        }
        doc["quant_plan"] = std::move(sites);
    }
    io::atomic_write(path, doc.dump() + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
    json doc;
    try {
        doc = json::parse(io::read_file(path));
    } catch (const json::exception& e) {
        throw IoError("cannot parse checkpoint " + path + ": " + e.what());
    }
    if (doc.value("format", "") != "qbnn-checkpoint-v1")
        throw IoError("unrecognized checkpoint format tag in " + path);

    Checkpoint ck;
    const Architecture arch = Architecture::parse(doc.at("architecture").get<std::string>());
    ck.model = build_model(arch, doc.at("prior_sigma").get<double>(), 0);
    const auto& st = doc.at("standardization");
    const auto mean = st.at("mean").get<std::vector<double>>();
    const auto sd = st.at("std").get<std::vector<double>>();
    for (int c = 0; c < kChannelCount && c < static_cast<int>(mean.size()); ++c) {
        ck.model.stats.mean[c] = mean[c];
        ck.model.stats.std_dev[c] = sd[c];
    }
    if (doc.contains("train_config")) {
        const auto& tc = doc.at("train_config");
        ck.model.train_config.learning_rate = tc.at("learning_rate").get<double>();
        ck.model.train_config.epochs = tc.at("epochs").get<int>();
        ck.model.train_config.batch_size = tc.at("batch_size").get<int>();
        ck.model.train_config.mc_train_samples = tc.at("mc_train_samples").get<int>();
        ck.model.train_config.val_mc_samples = tc.at("val_mc_samples").get<int>();
        ck.model.train_config.seed = tc.at("seed").get<uint64_t>();
    }
    const auto& layers = doc.at("layers");
    if (layers.size() != ck.model.layers.size())
        throw IoError("checkpoint layer count does not match its architecture");
    for (size_t p = 0; p < ck.model.layers.size(); ++p) {
        auto mu = layers[p].at("mu").get<std::vector<double>>();
        auto rho = layers[p].at("rho").get<std::vector<double>>();
        auto bias = layers[p].at("bias").get<std::vector<double>>();
        auto& layer = ck.model.layers[p];
        if (static_cast<int>(mu.size()) != layer.mu.size() ||
            static_cast<int>(rho.size()) != layer.rho.size() ||
            static_cast<int>(bias.size()) != layer.bias.size())
            throw IoError("checkpoint tensor sizes do not match the architecture");
        layer.mu = Tensor(layer.mu.dims(), std::move(mu));
        layer.rho = Tensor(layer.rho.dims(), std::move(rho));
        layer.bias = Tensor(layer.bias.dims(), std::move(bias));
    }
    if (doc.contains("quant_plan")) {
        QuantPlan plan;
        for (const auto& entry : doc.at("quant_plan")) {
            SiteKey key;
            key.layer_index = entry.at("layer").get<int>();
            key.site = entry.at("site").get<std::string>() == "weight" ? QuantSite::Weight
                                                                       : QuantSite::Activation;
            QuantSpec spec = QuantSpec::make(entry.at("bits").get<int>(),
                                             entry.at("clip_lo").get<double>(),
                                             entry.at("clip_hi").get<double>(), key.site);
            const double stored_scale = entry.at("scale").get<double>();
            if (spec.scale != stored_scale)
                throw IoError("checkpoint quant scale is inconsistent with its clip range");
            plan.set(key, spec);
        }
        ck.plan = std::move(plan);
    }
    return ck;
}

} // namespace qbnn
