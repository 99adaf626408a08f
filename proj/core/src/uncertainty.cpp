#include "qbnn/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qbnn/errors.hpp"

namespace qbnn {

namespace {

double entropy_nats(const double* p, int n) {
    double h = 0.0;
    for (int i = 0; i < n; ++i)
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    return h;
}

} // namespace

UncertaintyDecomposition decompose_uncertainty(const Tensor& mc_probs) {
    if (mc_probs.rank() != 2) throw ShapeError("decompose_uncertainty expects [samples x classes]");
    const int s = mc_probs.dim(0), c = mc_probs.dim(1);
    std::vector<double> mean(c, 0.0);
    double aleatoric = 0.0;
    for (int i = 0; i < s; ++i) {
        aleatoric += entropy_nats(&mc_probs.data()[static_cast<size_t>(i) * c], c);
        for (int k = 0; k < c; ++k) mean[k] += mc_probs.at(i, k);
    }
    aleatoric /= s;
    for (int k = 0; k < c; ++k) mean[k] /= s;
    UncertaintyDecomposition d;
    d.total = entropy_nats(mean.data(), c);
    d.aleatoric = aleatoric;
    d.epistemic = d.total - d.aleatoric;
    return d;
}

PredictiveSummary predict_mc(const BnnModel& model, const SignalWindow& window, int n_samples,
                             const RngStream& rng, const QuantPlan* plan) {
    if (n_samples < 1) throw DomainError("predict_mc needs n_samples >= 1");
    const int classes = model.arch.class_count;
    std::unique_ptr<FrozenPlanHooks> hooks;
    if (plan != nullptr) hooks = std::make_unique<FrozenPlanHooks>(model, *plan);

    PredictiveSummary out;
    out.mc_probs = Tensor({n_samples, classes});
    out.mean_probs = Tensor({classes});
    const Tensor input = standardize(window, model.stats);
    for (int s = 0; s < n_samples; ++s) {
        const Tensor logits =
            forward_input(model, input, rng.substream(static_cast<uint64_t>(s)), hooks.get());
        const Tensor probs = ops::softmax(logits);
        for (int k = 0; k < classes; ++k) {
            out.mc_probs.at(s, k) = probs[k];
            out.mean_probs[k] += probs[k] / n_samples;
        }
    }
    const UncertaintyDecomposition d = decompose_uncertainty(out.mc_probs);
    out.total_unc = d.total;
    out.aleatoric_unc = d.aleatoric;
    out.epistemic_unc = d.epistemic;
    out.predicted_class = 0;
    for (int k = 1; k < classes; ++k)
        if (out.mean_probs[k] > out.mean_probs[out.predicted_class]) out.predicted_class = k;
    out.confidence = out.mean_probs[out.predicted_class];
    return out;
}

double accuracy(const std::vector<PredictiveSummary>& summaries, const std::vector<int>& labels) {
    if (summaries.empty()) throw DomainError("accuracy: empty input");
    if (summaries.size() != labels.size()) throw ShapeError("accuracy: length mismatch");
    int correct = 0;
    for (size_t i = 0; i < summaries.size(); ++i)
        if (summaries[i].predicted_class == labels[i]) ++correct;
    return static_cast<double>(correct) / summaries.size();
}

double expected_calibration_error(const std::vector<PredictiveSummary>& summaries,
                                  const std::vector<int>& labels, int n_bins) {
    if (summaries.empty()) throw DomainError("expected_calibration_error: empty input");
    if (n_bins < 1) throw DomainError("expected_calibration_error: n_bins must be >= 1");
    if (summaries.size() != labels.size())
        throw ShapeError("expected_calibration_error: length mismatch");
    std::vector<double> conf_sum(n_bins, 0.0);
    std::vector<int> hits(n_bins, 0), count(n_bins, 0);
    for (size_t i = 0; i < summaries.size(); ++i) {
        int bin = static_cast<int>(summaries[i].confidence * n_bins);
        bin = std::clamp(bin, 0, n_bins - 1);
        conf_sum[bin] += summaries[i].confidence;
        hits[bin] += summaries[i].predicted_class == labels[i] ? 1 : 0;
        count[bin] += 1;
    }
    double ece = 0.0;
    const double n = static_cast<double>(summaries.size());
    for (int b = 0; b < n_bins; ++b) {
        if (count[b] == 0) continue;
        const double bin_acc = static_cast<double>(hits[b]) / count[b];
        const double bin_conf = conf_sum[b] / count[b];
        ece += (count[b] / n) * std::abs(bin_acc - bin_conf);
    }
    return ece;
}

std::vector<double> empirical_coverage(const std::vector<PredictiveSummary>& summaries,
                                       const std::vector<int>& labels,
                                       const std::vector<double>& levels) {
    if (summaries.size() != labels.size()) throw ShapeError("empirical_coverage: length mismatch");
    std::vector<double> coverage(levels.size(), 0.0);
    if (summaries.empty()) return coverage;
    for (size_t i = 0; i < summaries.size(); ++i) {
        const Tensor& p = summaries[i].mean_probs;
        std::vector<int> order(p.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            if (p[a] != p[b]) return p[a] > p[b];
            return a < b;
        });
        for (size_t q = 0; q < levels.size(); ++q) {
            double cum = 0.0;
            for (int k : order) {
                cum += p[k];
                if (k == labels[i]) coverage[q] += 1.0;
                if (cum >= levels[q]) break;
            }
        }
    }
    for (double& c : coverage) c /= static_cast<double>(summaries.size());
    return coverage;
}

std::array<double, 5> quantile_summary(std::vector<double> values) {
    if (values.empty()) throw DomainError("quantile_summary: empty input");
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
        const double pos = q * (values.size() - 1);
        const size_t lo = static_cast<size_t>(pos);
        const size_t hi = std::min(lo + 1, values.size() - 1);
        const double frac = pos - lo;
        return values[lo] * (1.0 - frac) + values[hi] * frac;
    };
    return {values.front(), quantile(0.25), quantile(0.5), quantile(0.75), values.back()};
}

EvalOptions::EvalOptions() {
    for (int i = 1; i <= 19; ++i) coverage_levels.push_back(0.05 * i);
}

EvalReport evaluate(const BnnModel& model, const QuantPlan* plan, const Dataset& dataset,
                    const EvalOptions& options) {
    const auto seen_idx = dataset.indices_of(Split::TestSeen);
    const auto unseen_idx = dataset.indices_of(Split::TestUnseen);
    if (seen_idx.empty() || unseen_idx.empty())
        throw ConfigError("evaluate: dataset is missing a test split");

    RngStream root(options.seed, 31337);
    RngStream noise_root = root.substream(555);

    auto summarize = [&](const std::vector<int>& idx, uint64_t salt,
                         std::vector<PredictiveSummary>& out_summaries,
                         std::vector<int>& out_labels) {
        for (size_t j = 0; j < idx.size(); ++j) {
            SignalWindow w = dataset.windows[idx[j]];
            if (options.noise_snr_db.has_value())
                w = inject_noise(w, *options.noise_snr_db, noise_root.substream(salt + j));
            out_summaries.push_back(predict_mc(model, w, options.mc_samples,
                                               root.substream(salt + j), plan));
            out_labels.push_back(w.label - 1);
        }
    };

    std::vector<PredictiveSummary> seen, unseen;
    std::vector<int> seen_labels, unseen_labels;
    summarize(seen_idx, 0, seen, seen_labels);
    summarize(unseen_idx, 1u << 20, unseen, unseen_labels);

    EvalReport rep;
    rep.mc_samples = options.mc_samples;
    rep.ece_bins = options.ece_bins;
    rep.noise_snr_db = options.noise_snr_db;
    rep.accuracy = accuracy(seen, seen_labels);
    rep.ece = expected_calibration_error(seen, seen_labels, options.ece_bins);

    auto means = [](const std::vector<PredictiveSummary>& xs, double& total, double& alea,
                    double& epis) {
        total = alea = epis = 0.0;
        for (const auto& s : xs) {
            total += s.total_unc;
            alea += s.aleatoric_unc;
            epis += s.epistemic_unc;
        }
        const double n = static_cast<double>(xs.size());
        total /= n;
        alea /= n;
        epis /= n;
    };
    means(seen, rep.seen_total, rep.seen_aleatoric, rep.seen_epistemic);
    means(unseen, rep.unseen_total, rep.unseen_aleatoric, rep.unseen_epistemic);

    std::map<int, std::vector<double>> by_label;
    for (size_t j = 0; j < seen.size(); ++j)
        by_label[dataset.windows[seen_idx[j]].label].push_back(seen[j].confidence);
    for (auto& [label, confs] : by_label)
        rep.confidence_quantiles[label] = quantile_summary(confs);

    rep.coverage_levels = options.coverage_levels;
    rep.coverage_values = empirical_coverage(seen, seen_labels, options.coverage_levels);

    for (size_t j = 0; j < seen.size(); ++j)
        rep.confidence_pairs.emplace_back(seen[j].confidence,
                                          seen[j].predicted_class == seen_labels[j]);
    return rep;
}

} // namespace qbnn
