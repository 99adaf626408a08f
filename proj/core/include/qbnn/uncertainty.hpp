#pragma once

#include <array>
#include <map>
#include <optional>
#include <vector>

#include "qbnn/bayes_net.hpp"

namespace qbnn {

/// Monte-Carlo predictive summary for one window. mc_probs holds one softmax
/// row per posterior sample; mean_probs is their samplewise mean. The
/// uncertainty split is the predictive-entropy decomposition in nats:
/// total = H(mean), aleatoric = mean of H(row), epistemic = total - aleatoric.
struct PredictiveSummary {
    Tensor mean_probs;
    Tensor mc_probs;  // [n_samples x classes]
    double total_unc = 0.0;
    double aleatoric_unc = 0.0;
    double epistemic_unc = 0.0;
    int predicted_class = 0;   // argmax of mean_probs, ties to the lowest index
    double confidence = 0.0;   // max of mean_probs
};

struct UncertaintyDecomposition {
    double total = 0.0;
    double aleatoric = 0.0;
    double epistemic = 0.0;
};

/// Entropy decomposition of a [n_samples x classes] probability matrix.
UncertaintyDecomposition decompose_uncertainty(const Tensor& mc_probs);

/// n_samples stochastic forward passes aggregated by ascending sample index.
PredictiveSummary predict_mc(const BnnModel& model, const SignalWindow& window, int n_samples,
                             const RngStream& rng, const QuantPlan* plan = nullptr);

double accuracy(const std::vector<PredictiveSummary>& summaries, const std::vector<int>& labels);

/// Binned expected calibration error over [0, 1] confidence.
double expected_calibration_error(const std::vector<PredictiveSummary>& summaries,
                                  const std::vector<int>& labels, int n_bins);

/// For each level q: fraction of windows whose true label falls in the
/// smallest credible set (classes by descending mean probability, ties broken
/// by ascending class index) with cumulative probability >= q.
std::vector<double> empirical_coverage(const std::vector<PredictiveSummary>& summaries,
                                       const std::vector<int>& labels,
                                       const std::vector<double>& levels);

/// min, q25, median, q75, max (linear interpolation between ranks).
std::array<double, 5> quantile_summary(std::vector<double> values);

struct EvalReport {
    double accuracy = 0.0;
    double ece = 0.0;
    int ece_bins = 10;
    int mc_samples = 0;
    std::optional<double> noise_snr_db;

    double seen_total = 0.0, seen_aleatoric = 0.0, seen_epistemic = 0.0;
    double unseen_total = 0.0, unseen_aleatoric = 0.0, unseen_epistemic = 0.0;

    // per true fault label on the seen test split: confidence quantiles
    std::map<int, std::array<double, 5>> confidence_quantiles;

    std::vector<double> coverage_levels;
    std::vector<double> coverage_values;

    // (confidence, correct) per seen-test window, for external plotting
    std::vector<std::pair<double, bool>> confidence_pairs;
};

struct EvalOptions {
    int mc_samples = 64;
    int ece_bins = 10;
    std::vector<double> coverage_levels;  // default 0.05 .. 0.95 step 0.05
    std::optional<double> noise_snr_db;   // corrupt test windows before evaluating
    uint64_t seed = 1;

    EvalOptions();
};

/// Full evaluation: accuracy/ECE/uncertainties/quantiles/coverage on the seen
/// test split, plus mean uncertainties on the unseen test split.
EvalReport evaluate(const BnnModel& model, const QuantPlan* plan, const Dataset& dataset,
                    const EvalOptions& options);

} // namespace qbnn
