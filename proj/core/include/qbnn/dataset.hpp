#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qbnn/signal.hpp"

namespace qbnn {

enum class Split { Train, Val, TestSeen, TestUnseen };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

/// Per-channel standardization statistics, computed on the training split
/// and applied everywhere a window enters a model.
struct ChannelStats {
    std::array<double, kChannelCount> mean{};
    std::array<double, kChannelCount> std_dev{};

    static ChannelStats identity();
};

struct DatasetConfig {
    int train_per_class = 30;
    int val_per_class = 10;
    int test_seen_per_class = 10;
    int test_unseen_per_class = 10;
    int window_length = 256;
    std::vector<double> loads = {0.25, 0.5, 0.75, 1.0};
    // every other training window gets this much additive noise; empty = all clean
    std::optional<double> train_noise_snr_db = 0.0;
    std::vector<int> seen_classes = {1, 2, 3};
    std::vector<int> unseen_classes = {4, 5};
    uint64_t master_seed = 1;

    void validate() const;  // throws ConfigError
};

/// The labeled corpus. train/val/test_seen carry only seen classes (1..3),
/// test_unseen only unseen classes (4..5), and no window is in two splits.
struct Dataset {
    DatasetConfig config;
    std::vector<SignalWindow> windows;
    std::vector<Split> splits;  // parallel to windows
    ChannelStats stats;

    std::vector<int> indices_of(Split s) const;
    int count_of(Split s) const;
    int window_length() const { return config.window_length; }
};

/// Deterministic dataset assembly: each window is a pure function of
/// (config, split, class, index), so regeneration is bit-identical.
Dataset build_dataset(const DatasetConfig& config);

/// Persists the dataset as a JSON manifest plus one CSV per split
/// (columns: label, load, snr_db, then the 5*T samples row-major).
void save_dataset(const Dataset& dataset, const std::string& dir);
Dataset load_dataset(const std::string& dir);

/// Standardize a window's channels with the dataset statistics.
Tensor standardize(const SignalWindow& window, const ChannelStats& stats);

} // namespace qbnn
