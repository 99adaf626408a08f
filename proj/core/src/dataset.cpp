#include "qbnn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qbnn/errors.hpp"
#include "qbnn/io.hpp"

namespace qbnn {

using nlohmann::json;

const char* split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::TestSeen: return "test_seen";
        case Split::TestUnseen: return "test_unseen";
    }
    return "?";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "val") return Split::Val;
    if (name == "test_seen") return Split::TestSeen;
    if (name == "test_unseen") return Split::TestUnseen;
    throw ConfigError("unknown split name: " + name);
}

ChannelStats ChannelStats::identity() {
    ChannelStats s;
    s.mean.fill(0.0);
    s.std_dev.fill(1.0);
    return s;
}

void DatasetConfig::validate() const {
    if (train_per_class <= 0 || val_per_class <= 0 || test_seen_per_class <= 0 ||
        test_unseen_per_class <= 0)
        throw ConfigError("split counts must be positive");
    if (window_length < 8) throw ConfigError("window length too short");
    if (loads.empty()) throw ConfigError("load set must be non-empty");
    for (double l : loads)
        if (l < 0.0 || l > 1.0) throw ConfigError("loads must lie in [0, 1]");
    if (seen_classes.empty() || unseen_classes.empty())
        throw ConfigError("class lists must be non-empty");
    for (int c : seen_classes)
        if (c < 1 || c > 3)
            throw ConfigError("train/val/test_seen may only hold fault labels 1..3, got " +
                              std::to_string(c));
    for (int c : unseen_classes)
        if (c < 4 || c > 5)
            throw ConfigError("test_unseen may only hold fault labels 4..5, got " +
                              std::to_string(c));
}

std::vector<int> Dataset::indices_of(Split s) const {
    std::vector<int> out;
    for (size_t i = 0; i < windows.size(); ++i)
        if (splits[i] == s) out.push_back(static_cast<int>(i));
    return out;
}

int Dataset::count_of(Split s) const {
    return static_cast<int>(indices_of(s).size());
}

namespace {

constexpr uint64_t split_stream_id(Split s) {
    switch (s) {
        case Split::Train: return 1;
        case Split::Val: return 2;
        case Split::TestSeen: return 3;
        case Split::TestUnseen: return 4;
    }
    return 0;
}

SignalWindow make_window(const DatasetConfig& cfg, Split split, int label, int index) {
    RngStream root(cfg.master_seed, split_stream_id(split));
    RngStream wrng = root.substream(static_cast<uint64_t>(label)).substream(static_cast<uint64_t>(index));
    RngStream pick = wrng.substream(1000);
    const double load = cfg.loads[pick.next_u64() % cfg.loads.size()];
    std::optional<double> snr;
    if (split == Split::Train && cfg.train_noise_snr_db.has_value() && index % 2 == 1)
        snr = cfg.train_noise_snr_db;
    return generate_fault_window(label, load, snr, wrng, cfg.window_length);
}

} // namespace

Dataset build_dataset(const DatasetConfig& config) {
    config.validate();
    Dataset ds;
    ds.config = config;

    auto emit = [&](Split split, const std::vector<int>& classes, int per_class) {
        for (int label : classes)
            for (int i = 0; i < per_class; ++i) {
                ds.windows.push_back(make_window(config, split, label, i));
                ds.splits.push_back(split);
            }
    };
    emit(Split::Train, config.seen_classes, config.train_per_class);
    emit(Split::Val, config.seen_classes, config.val_per_class);
    emit(Split::TestSeen, config.seen_classes, config.test_seen_per_class);
    emit(Split::TestUnseen, config.unseen_classes, config.test_unseen_per_class);

    // standardization from the training split only
    std::array<double, kChannelCount> sum{}, sum_sq{};
    long long count = 0;
    for (size_t i = 0; i < ds.windows.size(); ++i) {
        if (ds.splits[i] != Split::Train) continue;
        const Tensor& ch = ds.windows[i].channels;
        for (int c = 0; c < kChannelCount; ++c)
            for (int t = 0; t < ch.dim(1); ++t) {
                sum[c] += ch.at(c, t);
                sum_sq[c] += ch.at(c, t) * ch.at(c, t);
            }
        count += ds.windows[i].length();
    }
    for (int c = 0; c < kChannelCount; ++c) {
        ds.stats.mean[c] = sum[c] / static_cast<double>(count);
        const double var = sum_sq[c] / static_cast<double>(count) - ds.stats.mean[c] * ds.stats.mean[c];
        ds.stats.std_dev[c] = std::sqrt(std::max(var, 1e-24));
    }
    return ds;
}

Tensor standardize(const SignalWindow& window, const ChannelStats& stats) {
    const int t_len = window.length();
    Tensor out({kChannelCount, 1, t_len});
    for (int c = 0; c < kChannelCount; ++c)
        for (int t = 0; t < t_len; ++t)
            out.at(c, 0, t) = (window.channels.at(c, t) - stats.mean[c]) / stats.std_dev[c];
    return out;
}

namespace {

std::string window_csv(const std::vector<const SignalWindow*>& windows, int t_len) {
    std::ostringstream out;
    out << "label,load,snr_db";
    for (int c = 0; c < kChannelCount; ++c)
        for (int t = 0; t < t_len; ++t) out << ",c" << c << "_t" << t;
    out << "\n";
    for (const SignalWindow* w : windows) {
        out << w->label << "," << io::format_double(w->load) << ",";
        out << (w->snr_db.has_value() ? io::format_double(*w->snr_db) : std::string("clean"));
        for (int c = 0; c < kChannelCount; ++c)
            for (int t = 0; t < t_len; ++t) out << "," << io::format_double(w->channels.at(c, t));
        out << "\n";
    }
    return out.str();
}

} // namespace

void save_dataset(const Dataset& dataset, const std::string& dir) {
    json manifest;
    manifest["format"] = "qbnn-dataset-v1";
    manifest["window_length"] = dataset.config.window_length;
    manifest["master_seed"] = dataset.config.master_seed;
    manifest["loads"] = dataset.config.loads;
    manifest["counts"] = {
        {"train_per_class", dataset.config.train_per_class},
        {"val_per_class", dataset.config.val_per_class},
        {"test_seen_per_class", dataset.config.test_seen_per_class},
        {"test_unseen_per_class", dataset.config.test_unseen_per_class},
    };
    if (dataset.config.train_noise_snr_db.has_value())
        manifest["train_noise_snr_db"] = *dataset.config.train_noise_snr_db;
    else
        manifest["train_noise_snr_db"] = "clean";
    manifest["seen_classes"] = dataset.config.seen_classes;
    manifest["unseen_classes"] = dataset.config.unseen_classes;
    manifest["standardization"] = {
        {"mean", dataset.stats.mean},
        {"std", dataset.stats.std_dev},
    };

    json files = json::object();
    for (Split s : {Split::Train, Split::Val, Split::TestSeen, Split::TestUnseen}) {
        std::vector<const SignalWindow*> ws;
        for (size_t i = 0; i < dataset.windows.size(); ++i)
            if (dataset.splits[i] == s) ws.push_back(&dataset.windows[i]);
        const std::string fname = std::string(split_name(s)) + ".csv";
        io::atomic_write(dir + "/" + fname, window_csv(ws, dataset.config.window_length));
        files[split_name(s)] = fname;
    }
    manifest["split_files"] = files;
    io::atomic_write(dir + "/dataset.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
    json manifest;
    try {
        manifest = json::parse(io::read_file(dir + "/dataset.json"));
    } catch (const json::exception& e) {
        throw IoError("cannot parse dataset manifest in " + dir + ": " + e.what());
    }
    if (manifest.value("format", "") != "qbnn-dataset-v1")
        throw IoError("unrecognized dataset format tag in " + dir);

    Dataset ds;
    ds.config.window_length = manifest.at("window_length").get<int>();
    ds.config.master_seed = manifest.at("master_seed").get<uint64_t>();
    ds.config.loads = manifest.at("loads").get<std::vector<double>>();
    const auto& counts = manifest.at("counts");
    ds.config.train_per_class = counts.at("train_per_class").get<int>();
    ds.config.val_per_class = counts.at("val_per_class").get<int>();
    ds.config.test_seen_per_class = counts.at("test_seen_per_class").get<int>();
    ds.config.test_unseen_per_class = counts.at("test_unseen_per_class").get<int>();
    if (manifest.at("train_noise_snr_db").is_string())
        ds.config.train_noise_snr_db = std::nullopt;
    else
        ds.config.train_noise_snr_db = manifest.at("train_noise_snr_db").get<double>();
    ds.config.seen_classes = manifest.at("seen_classes").get<std::vector<int>>();
    ds.config.unseen_classes = manifest.at("unseen_classes").get<std::vector<int>>();
    const auto& st = manifest.at("standardization");
    const auto mean = st.at("mean").get<std::vector<double>>();
    const auto sd = st.at("std").get<std::vector<double>>();
    for (int c = 0; c < kChannelCount; ++c) {
        ds.stats.mean[c] = mean.at(c);
        ds.stats.std_dev[c] = sd.at(c);
    }

    const int t_len = ds.config.window_length;
    for (Split s : {Split::Train, Split::Val, Split::TestSeen, Split::TestUnseen}) {
        const std::string fname =
            manifest.at("split_files").at(split_name(s)).get<std::string>();
        std::istringstream in(io::read_file(dir + "/" + fname));
        std::string line;
        if (!std::getline(in, line)) throw IoError("empty split file: " + fname);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto fields = io::split_csv_line(line);
            if (static_cast<int>(fields.size()) != 3 + kChannelCount * t_len)
                throw IoError("bad column count in " + fname);
            SignalWindow w;
            w.label = static_cast<int>(io::parse_double(fields[0]));
            w.load = io::parse_double(fields[1]);
            w.snr_db = fields[2] == "clean" ? std::nullopt
                                            : std::optional<double>(io::parse_double(fields[2]));
            w.channels = Tensor({kChannelCount, t_len});
            for (int c = 0; c < kChannelCount; ++c)
                for (int t = 0; t < t_len; ++t)
                    w.channels.at(c, t) = io::parse_double(fields[3 + c * t_len + t]);
            ds.windows.push_back(std::move(w));
            ds.splits.push_back(s);
        }
    }
    return ds;
}

} // namespace qbnn
