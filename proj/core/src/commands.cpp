#include "qbnn/commands.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qbnn/bayes_net.hpp"
#include "qbnn/dataset.hpp"
#include "qbnn/errors.hpp"
#include "qbnn/io.hpp"
#include "qbnn/qat.hpp"
#include "qbnn/tradeoff.hpp"
#include "qbnn/uncertainty.hpp"
#include "qbnn/version.hpp"

namespace qbnn::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string iso_timestamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&t, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

// Collects resolved config, input digests and produced outputs, then lands
// next to the artifacts as <name>. Inputs are digested when added so a
// later `verify` can replay the check.
class ManifestBuilder {
  public:
    ManifestBuilder(std::string command) {
        doc_["tool_version"] = kVersion;
        doc_["command"] = std::move(command);
        doc_["started_at"] = iso_timestamp();
        doc_["config"] = json::object();
        doc_["inputs"] = json::object();
        doc_["outputs"] = json::array();
    }

    template <typename T>
    void set_param(const std::string& key, const T& value) {
        doc_["config"][key] = value;
    }

    void add_input(const std::string& path) {
        doc_["inputs"][path] = io::file_digest_hex(path);
    }

    void add_dataset_inputs(const std::string& dir) {
        add_input(dir + "/dataset.json");
        for (const char* split : {"train", "val", "test_seen", "test_unseen"})
            add_input(dir + "/" + split + ".csv");
    }

    void add_output(const std::string& path) { doc_["outputs"].push_back(path); }

    void write(const std::string& path) {
        doc_["finished_at"] = iso_timestamp();
        io::atomic_write(path, doc_.dump(2) + "\n");
    }

  private:
    json doc_;
};

std::optional<double> parse_snr(const std::string& text) {
    if (text == "clean") return std::nullopt;
    try {
        return io::parse_double(text);
    } catch (const IoError&) {
        throw ConfigError("--snr expects a number in dB or 'clean', got '" + text + "'");
    }
}

std::vector<int> parse_bits_list(const std::string& text) {
    std::vector<int> bits;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        bits.push_back(static_cast<int>(io::parse_double(item)));
    }
    if (bits.empty()) throw ConfigError("--bits expects a comma-separated list, got '" + text + "'");
    return bits;
}

json eval_report_to_json(const EvalReport& rep) {
    json doc;
    doc["accuracy"] = rep.accuracy;
    doc["ece"] = rep.ece;
    doc["ece_bins"] = rep.ece_bins;
    doc["mc_samples"] = rep.mc_samples;
    if (rep.noise_snr_db.has_value())
        doc["noise_snr_db"] = *rep.noise_snr_db;
    else
        doc["noise_snr_db"] = "clean";
    doc["seen"] = {{"total", rep.seen_total},
                   {"aleatoric", rep.seen_aleatoric},
                   {"epistemic", rep.seen_epistemic}};
    doc["unseen"] = {{"total", rep.unseen_total},
                     {"aleatoric", rep.unseen_aleatoric},
                     {"epistemic", rep.unseen_epistemic}};
    json quantiles = json::object();
    for (const auto& [label, q] : rep.confidence_quantiles)
        quantiles["fault_" + std::to_string(label)] = {
            {"min", q[0]}, {"q25", q[1]}, {"median", q[2]}, {"q75", q[3]}, {"max", q[4]}};
    doc["confidence_quantiles"] = quantiles;
    doc["coverage"] = {{"levels", rep.coverage_levels}, {"values", rep.coverage_values}};
    return doc;
}

std::string confidence_pairs_csv(const EvalReport& rep) {
    std::ostringstream out;
    out << "confidence,correct\n";
    for (const auto& [conf, correct] : rep.confidence_pairs)
        out << io::format_double(conf) << "," << (correct ? 1 : 0) << "\n";
    return out.str();
}

// -------- command payloads ----------------------------------------------

struct GenDataArgs {
    std::string out;
    int train_per_class = 30, val_per_class = 10, test_per_class = 10, unseen_per_class = 10;
    int window_length = 256;
    std::string snr = "0";
    uint64_t seed = 1;
};

void cmd_gen_data(const GenDataArgs& a) {
    DatasetConfig cfg;
    cfg.train_per_class = a.train_per_class;
    cfg.val_per_class = a.val_per_class;
    cfg.test_seen_per_class = a.test_per_class;
    cfg.test_unseen_per_class = a.unseen_per_class;
    cfg.window_length = a.window_length;
    cfg.train_noise_snr_db = parse_snr(a.snr);
    cfg.master_seed = a.seed;
    cfg.validate();

    ManifestBuilder manifest("gen-data");
    manifest.set_param("out", a.out);
    manifest.set_param("train_per_class", cfg.train_per_class);
    manifest.set_param("val_per_class", cfg.val_per_class);
    manifest.set_param("test_per_class", cfg.test_seen_per_class);
    manifest.set_param("unseen_per_class", cfg.test_unseen_per_class);
    manifest.set_param("window_length", cfg.window_length);
    manifest.set_param("snr", a.snr);
    manifest.set_param("seed", cfg.master_seed);

    const Dataset ds = build_dataset(cfg);
    save_dataset(ds, a.out);
    manifest.add_output(a.out + "/dataset.json");
    for (const char* split : {"train", "val", "test_seen", "test_unseen"})
        manifest.add_output(a.out + "/" + split + ".csv");
    manifest.write(a.out + "/run_manifest.json");
    std::cout << "wrote dataset (" << ds.windows.size() << " windows) to " << a.out << "\n";
}

struct TrainArgs {
    std::string data, out, arch;
    TrainConfig config;
    double prior_sigma = 0.1;
};

void cmd_train(const TrainArgs& a) {
    a.config.validate();
    ManifestBuilder manifest("train");
    manifest.set_param("data", a.data);
    manifest.set_param("out", a.out);
    manifest.set_param("epochs", a.config.epochs);
    manifest.set_param("learning_rate", a.config.learning_rate);
    manifest.set_param("batch_size", a.config.batch_size);
    manifest.set_param("mc_train_samples", a.config.mc_train_samples);
    manifest.set_param("seed", a.config.seed);
    manifest.set_param("prior_sigma", a.prior_sigma);
    manifest.add_dataset_inputs(a.data);

    const Dataset ds = load_dataset(a.data);
    const Architecture arch = a.arch.empty() ? Architecture::desk_default(ds.window_length())
                                             : Architecture::parse(a.arch);
    manifest.set_param("architecture", arch.descriptor());
    BnnModel model = build_model(arch, a.prior_sigma, a.config.seed);
    const TrainHistory history = train_fp32(model, ds, a.config);
    save_checkpoint(model, a.out);
    manifest.add_output(a.out);
    manifest.write(a.out + ".manifest.json");
    std::cout << "trained " << a.config.epochs << " epochs; final loss "
              << io::format_double(history.epochs.back().mean_loss) << ", val accuracy "
              << io::format_double(history.epochs.back().val_accuracy) << "\n";
}

struct QatArgs {
    std::string in, out, data;
    QatConfig config;
};

void cmd_qat(const QatArgs& a) {
    a.config.validate();
    ManifestBuilder manifest("qat");
    manifest.set_param("in", a.in);
    manifest.set_param("out", a.out);
    manifest.set_param("data", a.data);
    manifest.set_param("bits", a.config.bit_width);
    manifest.set_param("seed", a.config.seed);
    manifest.add_input(a.in);
    manifest.add_dataset_inputs(a.data);

    const Checkpoint ck = load_checkpoint(a.in);
    const Dataset ds = load_dataset(a.data);
    const QatResult result = qat_finetune(ck.model, ds, a.config);
    save_checkpoint(result.model, a.out, &result.plan);
    manifest.add_output(a.out);
    manifest.write(a.out + ".manifest.json");
    std::cout << "qat b=" << a.config.bit_width << " done; val accuracy "
              << io::format_double(result.history.epochs.back().val_accuracy) << "\n";
}

struct PtqArgs {
    std::string in, out, data;
    int bits = 8;
    uint64_t seed = 1;
};

void cmd_ptq(const PtqArgs& a) {
    if (!is_supported_bit_width(a.bits))
        throw ConfigError("unsupported bit width: " + std::to_string(a.bits));
    ManifestBuilder manifest("ptq");
    manifest.set_param("in", a.in);
    manifest.set_param("out", a.out);
    manifest.set_param("data", a.data);
    manifest.set_param("bits", a.bits);
    manifest.set_param("seed", a.seed);
    manifest.add_input(a.in);
    manifest.add_dataset_inputs(a.data);

    const Checkpoint ck = load_checkpoint(a.in);
    const Dataset ds = load_dataset(a.data);
    const PtqResult result = post_training_quantize(ck.model, a.bits, ds, Split::Train, a.seed);
    save_checkpoint(result.model, a.out, &result.plan);
    manifest.add_output(a.out);
    manifest.write(a.out + ".manifest.json");
    std::cout << "ptq b=" << a.bits << " done\n";
}

struct EvalArgs {
    std::string model, data, out, csv;
    int mc = 64;
    std::string noise_snr = "clean";
    uint64_t seed = 1;
};

void cmd_eval(const EvalArgs& a) {
    ManifestBuilder manifest("eval");
    manifest.set_param("model", a.model);
    manifest.set_param("data", a.data);
    manifest.set_param("mc", a.mc);
    manifest.set_param("noise_snr", a.noise_snr);
    manifest.set_param("seed", a.seed);
    manifest.add_input(a.model);
    manifest.add_dataset_inputs(a.data);

    const Checkpoint ck = load_checkpoint(a.model);
    const Dataset ds = load_dataset(a.data);
    EvalOptions opts;
    opts.mc_samples = a.mc;
    opts.noise_snr_db = parse_snr(a.noise_snr);
    opts.seed = a.seed;
    const EvalReport rep =
        evaluate(ck.model, ck.plan.has_value() ? &*ck.plan : nullptr, ds, opts);

    std::cout << "accuracy " << io::format_double(rep.accuracy) << ", ece "
              << io::format_double(rep.ece) << "\n"
              << "seen  total/aleatoric/epistemic: " << io::format_double(rep.seen_total) << " / "
              << io::format_double(rep.seen_aleatoric) << " / "
              << io::format_double(rep.seen_epistemic) << "\n"
              << "unseen total/aleatoric/epistemic: " << io::format_double(rep.unseen_total)
              << " / " << io::format_double(rep.unseen_aleatoric) << " / "
              << io::format_double(rep.unseen_epistemic) << "\n";

    if (!a.out.empty()) {
        io::atomic_write(a.out, eval_report_to_json(rep).dump(2) + "\n");
        manifest.add_output(a.out);
    }
    if (!a.csv.empty()) {
        io::atomic_write(a.csv, confidence_pairs_csv(rep));
        manifest.add_output(a.csv);
    }
    if (!a.out.empty()) manifest.write(a.out + ".manifest.json");
}

struct FidelityArgs {
    std::string ref, quant, data, out;
    int mc = 32;
    uint64_t seed = 1;
};

void cmd_fidelity(const FidelityArgs& a) {
    ManifestBuilder manifest("fidelity");
    manifest.set_param("ref", a.ref);
    manifest.set_param("quant", a.quant);
    manifest.set_param("data", a.data);
    manifest.set_param("mc", a.mc);
    manifest.set_param("seed", a.seed);
    manifest.add_input(a.ref);
    manifest.add_input(a.quant);
    manifest.add_dataset_inputs(a.data);

    const Checkpoint ref = load_checkpoint(a.ref);
    const Checkpoint quant = load_checkpoint(a.quant);
    const Dataset ds = load_dataset(a.data);
    const double eps = fidelity_epsilon(
        ref.model, ref.plan.has_value() ? &*ref.plan : nullptr, quant.model,
        quant.plan.has_value() ? &*quant.plan : nullptr, ds, Split::TestSeen, a.mc,
        RngStream(a.seed, 616));
    std::cout << "epsilon " << io::format_double(eps) << "\n";
    if (!a.out.empty()) {
        json doc;
        doc["epsilon"] = eps;
        doc["mc_samples"] = a.mc;
        io::atomic_write(a.out, doc.dump(2) + "\n");
        manifest.add_output(a.out);
        manifest.write(a.out + ".manifest.json");
    }
}

struct SweepArgs {
    std::string in, data, out;
    std::string bits = "2,4,8,16,32";
    uint64_t seed = 1;
};

void cmd_sweep(const SweepArgs& a) {
    SweepConfig cfg;
    cfg.bits = parse_bits_list(a.bits);
    cfg.seed = a.seed;
    cfg.qat.seed = a.seed;
    for (int b : cfg.bits)
        if (b != 32 && !is_supported_bit_width(b))
            throw ConfigError("unsupported bit width: " + std::to_string(b));

    ManifestBuilder manifest("sweep");
    manifest.set_param("in", a.in);
    manifest.set_param("data", a.data);
    manifest.set_param("bits", a.bits);
    manifest.set_param("out", a.out);
    manifest.set_param("seed", a.seed);
    manifest.add_input(a.in);
    manifest.add_dataset_inputs(a.data);

    const Checkpoint ck = load_checkpoint(a.in);
    const Dataset ds = load_dataset(a.data);
    const auto reports = sweep_bitwidths(ck.model, ds, cfg);
    io::atomic_write(a.out, sweep_to_csv(reports));
    manifest.add_output(a.out);
    manifest.write(a.out + ".manifest.json");
    for (const auto& r : reports)
        std::cout << "b=" << r.bit_width << " accuracy=" << io::format_double(r.accuracy)
                  << " ece=" << io::format_double(r.ece) << " cost=" << io::format_double(r.cost)
                  << " payload=" << r.memory_payload_bytes << "\n";
}

struct SelectArgs {
    std::string sweep, out;
    double a_min = 0.0;
    double u_max = 1.0;
};

void cmd_select(const SelectArgs& a) {
    const auto reports = sweep_from_csv(io::read_file(a.sweep));
    const Selection sel = select_bitwidth(reports, {a.a_min, a.u_max});
    if (sel.feasible) {
        std::cout << "b*=" << sel.bit_width << " (accuracy " << io::format_double(sel.report.accuracy)
                  << ", ece " << io::format_double(sel.report.ece) << ", cost "
                  << io::format_double(sel.report.cost) << ")\n";
    } else {
        std::cout << "infeasible; closest b=" << sel.report.bit_width << " violates constraints by "
                  << io::format_double(sel.violation) << "\n";
    }
    if (!a.out.empty()) {
        json doc;
        doc["feasible"] = sel.feasible;
        if (sel.feasible) doc["bit_width"] = sel.bit_width;
        doc["report"] = {{"b", sel.report.bit_width},
                         {"accuracy", sel.report.accuracy},
                         {"ece", sel.report.ece},
                         {"cost", sel.report.cost}};
        doc["violation"] = sel.violation;
        io::atomic_write(a.out, doc.dump(2) + "\n");
    }
}

void cmd_verify(const std::string& manifest_path) {
    json doc;
    try {
        doc = json::parse(io::read_file(manifest_path));
    } catch (const json::exception& e) {
        throw IoError("cannot parse manifest " + manifest_path + ": " + e.what());
    }
    int checked = 0;
    for (const auto& [path, digest] : doc.at("inputs").items()) {
        const std::string now = io::file_digest_hex(path);
        if (now != digest.get<std::string>())
            throw ConfigError("digest mismatch for input " + path + " (manifest " +
                              digest.get<std::string>() + ", file " + now + ")");
        ++checked;
    }
    std::cout << "verified " << checked << " input digest(s)\n";
}

// -------- reproduce ------------------------------------------------------

struct Pipeline {
    Dataset dataset;
    BnnModel fp32;
};

Pipeline run_pipeline(uint64_t seed) {
    DatasetConfig dcfg;
    dcfg.master_seed = seed;
    Pipeline p{build_dataset(dcfg), {}};
    TrainConfig tcfg;
    tcfg.seed = seed;
    p.fp32 = build_model(Architecture::desk_default(dcfg.window_length), 0.1, seed);
    train_fp32(p.fp32, p.dataset, tcfg);
    return p;
}

std::string quantile_csv_rows(const std::string& model_name, const EvalReport& rep) {
    std::ostringstream out;
    for (const auto& [label, q] : rep.confidence_quantiles) {
        out << model_name << "," << label;
        for (double v : q) out << "," << io::format_double(v);
        out << "\n";
    }
    return out.str();
}

void reproduce_fig4a(uint64_t seed, const std::string& out_dir, ManifestBuilder& manifest) {
    Pipeline p = run_pipeline(seed);
    QatConfig qcfg;
    qcfg.bit_width = 8;
    qcfg.seed = seed;
    const QatResult qat = qat_finetune(p.fp32, p.dataset, qcfg);
    const PtqResult ptq = post_training_quantize(p.fp32, 8, p.dataset, Split::Train, seed);
    EvalOptions opts;
    opts.seed = seed;
    const EvalReport qat_rep = evaluate(qat.model, &qat.plan, p.dataset, opts);
    const EvalReport ptq_rep = evaluate(ptq.model, &ptq.plan, p.dataset, opts);
    std::string csv = "model,fault,min,q25,median,q75,max\n";
    csv += quantile_csv_rows("qat_int8", qat_rep);
    csv += quantile_csv_rows("ptq_int8", ptq_rep);
    io::atomic_write(out_dir + "/fig4a.csv", csv);
    manifest.add_output(out_dir + "/fig4a.csv");
}

void reproduce_fig4b(uint64_t seed, const std::string& out_dir, ManifestBuilder& manifest) {
    Pipeline p = run_pipeline(seed);
    QatConfig qcfg;
    qcfg.bit_width = 8;
    qcfg.seed = seed;
    const QatResult qat = qat_finetune(p.fp32, p.dataset, qcfg);
    EvalOptions clean_opts;
    clean_opts.seed = seed;
    EvalOptions noisy_opts = clean_opts;
    noisy_opts.noise_snr_db = -20.0;
    const EvalReport clean = evaluate(qat.model, &qat.plan, p.dataset, clean_opts);
    const EvalReport noisy = evaluate(qat.model, &qat.plan, p.dataset, noisy_opts);

    std::ostringstream unc;
    unc << "condition,split,accuracy,total,aleatoric,epistemic\n";
    unc << "clean,test_seen," << io::format_double(clean.accuracy) << ","
        << io::format_double(clean.seen_total) << "," << io::format_double(clean.seen_aleatoric)
        << "," << io::format_double(clean.seen_epistemic) << "\n";
    unc << "noise_-20db,test_seen," << io::format_double(noisy.accuracy) << ","
        << io::format_double(noisy.seen_total) << "," << io::format_double(noisy.seen_aleatoric)
        << "," << io::format_double(noisy.seen_epistemic) << "\n";
    unc << "clean,test_unseen,," << io::format_double(clean.unseen_total) << ","
        << io::format_double(clean.unseen_aleatoric) << ","
        << io::format_double(clean.unseen_epistemic) << "\n";
    io::atomic_write(out_dir + "/fig4b_uncertainty.csv", unc.str());
    manifest.add_output(out_dir + "/fig4b_uncertainty.csv");

    std::ostringstream cov;
    cov << "level,coverage_clean,coverage_noisy\n";
    for (size_t i = 0; i < clean.coverage_levels.size(); ++i)
        cov << io::format_double(clean.coverage_levels[i]) << ","
            << io::format_double(clean.coverage_values[i]) << ","
            << io::format_double(noisy.coverage_values[i]) << "\n";
    io::atomic_write(out_dir + "/fig4b_coverage.csv", cov.str());
    manifest.add_output(out_dir + "/fig4b_coverage.csv");
}

void reproduce_fig5(uint64_t seed, const std::string& out_dir, ManifestBuilder& manifest) {
    const Architecture arch = Architecture::desk_default(256);
    const BnnModel model = build_model(arch, 0.1, seed);
    std::ostringstream out;
    out << "b,cost,memory_payload_bytes,memory_total_bytes\n";
    for (int b : supported_bit_widths())
        out << b << "," << io::format_double(compute_cost(arch, b, b)) << ","
            << memory_payload_bytes(model, b) << ","
            << memory_payload_bytes(model, b) + memory_overhead_bytes(model) << "\n";
    io::atomic_write(out_dir + "/fig5.csv", out.str());
    manifest.add_output(out_dir + "/fig5.csv");
}

void reproduce_sweep_fig(uint64_t seed, const std::string& out_dir, ManifestBuilder& manifest,
                         const std::vector<int>& bits, const std::string& filename) {
    Pipeline p = run_pipeline(seed);
    SweepConfig cfg;
    cfg.bits = bits;
    cfg.seed = seed;
    cfg.qat.seed = seed;
    const auto reports = sweep_bitwidths(p.fp32, p.dataset, cfg);
    io::atomic_write(out_dir + "/" + filename, sweep_to_csv(reports));
    manifest.add_output(out_dir + "/" + filename);
}

} // namespace

void reproduce(const std::string& experiment, uint64_t seed, const std::string& out_dir) {
    ManifestBuilder manifest("reproduce");
    manifest.set_param("experiment", experiment);
    manifest.set_param("seed", seed);
    manifest.set_param("out", out_dir);
    if (experiment == "fig4a")
        reproduce_fig4a(seed, out_dir, manifest);
    else if (experiment == "fig4b")
        reproduce_fig4b(seed, out_dir, manifest);
    else if (experiment == "fig5")
        reproduce_fig5(seed, out_dir, manifest);
    else if (experiment == "fig7")
        reproduce_sweep_fig(seed, out_dir, manifest, {4, 8, 16}, "sweep.csv");
    else if (experiment == "fig8")
        reproduce_sweep_fig(seed, out_dir, manifest, {2, 3, 4, 8}, "fig8.csv");
    else
        throw UsageError("unknown experiment id: " + experiment +
                         " (known: fig4a, fig4b, fig5, fig7, fig8)");
    manifest.write(out_dir + "/run_manifest.json");
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"quantization-aware training for Bayesian gear-fault diagnosis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic fault dataset");
    gen_cmd->add_option("--out", gen.out, "output directory")->required();
    gen_cmd->add_option("--train-per-class", gen.train_per_class, "training windows per fault 1-3");
    gen_cmd->add_option("--val-per-class", gen.val_per_class, "validation windows per fault 1-3");
    gen_cmd->add_option("--test-per-class", gen.test_per_class, "seen-test windows per fault 1-3");
    gen_cmd->add_option("--unseen-per-class", gen.unseen_per_class,
                        "unseen-test windows per fault 4-5");
    gen_cmd->add_option("--t", gen.window_length, "window length in samples");
    gen_cmd->add_option("--snr", gen.snr, "training augmentation SNR in dB, or 'clean'");
    gen_cmd->add_option("--seed", gen.seed, "master seed");

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "pre-train the full-precision model");
    train_cmd->add_option("--data", train.data, "dataset directory")
        ->required()
        ->envname("QBNN_DATA_DIR");
    train_cmd->add_option("--out", train.out, "output checkpoint path")->required();
    train_cmd->add_option("--epochs", train.config.epochs, "training epochs");
    train_cmd->add_option("--lr", train.config.learning_rate, "learning rate");
    train_cmd->add_option("--batch", train.config.batch_size, "batch size");
    train_cmd->add_option("--mc", train.config.mc_train_samples, "Monte-Carlo samples per step");
    train_cmd->add_option("--val-mc", train.config.val_mc_samples, "Monte-Carlo samples for validation");
    train_cmd->add_option("--seed", train.config.seed, "seed");
    train_cmd->add_option("--arch", train.arch, "architecture descriptor (default: desk-scale)");
    train_cmd->add_option("--prior-sigma", train.prior_sigma, "weight prior std deviation");

    QatArgs qat;
    auto* qat_cmd = app.add_subcommand("qat", "quantization-aware fine-tuning");
    qat_cmd->add_option("--in", qat.in, "pretrained checkpoint")->required();
    qat_cmd->add_option("--bits", qat.config.bit_width, "bit width");
    qat_cmd->add_option("--out", qat.out, "output checkpoint path")->required();
    qat_cmd->add_option("--data", qat.data, "dataset directory")
        ->required()
        ->envname("QBNN_DATA_DIR");
    qat_cmd->add_option("--epochs", qat.config.epochs, "fine-tuning epochs (0 = derive)");
    qat_cmd->add_option("--lr", qat.config.learning_rate, "learning rate (0 = derive)");
    qat_cmd->add_option("--batch", qat.config.batch_size, "batch size");
    qat_cmd->add_option("--mc", qat.config.mc_train_samples, "Monte-Carlo samples per step");
    qat_cmd->add_option("--seed", qat.config.seed, "seed");

    PtqArgs ptq;
    auto* ptq_cmd = app.add_subcommand("ptq", "direct post-training quantization");
    ptq_cmd->add_option("--in", ptq.in, "pretrained checkpoint")->required();
    ptq_cmd->add_option("--bits", ptq.bits, "bit width");
    ptq_cmd->add_option("--out", ptq.out, "output checkpoint path")->required();
    ptq_cmd->add_option("--data", ptq.data, "dataset directory (calibration)")
        ->required()
        ->envname("QBNN_DATA_DIR");
    ptq_cmd->add_option("--seed", ptq.seed, "seed");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--model", eval_args.model, "checkpoint path")->required();
    eval_cmd->add_option("--data", eval_args.data, "dataset directory")
        ->required()
        ->envname("QBNN_DATA_DIR");
    eval_cmd->add_option("--mc", eval_args.mc, "Monte-Carlo samples per window");
    eval_cmd->add_option("--noise-snr", eval_args.noise_snr,
                         "corrupt test windows at this SNR in dB, or 'clean'");
    eval_cmd->add_option("--out", eval_args.out, "report JSON path");
    eval_cmd->add_option("--csv", eval_args.csv, "write (confidence, correct) pairs CSV");
    eval_cmd->add_option("--seed", eval_args.seed, "seed");

    FidelityArgs fid;
    auto* fid_cmd = app.add_subcommand("fidelity", "L2 distance between two checkpoints");
    fid_cmd->add_option("--ref", fid.ref, "reference checkpoint")->required();
    fid_cmd->add_option("--quant", fid.quant, "quantized checkpoint")->required();
    fid_cmd->add_option("--data", fid.data, "dataset directory")
        ->required()
        ->envname("QBNN_DATA_DIR");
    fid_cmd->add_option("--mc", fid.mc, "Monte-Carlo samples per window");
    fid_cmd->add_option("--out", fid.out, "report JSON path");
    fid_cmd->add_option("--seed", fid.seed, "seed");

    SweepArgs sweep;
    auto* sweep_cmd = app.add_subcommand("sweep", "bit-width sweep from one pretrained checkpoint");
    sweep_cmd->add_option("--in", sweep.in, "pretrained checkpoint")->required();
    sweep_cmd->add_option("--data", sweep.data, "dataset directory")
        ->required()
        ->envname("QBNN_DATA_DIR");
    sweep_cmd->add_option("--bits", sweep.bits, "comma-separated bit widths");
    sweep_cmd->add_option("--out", sweep.out, "output CSV path")->required();
    sweep_cmd->add_option("--seed", sweep.seed, "seed");

    SelectArgs select;
    auto* select_cmd = app.add_subcommand("select", "pick the cheapest feasible bit width");
    select_cmd->add_option("--sweep", select.sweep, "sweep CSV path")->required();
    select_cmd->add_option("--a-min", select.a_min, "accuracy floor")->required();
    select_cmd->add_option("--u-max", select.u_max, "calibration-error ceiling")->required();
    select_cmd->add_option("--out", select.out, "selection JSON path");

    std::string repro_experiment;
    uint64_t repro_seed = 1;
    std::string repro_out;
    auto* repro_cmd = app.add_subcommand("reproduce", "run a pinned experiment pipeline");
    repro_cmd->add_option("--experiment", repro_experiment, "fig4a|fig4b|fig5|fig7|fig8")
        ->required();
    repro_cmd->add_option("--seed", repro_seed, "seed");
    repro_cmd->add_option("--out", repro_out, "output directory (default repro_<id>_seed<seed>)");

    std::string verify_manifest;
    auto* verify_cmd = app.add_subcommand("verify", "re-check a run manifest's input digests");
    verify_cmd->add_option("--manifest", verify_manifest, "run manifest path")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen_cmd->parsed()) cmd_gen_data(gen);
        else if (train_cmd->parsed()) cmd_train(train);
        else if (qat_cmd->parsed()) cmd_qat(qat);
        else if (ptq_cmd->parsed()) cmd_ptq(ptq);
        else if (eval_cmd->parsed()) cmd_eval(eval_args);
        else if (fid_cmd->parsed()) cmd_fidelity(fid);
        else if (sweep_cmd->parsed()) cmd_sweep(sweep);
        else if (select_cmd->parsed()) cmd_select(select);
        else if (repro_cmd->parsed()) {
            const std::string out = repro_out.empty()
                                        ? "repro_" + repro_experiment + "_seed" + std::to_string(repro_seed)
                                        : repro_out;
            reproduce(repro_experiment, repro_seed, out);
            std::cout << "wrote " << repro_experiment << " bundle to " << out << "\n";
        } else if (verify_cmd->parsed()) {
            cmd_verify(verify_manifest);
        }
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ShapeError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitOk;
}

} // namespace qbnn::cli
