#include "qbnn/tradeoff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qbnn/errors.hpp"
#include "qbnn/io.hpp"

namespace qbnn {

double compute_cost(const Architecture& arch, int bits_weights, int bits_activations) {
    if (bits_weights < 1 || bits_activations < 1)
        throw DomainError("compute_cost: bit widths must be positive");
    const double macs = static_cast<double>(arch.mac_count());
    return macs * (static_cast<double>(bits_weights) * bits_activations) / (32.0 * 32.0);
}

long long memory_payload_bytes(const BnnModel& model, int bit_width) {
    if (bit_width < 1) throw DomainError("memory_payload_bytes: bit width must be positive");
    const long long bits = static_cast<long long>(model.weight_parameter_count()) * bit_width;
    return (bits + 7) / 8;
}

long long memory_overhead_bytes(const BnnModel& model) {
    const long long sites = 2ll * static_cast<long long>(model.layers.size());
    return 8ll * model.bias_parameter_count() + sites * (3 * 8 + 4) + 16;
}

std::vector<BitWidthReport> sweep_bitwidths(const BnnModel& pretrained, const Dataset& dataset,
                                            const SweepConfig& config) {
    for (int b : config.bits)
        if (!is_supported_bit_width(b))
            throw ConfigError("sweep: unsupported bit width " + std::to_string(b));

    std::vector<int> bits = config.bits;
    if (std::find(bits.begin(), bits.end(), 32) == bits.end()) bits.push_back(32);
    std::sort(bits.begin(), bits.end());
    bits.erase(std::unique(bits.begin(), bits.end()), bits.end());

    EvalOptions eval_opts;
    eval_opts.mc_samples = config.eval_mc;
    eval_opts.seed = config.seed;

    std::vector<BitWidthReport> reports;
    for (int b : bits) {
        BitWidthReport rep;
        rep.bit_width = b;
        rep.seed = config.seed;
        rep.cost = compute_cost(pretrained.arch, b, b);
        rep.memory_payload_bytes = memory_payload_bytes(pretrained, b);
        rep.memory_total_bytes = rep.memory_payload_bytes + memory_overhead_bytes(pretrained);
        if (b == 32) {
            // full-precision baseline, no QAT and no quantizers
            const EvalReport ev = evaluate(pretrained, nullptr, dataset, eval_opts);
            rep.accuracy = ev.accuracy;
            rep.ece = ev.ece;
            rep.epsilon = 0.0;
        } else {
            QatConfig qat_cfg = config.qat;
            qat_cfg.bit_width = b;
            qat_cfg.seed = config.seed;
            const QatResult qat = qat_finetune(pretrained, dataset, qat_cfg);
            const EvalReport ev = evaluate(qat.model, &qat.plan, dataset, eval_opts);
            rep.accuracy = ev.accuracy;
            rep.ece = ev.ece;
            rep.epsilon = fidelity_epsilon(pretrained, nullptr, qat.model, &qat.plan, dataset,
                                           Split::TestSeen, config.fidelity_mc,
                                           RngStream(config.seed, 616));
        }
        reports.push_back(rep);
    }
    return reports;
}

Selection select_bitwidth(const std::vector<BitWidthReport>& reports,
                          const SelectionConstraints& constraints) {
    if (reports.empty()) throw DomainError("select_bitwidth: no reports");
    Selection sel;
    bool have_best = false;
    bool have_violating = false;
    BitWidthReport best{}, least_violating{};
    double least_violation = 0.0;
    for (const BitWidthReport& r : reports) {
        const double violation = std::max(0.0, constraints.a_min - r.accuracy) +
                                 std::max(0.0, r.ece - constraints.u_max);
        if (violation == 0.0) {
            if (!have_best || r.cost < best.cost ||
                (r.cost == best.cost && r.bit_width < best.bit_width)) {
                best = r;
                have_best = true;
            }
        } else if (!have_violating || violation < least_violation ||
                   (violation == least_violation && r.bit_width < least_violating.bit_width)) {
            least_violating = r;
            least_violation = violation;
            have_violating = true;
        }
    }
    if (have_best) {
        sel.feasible = true;
        sel.bit_width = best.bit_width;
        sel.report = best;
        sel.violation = 0.0;
    } else {
        sel.feasible = false;
        sel.report = least_violating;
        sel.violation = least_violation;
    }
    return sel;
}

std::string sweep_to_csv(const std::vector<BitWidthReport>& reports) {
    std::ostringstream out;
    out << "b,accuracy,ece,cost,memory_payload_bytes,memory_total_bytes,epsilon,seed\n";
    for (const BitWidthReport& r : reports) {
        out << r.bit_width << "," << io::format_double(r.accuracy) << ","
            << io::format_double(r.ece) << "," << io::format_double(r.cost) << ","
            << r.memory_payload_bytes << "," << r.memory_total_bytes << ","
            << io::format_double(r.epsilon) << "," << r.seed << "\n";
    }
    return out.str();
}

std::vector<BitWidthReport> sweep_from_csv(const std::string& content) {
    std::istringstream in(content);
    std::string line;
    if (!std::getline(in, line)) throw IoError("sweep csv is empty");
    std::vector<BitWidthReport> reports;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = io::split_csv_line(line);
        if (f.size() != 8) throw IoError("sweep csv row must have 8 columns");
        BitWidthReport r;
        r.bit_width = static_cast<int>(io::parse_double(f[0]));
        r.accuracy = io::parse_double(f[1]);
        r.ece = io::parse_double(f[2]);
        r.cost = io::parse_double(f[3]);
        r.memory_payload_bytes = static_cast<long long>(io::parse_double(f[4]));
        r.memory_total_bytes = static_cast<long long>(io::parse_double(f[5]));
        r.epsilon = io::parse_double(f[6]);
        r.seed = static_cast<uint64_t>(io::parse_double(f[7]));
        reports.push_back(r);
    }
    return reports;
}

} // namespace qbnn
