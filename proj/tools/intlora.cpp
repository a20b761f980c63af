// Batch front-end for the full pipeline: quantize a base, train an adapter,
// merge, infer with merged weights, run the comparison harness, and print
// diagnostics. Exit codes: 0 ok, 2 usage, 3 I/O, 4 numeric.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "intlora/checkpoint.hpp"
#include "intlora/compare.hpp"
#include "intlora/mat_io.hpp"
#include "intlora/train.hpp"

using json = nlohmann::ordered_json;
using namespace intlora;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;
constexpr int kExitNumeric = 4;

std::optional<std::uint64_t> env_seed_override() {
    const char* env = std::getenv("INTLORA_SEED");
    if (env == nullptr) return std::nullopt;
    return std::strtoull(env, nullptr, 10);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    for (const auto& item : split(s, ',')) out.push_back(std::stoi(item));
    return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    for (const auto& item : split(s, ',')) out.push_back(std::stoull(item));
    return out;
}

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    for (const auto& item : split(s, ',')) out.push_back(std::stod(item));
    return out;
}

const CheckpointRecord& find_record(const std::vector<CheckpointRecord>& records,
                                    const std::string& name) {
    for (const auto& r : records) {
        if (r.name == name) return r;
    }
    throw IoError("checkpoint has no record named '" + name + "'");
}

std::string json_double_list(const std::vector<double>& v) {
    // Stable text form for report determinism.
    std::string out;
    char buf[64];
    for (double x : v) {
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        if (!out.empty()) out += ",";
        out += buf;
    }
    return out;
}

struct QuantizeArgs {
    std::string input, output;
    std::string name = "base";
    int bits = 4;
    std::string distribution = "laplace";
    double alpha = 1.5;
    std::string variance_mode = "range";
    std::uint64_t seed = 42;
    double dof = 3.0;
};

struct TrainArgs {
    std::string checkpoint, adapter_out, report_path;
    std::string name = "base";
    std::string variant = "mul";
    std::size_t rank = 4;
    double lora_scale = 1.0;
    int steps = 1000;
    double lr_rate = 1e-3;
    std::string optimizer = "adam";
    std::uint64_t task_seed = 1;
    std::size_t planted_rank = 2;
    double noise = 0.1;
    std::size_t batch = 32;
    int act_bits = 0;
    int adapt_bits = 8;
    std::string adapt_granularity = "channel";
    int shift_bits = 8;
    int headroom = 32;
};

struct MergeArgs {
    std::string checkpoint, adapter, output;
    std::string name = "base";
    std::string adapter_name = "adapter";
    std::string merged_name = "merged";
    std::string variant = "mul";
    int adapt_bits = 8;
    int shift_bits = 4;
    int headroom = 32;
};

struct InferArgs {
    std::string merged, input, output;
    std::string merged_name = "merged";
    int act_bits = 0;
};

struct CompareArgs {
    std::string output;
    std::string bits = "4,8";
    std::string seeds = "1";
    std::size_t in_dim = 64, out_dim = 64, rank = 4, planted_rank = 2;
    double noise = 0.1;
    std::size_t batch = 32;
    int steps = 500;
    double lr_rate = 1e-3;
    std::string distribution = "laplace";
    double alpha = 1.5;
    std::string variance_mode = "range";
    int headroom = 32;
    std::string sweep_alphas, sweep_distributions;
};

struct DiagArgs {
    double sigma_w = 1.0;
    double sigma_r = 1.0;
    std::optional<double> sigma_ratio;
    std::size_t samples = 100000;
    int bits = 8;
    std::uint64_t seed = 1;
    std::size_t dim = 64;
    std::string distribution = "laplace";
    double alpha = 1.5;
    std::string variance_mode = "range";
    std::string multipliers = "0.001,0.1,1,10,1000";
};

int run_quantize(const QuantizeArgs& a) {
    const Matrix w = read_matrix(a.input);
    AuxiliarySpec spec;
    spec.distribution = distribution_from_name(a.distribution);
    spec.seed = env_seed_override().value_or(a.seed);
    spec.dof = a.dof;
    spec.alpha = a.alpha;
    spec.variance_mode = variance_mode_from_name(a.variance_mode);
    const QuantizedBase qb = aqs_preprocess(w, spec, a.bits);
    save_checkpoint(a.output, {base_record(a.name, qb)});
    json out;
    out["config"] = {{"subcommand", "quantize"},   {"input", a.input},
                     {"output", a.output},         {"name", a.name},
                     {"bits", a.bits},             {"distribution", a.distribution},
                     {"alpha", a.alpha},           {"variance-mode", a.variance_mode},
                     {"seed", spec.seed},          {"dof", a.dof}};
    out["rows"] = qb.rows();
    out["cols"] = qb.cols();
    out["zero_denominator_count"] = zero_denominator_count(qb);
    std::cout << out.dump(2) << "\n";
    return 0;
}

int run_train(const TrainArgs& a) {
    const auto records = load_checkpoint(a.checkpoint);
    const QuantizedBase qb = base_from_record(find_record(records, a.name));
    const Matrix surrogate = add(dequantize(qb.base), regenerate_aux(qb));
    const std::uint64_t task_seed = env_seed_override().value_or(a.task_seed);
    const Task task =
        make_task_with_base(surrogate, task_seed, a.planted_rank, a.noise, a.batch);

    AdapterLayer layer;
    layer.variant = layer_variant_from_name(a.variant);
    layer.qb = qb;
    if (layer.variant == LayerVariant::FpReference) layer.fp_weight = surrogate;
    layer.lr = LowRankPair::init(qb.rows(), qb.cols(), a.rank,
                                 task_seed ^ 0x0ada97e5ULL, a.lora_scale);
    layer.act_bits = a.act_bits;
    layer.adapt_bits = a.adapt_bits;
    layer.adapt_granularity = a.adapt_granularity == "tensor" ? Granularity::PerTensor
                                                              : Granularity::PerChannel;
    layer.shift_bits = a.shift_bits;
    layer.headroom = a.headroom;

    TrainConfig tc;
    tc.lr_rate = a.lr_rate;
    tc.steps = a.steps;
    tc.optimizer = a.optimizer == "sgd" ? Optimizer::Sgd : Optimizer::Adam;
    const TrainReport report = train_adapter(layer, task, tc);

    if (!a.adapter_out.empty()) {
        save_checkpoint(a.adapter_out, adapter_records("adapter", layer.lr));
    }
    json out;
    out["config"] = {{"subcommand", "train"},
                     {"checkpoint", a.checkpoint},
                     {"name", a.name},
                     {"variant", a.variant},
                     {"rank", a.rank},
                     {"lora-scale", a.lora_scale},
                     {"steps", a.steps},
                     {"lr-rate", a.lr_rate},
                     {"optimizer", a.optimizer},
                     {"task-seed", task_seed},
                     {"planted-rank", a.planted_rank},
                     {"noise", a.noise},
                     {"batch", a.batch},
                     {"act-bits", a.act_bits},
                     {"adapt-bits", a.adapt_bits},
                     {"adapt-granularity", a.adapt_granularity},
                     {"shift-bits", a.shift_bits},
                     {"headroom", a.headroom},
                     {"adapter-out", a.adapter_out}};
    out["final_train_loss"] = json_double_list({report.final_train_loss});
    out["final_val_loss"] = json_double_list({report.final_val_loss});
    out["grad_check_max_rel_err"] = json_double_list({report.grad_check_max_rel_err});
    out["loss_curve"] = json_double_list(report.loss_curve);
    out["wall_clock_seconds"] = report.wall_clock_seconds;
    if (a.report_path.empty()) {
        std::cout << out.dump(2) << "\n";
    } else {
        std::ofstream os(a.report_path);
        if (!os) throw IoError("cannot open '" + a.report_path + "' for writing");
        os << out.dump(2) << "\n";
    }
    return 0;
}

int run_merge(const MergeArgs& a) {
    const auto base_records = load_checkpoint(a.checkpoint);
    const QuantizedBase qb = base_from_record(find_record(base_records, a.name));
    const auto adapter = load_checkpoint(a.adapter);
    const LowRankPair lr = adapter_from_records(
        find_record(adapter, a.adapter_name + ".A"),
        find_record(adapter, a.adapter_name + ".B"));
    MergedWeights merged;
    if (a.variant == "mul") {
        merged = merge_mul(qb, lr, a.adapt_bits);
    } else if (a.variant == "shift") {
        merged = merge_shift(qb, lr, a.shift_bits, a.headroom);
    } else {
        throw ConfigError("merge: variant must be mul or shift");
    }
    save_checkpoint(a.output, merged_records(a.merged_name, merged));
    return 0;
}

int run_infer(const InferArgs& a) {
    const auto records = load_checkpoint(a.merged);
    const MergedWeights merged =
        merged_from_records(find_record(records, a.merged_name + ".base"),
                            find_record(records, a.merged_name + ".adapt"));
    const Matrix w = dequantize_merged(merged);
    Matrix x = read_matrix(a.input);
    if (a.act_bits > 0) x = act_dequantize(act_quantize(x, a.act_bits));
    write_matrix(a.output, matmul(w, x));
    return 0;
}

int run_compare(const CompareArgs& a) {
    CompareConfig config;
    config.bits = parse_int_list(a.bits);
    config.seeds = parse_seed_list(a.seeds);
    if (auto s = env_seed_override()) config.seeds = {*s};
    config.in_dim = a.in_dim;
    config.out_dim = a.out_dim;
    config.rank = a.rank;
    config.planted_rank = a.planted_rank;
    config.noise = a.noise;
    config.batch = a.batch;
    config.train.steps = a.steps;
    config.train.lr_rate = a.lr_rate;
    config.spec.distribution = distribution_from_name(a.distribution);
    config.spec.alpha = a.alpha;
    config.spec.variance_mode = variance_mode_from_name(a.variance_mode);
    config.headroom = a.headroom;

    std::ostringstream body;
    body << "# config: bits=" << a.bits << " seeds=" << a.seeds
         << " in-dim=" << a.in_dim << " out-dim=" << a.out_dim << " rank=" << a.rank
         << " planted-rank=" << a.planted_rank << " noise=" << a.noise
         << " batch=" << a.batch << " steps=" << a.steps << " lr-rate=" << a.lr_rate
         << " distribution=" << a.distribution << " alpha=" << a.alpha
         << " variance-mode=" << a.variance_mode << " headroom=" << a.headroom;
    if (!a.sweep_alphas.empty() || !a.sweep_distributions.empty()) {
        body << " sweep-alphas=" << a.sweep_alphas
             << " sweep-distributions=" << a.sweep_distributions << "\n";
        std::vector<double> alphas =
            a.sweep_alphas.empty() ? std::vector<double>{a.alpha}
                                   : parse_double_list(a.sweep_alphas);
        std::vector<Distribution> dists;
        if (a.sweep_distributions.empty()) {
            dists.push_back(config.spec.distribution);
        } else {
            for (const auto& d : split(a.sweep_distributions, ',')) {
                dists.push_back(distribution_from_name(d));
            }
        }
        write_sweep_csv(ablation_sweep(config, alphas, dists), body);
    } else {
        body << "\n";
        write_comparison_csv(compare_pipelines(config), body);
    }
    if (a.output.empty()) {
        std::cout << body.str();
    } else {
        std::ofstream os(a.output, std::ios::binary);
        if (!os) throw IoError("cannot open '" + a.output + "' for writing");
        os << body.str();
    }
    return 0;
}

int run_diag(const DiagArgs& a) {
    const double sigma_w = a.sigma_w;
    const double sigma_r = a.sigma_ratio ? *a.sigma_ratio * sigma_w : a.sigma_r;
    const std::uint64_t seed = env_seed_override().value_or(a.seed);
    json out;
    out["config"] = {{"subcommand", "diag"},
                     {"sigma-w", sigma_w},
                     {"sigma-r", sigma_r},
                     {"samples", a.samples},
                     {"bits", a.bits},
                     {"seed", seed},
                     {"dim", a.dim},
                     {"distribution", a.distribution},
                     {"alpha", a.alpha},
                     {"variance-mode", a.variance_mode},
                     {"multipliers", a.multipliers}};
    out["correlation_analytic"] = json_double_list({correlation_diag(sigma_w, sigma_r)});
    out["correlation_empirical"] = json_double_list(
        {empirical_correlation(sigma_w, sigma_r, a.bits, a.samples, seed)});

    AuxiliarySpec spec_w;
    spec_w.distribution = Distribution::Gaussian;
    spec_w.seed = seed;
    AuxiliarySpec spec_r;
    spec_r.distribution = distribution_from_name(a.distribution);
    spec_r.seed = seed ^ 0x5eedULL;
    json expectations = json::array();
    for (double mult : parse_double_list(a.multipliers)) {
        const ExpectationEstimate est =
            expectation_diag(spec_w, spec_r, mult, a.samples, a.bits);
        expectations.push_back({{"multiplier", mult},
                                {"mean", json_double_list({est.mean})},
                                {"std_error", json_double_list({est.std_error})}});
    }
    out["adaptation_term_expectation"] = expectations;

    AuxiliarySpec spec = spec_r;
    spec.alpha = a.alpha;
    spec.variance_mode = variance_mode_from_name(a.variance_mode);
    AuxiliarySpec wgen;
    wgen.distribution = Distribution::Gaussian;
    wgen.seed = seed + 17;
    const Matrix w = sample_matrix(wgen, a.dim, a.dim);
    const QuantizedBase qb = aqs_preprocess(w, spec, a.bits);
    out["zero_denominator_count"] = zero_denominator_count(qb);
    std::cout << out.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"integral low-rank adaptation of quantized weight matrices"};
    app.require_subcommand(1);

    QuantizeArgs qa;
    auto* quantize = app.add_subcommand("quantize", "quantize a base weight matrix");
    quantize->add_option("--input", qa.input)->required();
    quantize->add_option("--output", qa.output)->required();
    quantize->add_option("--name", qa.name);
    quantize->add_option("--bits", qa.bits);
    quantize->add_option("--distribution", qa.distribution);
    quantize->add_option("--alpha", qa.alpha);
    quantize->add_option("--variance-mode", qa.variance_mode);
    quantize->add_option("--seed", qa.seed);
    quantize->add_option("--dof", qa.dof);

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "train a low-rank adapter");
    train->add_option("--checkpoint", ta.checkpoint)->required();
    train->add_option("--name", ta.name);
    train->add_option("--variant", ta.variant);
    train->add_option("--rank", ta.rank);
    train->add_option("--lora-scale", ta.lora_scale);
    train->add_option("--steps", ta.steps);
    train->add_option("--lr-rate", ta.lr_rate);
    train->add_option("--optimizer", ta.optimizer);
    train->add_option("--task-seed", ta.task_seed);
    train->add_option("--planted-rank", ta.planted_rank);
    train->add_option("--noise", ta.noise);
    train->add_option("--batch", ta.batch);
    train->add_option("--act-bits", ta.act_bits);
    train->add_option("--adapt-bits", ta.adapt_bits);
    train->add_option("--adapt-granularity", ta.adapt_granularity);
    train->add_option("--shift-bits", ta.shift_bits);
    train->add_option("--headroom", ta.headroom);
    train->add_option("--adapter-out", ta.adapter_out);
    train->add_option("--report", ta.report_path);

    MergeArgs ma;
    auto* merge = app.add_subcommand("merge", "merge an adapter into the base");
    merge->add_option("--checkpoint", ma.checkpoint)->required();
    merge->add_option("--adapter", ma.adapter)->required();
    merge->add_option("--output", ma.output)->required();
    merge->add_option("--name", ma.name);
    merge->add_option("--adapter-name", ma.adapter_name);
    merge->add_option("--merged-name", ma.merged_name);
    merge->add_option("--variant", ma.variant);
    merge->add_option("--adapt-bits", ma.adapt_bits);
    merge->add_option("--shift-bits", ma.shift_bits);
    merge->add_option("--headroom", ma.headroom);

    InferArgs ia;
    auto* infer = app.add_subcommand("infer", "apply merged weights to an input");
    infer->add_option("--merged", ia.merged)->required();
    infer->add_option("--input", ia.input)->required();
    infer->add_option("--output", ia.output)->required();
    infer->add_option("--merged-name", ia.merged_name);
    infer->add_option("--act-bits", ia.act_bits);

    CompareArgs ca;
    auto* compare = app.add_subcommand("compare", "pipeline comparison / ablation CSV");
    compare->add_option("--output", ca.output);
    compare->add_option("--bits", ca.bits);
    compare->add_option("--seeds", ca.seeds);
    compare->add_option("--in-dim", ca.in_dim);
    compare->add_option("--out-dim", ca.out_dim);
    compare->add_option("--rank", ca.rank);
    compare->add_option("--planted-rank", ca.planted_rank);
    compare->add_option("--noise", ca.noise);
    compare->add_option("--batch", ca.batch);
    compare->add_option("--steps", ca.steps);
    compare->add_option("--lr-rate", ca.lr_rate);
    compare->add_option("--distribution", ca.distribution);
    compare->add_option("--alpha", ca.alpha);
    compare->add_option("--variance-mode", ca.variance_mode);
    compare->add_option("--headroom", ca.headroom);
    compare->add_option("--sweep-alphas", ca.sweep_alphas);
    compare->add_option("--sweep-distributions", ca.sweep_distributions);

    DiagArgs da;
    auto* diag = app.add_subcommand("diag", "print statistical diagnostics");
    diag->add_option("--sigma-w", da.sigma_w);
    diag->add_option("--sigma-r", da.sigma_r);
    double ratio_opt = 0.0;
    auto* ratio_flag = diag->add_option("--sigma-ratio", ratio_opt);
    diag->add_option("--samples", da.samples);
    diag->add_option("--bits", da.bits);
    diag->add_option("--seed", da.seed);
    diag->add_option("--dim", da.dim);
    diag->add_option("--distribution", da.distribution);
    diag->add_option("--alpha", da.alpha);
    diag->add_option("--variance-mode", da.variance_mode);
    diag->add_option("--multipliers", da.multipliers);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*quantize) return run_quantize(qa);
        if (*train) return run_train(ta);
        if (*merge) return run_merge(ma);
        if (*infer) return run_infer(ia);
        if (*compare) return run_compare(ca);
        if (*diag) {
            if (ratio_flag->count() > 0) da.sigma_ratio = ratio_opt;
            return run_diag(da);
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitUsage;
}
