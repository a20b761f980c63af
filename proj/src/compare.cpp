#include "intlora/compare.hpp"

#include <algorithm>
#include <atomic>
#include <cinttypes>
#include <cstdio>
#include <ostream>

namespace intlora {

namespace {

std::atomic<std::size_t> g_ptq_calls{0};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double deployed_val_loss(const Matrix& merged, const Task& task) {
    return mean_squared_error(matmul(merged, task.x_val), task.y_val);
}

AuxiliarySpec task_spec(const AuxiliarySpec& base, std::uint64_t seed) {
    AuxiliarySpec s = base;
    s.seed = seed * 0x9e3779b97f4a7c15ULL + 0x1234567ULL;
    return s;
}

LowRankPair train_fp_adapter(const Task& task, const CompareConfig& config,
                             std::uint64_t seed) {
    AdapterLayer fp;
    fp.variant = LayerVariant::FpReference;
    fp.fp_weight = task.w0;
    fp.lr = LowRankPair::init(task.out_dim, task.in_dim, config.rank,
                              seed ^ 0x0ada97e5ULL);
    TrainConfig tc = config.train;
    tc.gradient_check = false;
    train_adapter(fp, task, tc);
    return fp.lr;
}

} // namespace

UniformQuantized merge_then_ptq(const Matrix& w, const LowRankPair& lr, int bits) {
    g_ptq_calls.fetch_add(1, std::memory_order_relaxed);
    const Matrix merged = add(w, scaled(lr.product(), lr.lora_scale));
    return uniform_quantize(merged, bits, Granularity::PerChannel);
}

std::size_t ptq_call_count() { return g_ptq_calls.load(std::memory_order_relaxed); }

void reset_ptq_call_count() { g_ptq_calls.store(0, std::memory_order_relaxed); }

ComparisonReport compare_pipelines(const CompareConfig& config) {
    for (int b : config.bits) {
        if (b < 2 || b > 8) throw ConfigError("compare: bits must be within [2, 8]");
    }
    ComparisonReport report;
    for (std::uint64_t seed : config.seeds) {
        const Task task = make_task(seed, config.in_dim, config.out_dim,
                                    config.planted_rank, config.noise, config.batch);
        const LowRankPair lr = train_fp_adapter(task, config, seed);
        const Matrix fp_merged = add(task.w0, scaled(lr.product(), lr.lora_scale));
        const AuxiliarySpec spec = task_spec(config.spec, seed);

        for (int b : config.bits) {
            {
                const std::size_t before = ptq_call_count();
                const UniformQuantized q = merge_then_ptq(task.w0, lr, b);
                const Matrix deq = dequantize(q);
                ComparisonRow row;
                row.bits = b;
                row.pipeline = "merge_then_ptq";
                row.seed = seed;
                row.recon_mse = mean_squared_error(deq, fp_merged);
                row.val_loss = deployed_val_loss(deq, task);
                row.zero_denominator_count = 0;
                row.storage_bytes = packed_size(q.ints.size(), b);
                row.ptq_calls = ptq_call_count() - before;
                report.rows.push_back(row);
            }
            const QuantizedBase qb = aqs_preprocess(task.w0, spec, b);
            {
                const std::size_t before = ptq_call_count();
                const MergedWeights m = merge_mul(qb, lr, b);
                const Matrix deq = dequantize_merged(m);
                ComparisonRow row;
                row.bits = b;
                row.pipeline = "intlora_mul";
                row.seed = seed;
                row.recon_mse = mean_squared_error(deq, fp_merged);
                row.val_loss = deployed_val_loss(deq, task);
                row.zero_denominator_count = zero_denominator_count(qb);
                row.storage_bytes = packed_size(m.base_ints.size(), m.base_bits) +
                                    packed_size(m.adapt.ints.size(), m.adapt.bits);
                row.ptq_calls = ptq_call_count() - before;
                report.rows.push_back(row);
            }
            {
                const std::size_t before = ptq_call_count();
                // Shift codes saturate at 2^bits - 1 <= headroom, so the code
                // width is capped at 5; wider codes would demand headroom
                // beyond what exact binary64 shifts can represent.
                const MergedWeights m =
                    merge_shift(qb, lr, std::min(b, 5), config.headroom);
                const Matrix deq = dequantize_merged(m);
                ComparisonRow row;
                row.bits = b;
                row.pipeline = "intlora_shift";
                row.seed = seed;
                row.recon_mse = mean_squared_error(deq, fp_merged);
                row.val_loss = deployed_val_loss(deq, task);
                row.zero_denominator_count = zero_denominator_count(qb);
                row.storage_bytes = packed_size(m.base_ints.size(), m.base_bits) +
                                    packed_size(m.code.shift.size(), m.code.bits) +
                                    (m.code.sign.size() + 7) / 8;
                row.ptq_calls = ptq_call_count() - before;
                report.rows.push_back(row);
            }
        }
    }
    return report;
}

void write_comparison_csv(const ComparisonReport& report, std::ostream& os) {
    os << "bits,pipeline,seed,recon_mse,val_loss,zero_denominator_count,"
          "storage_bytes,ptq_calls\n";
    for (const ComparisonRow& r : report.rows) {
        os << r.bits << ',' << r.pipeline << ',' << r.seed << ','
           << fmt_double(r.recon_mse) << ',' << fmt_double(r.val_loss) << ','
           << r.zero_denominator_count << ',' << r.storage_bytes << ','
           << r.ptq_calls << '\n';
    }
}

std::vector<SweepRow> ablation_sweep(const CompareConfig& config,
                                     const std::vector<double>& alphas,
                                     const std::vector<Distribution>& distributions) {
    std::vector<SweepRow> rows;
    for (std::uint64_t seed : config.seeds) {
        const Task task = make_task(seed, config.in_dim, config.out_dim,
                                    config.planted_rank, config.noise, config.batch);
        const LowRankPair lr = train_fp_adapter(task, config, seed);
        const Matrix fp_merged = add(task.w0, scaled(lr.product(), lr.lora_scale));
        for (Distribution dist : distributions) {
            for (double alpha : alphas) {
                AuxiliarySpec spec = task_spec(config.spec, seed);
                spec.distribution = dist;
                spec.alpha = alpha;
                for (int b : config.bits) {
                    const QuantizedBase qb = aqs_preprocess(task.w0, spec, b);
                    const Matrix mul_deq =
                        dequantize_merged(merge_mul(qb, lr, b));
                    rows.push_back({distribution_name(dist), alpha, b, "intlora_mul",
                                    seed, mean_squared_error(mul_deq, fp_merged),
                                    deployed_val_loss(mul_deq, task)});
                    const Matrix shift_deq = dequantize_merged(
                        merge_shift(qb, lr, std::min(b, 5), config.headroom));
                    rows.push_back({distribution_name(dist), alpha, b, "intlora_shift",
                                    seed, mean_squared_error(shift_deq, fp_merged),
                                    deployed_val_loss(shift_deq, task)});
                }
            }
        }
    }
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os) {
    os << "distribution,alpha,bits,pipeline,seed,recon_mse,val_loss\n";
    for (const SweepRow& r : rows) {
        os << r.distribution << ',' << fmt_double(r.alpha) << ',' << r.bits << ','
           << r.pipeline << ',' << r.seed << ',' << fmt_double(r.recon_mse) << ','
           << fmt_double(r.val_loss) << '\n';
    }
}

} // namespace intlora
