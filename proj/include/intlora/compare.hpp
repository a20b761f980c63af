#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "intlora/train.hpp"

namespace intlora {

// Merge-then-PTQ pipeline: W' = W + lambda*AB in real arithmetic, then
// uniform per-channel quantization. Every call bumps the post-merge PTQ
// instrumentation counter.
UniformQuantized merge_then_ptq(const Matrix& w, const LowRankPair& lr, int bits);

std::size_t ptq_call_count();
void reset_ptq_call_count();

struct ComparisonRow {
    int bits = 8;
    std::string pipeline;  // merge_then_ptq | intlora_mul | intlora_shift
    std::uint64_t seed = 0;
    double recon_mse = 0.0;  // merged weights vs FP merged weights
    double val_loss = 0.0;
    std::size_t zero_denominator_count = 0;
    std::size_t storage_bytes = 0;  // actual packed payload sizes
    std::size_t ptq_calls = 0;      // post-merge PTQ calls made by this cell
};

struct ComparisonReport {
    std::vector<ComparisonRow> rows;
};

struct CompareConfig {
    std::vector<int> bits{4, 8};
    std::vector<std::uint64_t> seeds{1};
    std::size_t in_dim = 64;
    std::size_t out_dim = 64;
    std::size_t rank = 4;
    std::size_t planted_rank = 2;
    double noise = 0.1;
    std::size_t batch = 32;
    TrainConfig train;
    AuxiliarySpec spec;  // seed field is re-derived per task seed
    int headroom = 32;
};

// Trains one FP adapter per seed and evaluates all three pipelines at each
// bit-width; the merge/quantize step is the only varying factor.
ComparisonReport compare_pipelines(const CompareConfig& config);

void write_comparison_csv(const ComparisonReport& report, std::ostream& os);

struct SweepRow {
    std::string distribution;
    double alpha = 0.0;
    int bits = 8;
    std::string pipeline;
    std::uint64_t seed = 0;
    double recon_mse = 0.0;
    double val_loss = 0.0;
};

// Ablation harness: re-merges a shared FP-trained adapter under each
// (distribution, alpha) auxiliary-matrix configuration.
std::vector<SweepRow> ablation_sweep(const CompareConfig& config,
                                     const std::vector<double>& alphas,
                                     const std::vector<Distribution>& distributions);

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& os);

} // namespace intlora
