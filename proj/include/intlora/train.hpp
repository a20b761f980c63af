#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "intlora/adapt.hpp"

namespace intlora {

enum class LayerVariant : std::uint8_t { Mul = 0, Shift = 1, FpReference = 2 };

LayerVariant layer_variant_from_name(const std::string& name);
std::string layer_variant_name(LayerVariant v);

// One adapted linear layer. FpReference carries a real weight matrix for
// baseline comparison only.
struct AdapterLayer {
    LayerVariant variant = LayerVariant::Mul;
    QuantizedBase qb;   // Mul / Shift
    Matrix fp_weight;   // FpReference
    LowRankPair lr;
    int act_bits = 0;    // 0 = activations stay real
    int adapt_bits = 8;  // 0 = adaptation term kept real (Mul only)
    int shift_bits = 8;
    int headroom = 32;
    Granularity adapt_granularity = Granularity::PerChannel;
};

// x is C_in x L. Training-time forward: real shadow arithmetic with
// quant-dequant in the loop (QAT style); integer-only execution lives in the
// merged path (dequantize_merged / merged inference).
Matrix forward(const AdapterLayer& layer, const Matrix& x);

struct Grads {
    Matrix da;
    Matrix db;
};

// Straight-through gradients for A and B: the adaptation-term quantizer is
// treated as identity, R* and the integer base are frozen.
Grads ste_grads(const AdapterLayer& layer, const Matrix& x, const Matrix& upstream);

// Central differences, elementwise over A and B; the independent oracle.
Grads finite_diff_grads(const std::function<double(const LowRankPair&)>& loss_fn,
                        const LowRankPair& at, double h);

// Synthetic regression task with a planted low-rank shift:
// W_true = W0 + U V^T, targets observed under Gaussian noise.
struct Task {
    std::uint64_t seed = 0;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::size_t batch = 0;
    std::size_t planted_rank = 0;
    double noise = 0.0;  // relative to teacher output std
    Matrix w0;
    Matrix w_true;
    Matrix x_train, y_train;
    Matrix x_val, y_val;
};

Task make_task(std::uint64_t seed, std::size_t in_dim, std::size_t out_dim,
               std::size_t planted_rank, double noise, std::size_t batch = 32,
               double shift_fraction = 0.25);

// Same construction, but around a caller-provided base weight matrix
// (e.g. the dequantized surrogate of a loaded checkpoint).
Task make_task_with_base(Matrix w0, std::uint64_t seed, std::size_t planted_rank,
                         double noise, std::size_t batch = 32,
                         double shift_fraction = 0.25);

enum class Optimizer : std::uint8_t { Sgd = 0, Adam = 1 };

struct TrainConfig {
    double lr_rate = 1e-3;
    int steps = 1000;
    Optimizer optimizer = Optimizer::Adam;
    bool gradient_check = true;  // FD spot check at init, recorded in the report
};

struct TrainReport {
    std::vector<double> loss_curve;
    double final_train_loss = 0.0;
    double final_val_loss = 0.0;
    double grad_check_max_rel_err = 0.0;
    double wall_clock_seconds = 0.0;
};

// Full-batch MSE regression against the task teacher; deterministic given
// seeds. Throws NumericError (with the step index) on divergence.
TrainReport train_adapter(AdapterLayer& layer, const Task& task,
                          const TrainConfig& config);

double validation_loss(const AdapterLayer& layer, const Task& task);

} // namespace intlora
