#ifndef FAIRGAP_NUMERICS_HPP
#define FAIRGAP_NUMERICS_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "fairgap/losses.hpp"
#include "fairgap/matrix.hpp"

namespace fairgap {

// Dense head: relu hidden layers with biases, sigmoid output layer without
// bias, optional inverted dropout after each hidden activation.
struct ModelParams {
    std::vector<std::size_t> layer_sizes;          // [in, hidden..., G]
    std::vector<Matrix> layer_weights;             // fan_in x fan_out per layer
    std::vector<std::vector<double>> layer_biases; // hidden layers only
    double dropout_rate = 0.0;                     // in [0,1)

    std::size_t n_layers() const { return layer_weights.size(); }
    std::size_t input_dim() const { return layer_sizes.front(); }
    std::size_t output_dim() const { return layer_sizes.back(); }
    std::size_t n_parameters() const;
    void validate() const;
};

// Glorot-uniform weights, zero biases; deterministic per seed.
ModelParams init_params(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed,
                        double dropout_rate = 0.0);

// Probabilities, N x G, clamped into [kProbClamp, 1-kProbClamp]. Dropout
// masks are drawn from `seed` only in training mode and depend only on the
// seed and the layer shapes, never on parameter values.
Matrix forward(const ModelParams& params, const Matrix& features,
               bool training_mode = false, std::uint64_t seed = 0);

struct GradientBundle {
    std::vector<Matrix> weight_grads;
    std::vector<std::vector<double>> bias_grads;

    double max_abs() const;
};

struct BackwardResult {
    double loss = 0.0;
    GradientBundle grads;
};

// Analytic gradient of the configured loss via the chain rule. The returned
// loss equals the losses-module value on the same predictions. Pass
// training_mode/seed to differentiate the dropout-masked network; the same
// seed reproduces the same masks.
BackwardResult backward(const ModelParams& params, const Matrix& features,
                        const Matrix& targets, const LossConfig& config,
                        bool training_mode = false, std::uint64_t seed = 0);

struct OptimizerState {
    std::uint64_t step_count = 0;
    std::vector<Matrix> first_moment;
    std::vector<std::vector<double>> first_moment_bias;
    std::vector<Matrix> inf_norm;
    std::vector<std::vector<double>> inf_norm_bias;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

OptimizerState init_adamax(const ModelParams& params, double learning_rate = 1e-3,
                           double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8);

// AdaMax update: exponentially weighted first moment, infinity-norm second
// moment, bias-corrected first moment. Returns the updated copies.
std::pair<ModelParams, OptimizerState> adamax_step(ModelParams params,
                                                   const GradientBundle& grads,
                                                   OptimizerState state);

// Central-difference estimate of every partial derivative. Test oracle; not
// used by any production path.
GradientBundle finite_diff_grad(const ModelParams& params, const Matrix& features,
                                const Matrix& targets, const LossConfig& config, double h,
                                bool training_mode = false, std::uint64_t seed = 0);

// max over parameters of |a-b| / max(|a|, |b|, floor).
double max_relative_error(const GradientBundle& a, const GradientBundle& b,
                          double floor = 1e-6);

} // namespace fairgap

#endif // FAIRGAP_NUMERICS_HPP
