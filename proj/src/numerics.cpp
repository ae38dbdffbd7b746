#include "fairgap/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fairgap/errors.hpp"
#include "fairgap/rng.hpp"

namespace fairgap {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// a^T * b without materializing the transpose.
Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw ShapeError("matmul_at_b: row counts disagree");
    Matrix out(a.cols(), b.cols(), 0.0);
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double ari = a(r, i);
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += ari * b(r, j);
        }
    return out;
}

// a * b^T
Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw ShapeError("matmul_a_bt: column counts disagree");
    Matrix out(a.rows(), b.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.rows(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(j, k);
            out(i, j) = acc;
        }
    return out;
}

struct ForwardPass {
    // inputs[k] is the (post-dropout) input of layer k; inputs has n_layers
    // entries. pre_act[k] is layer k's pre-activation.
    std::vector<Matrix> inputs;
    std::vector<Matrix> pre_act;
    std::vector<Matrix> dropout_masks; // scaled keep masks, hidden layers only
    Matrix raw_probs;                  // sigmoid before clamping
    Matrix probs;                      // clamped
};

ForwardPass run_forward(const ModelParams& params, const Matrix& features, bool training_mode,
                        std::uint64_t seed) {
    params.validate();
    if (features.cols() != params.input_dim())
        throw ShapeError("forward: feature width does not match first layer fan-in");
    if (!features.all_finite()) throw NumericError("forward: non-finite feature entries");

    const std::size_t n_layers = params.n_layers();
    const double p_drop = params.dropout_rate;
    // Masks depend only on the seed and the layer shapes, so repeated calls
    // with the same seed (and finite-difference probes) see identical masks.
    auto rng = make_rng(seed, 0xd509);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    ForwardPass pass;
    pass.inputs.reserve(n_layers);
    pass.pre_act.reserve(n_layers);
    pass.inputs.push_back(features);

    Matrix activ = features;
    for (std::size_t k = 0; k + 1 < n_layers; ++k) {
        Matrix z = matmul(activ, params.layer_weights[k]);
        const auto& bias = params.layer_biases[k];
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += bias[j];
        pass.pre_act.push_back(z);

        Matrix a(z.rows(), z.cols());
        for (std::size_t i = 0; i < z.rows(); ++i)
            for (std::size_t j = 0; j < z.cols(); ++j) a(i, j) = std::max(0.0, z(i, j));

        if (training_mode && p_drop > 0.0) {
            Matrix mask(a.rows(), a.cols());
            const double keep_scale = 1.0 / (1.0 - p_drop);
            for (std::size_t i = 0; i < mask.rows(); ++i)
                for (std::size_t j = 0; j < mask.cols(); ++j)
                    mask(i, j) = unif(rng) >= p_drop ? keep_scale : 0.0;
            for (std::size_t i = 0; i < a.rows(); ++i)
                for (std::size_t j = 0; j < a.cols(); ++j) a(i, j) *= mask(i, j);
            pass.dropout_masks.push_back(std::move(mask));
        }
        pass.inputs.push_back(a);
        activ = pass.inputs.back();
    }

    // Output layer: sigmoid, no bias.
    Matrix z_out = matmul(activ, params.layer_weights[n_layers - 1]);
    pass.pre_act.push_back(z_out);
    pass.raw_probs = Matrix(z_out.rows(), z_out.cols());
    pass.probs = Matrix(z_out.rows(), z_out.cols());
    for (std::size_t i = 0; i < z_out.rows(); ++i)
        for (std::size_t j = 0; j < z_out.cols(); ++j) {
            const double raw = sigmoid(z_out(i, j));
            pass.raw_probs(i, j) = raw;
            pass.probs(i, j) = clamp_prob(raw);
        }
    return pass;
}

void check_grad_shapes(const ModelParams& params, const GradientBundle& grads) {
    if (grads.weight_grads.size() != params.layer_weights.size() ||
        grads.bias_grads.size() != params.layer_biases.size())
        throw ShapeError("gradient bundle does not match parameter layout");
    for (std::size_t k = 0; k < grads.weight_grads.size(); ++k)
        if (grads.weight_grads[k].rows() != params.layer_weights[k].rows() ||
            grads.weight_grads[k].cols() != params.layer_weights[k].cols())
            throw ShapeError("weight gradient shape mismatch");
    for (std::size_t k = 0; k < grads.bias_grads.size(); ++k)
        if (grads.bias_grads[k].size() != params.layer_biases[k].size())
            throw ShapeError("bias gradient shape mismatch");
}

} // namespace

std::size_t ModelParams::n_parameters() const {
    std::size_t total = 0;
    for (const auto& w : layer_weights) total += w.size();
    for (const auto& b : layer_biases) total += b.size();
    return total;
}

void ModelParams::validate() const {
    if (layer_sizes.size() < 2) throw ConfigError("model: at least input and output layers required");
    if (layer_weights.size() != layer_sizes.size() - 1)
        throw ConfigError("model: one weight matrix per layer transition required");
    if (layer_biases.size() != layer_weights.size() - 1)
        throw ConfigError("model: biases are carried by hidden layers only");
    for (std::size_t k = 0; k < layer_weights.size(); ++k) {
        if (layer_weights[k].rows() != layer_sizes[k] || layer_weights[k].cols() != layer_sizes[k + 1])
            throw ShapeError("model: adjacent layer dimensions disagree");
        if (!layer_weights[k].all_finite()) throw NumericError("model: non-finite weight");
    }
    for (std::size_t k = 0; k < layer_biases.size(); ++k) {
        if (layer_biases[k].size() != layer_sizes[k + 1])
            throw ShapeError("model: bias width disagrees with layer width");
        for (double v : layer_biases[k])
            if (!std::isfinite(v)) throw NumericError("model: non-finite bias");
    }
    if (!(dropout_rate >= 0.0) || dropout_rate >= 1.0)
        throw ConfigError("model: dropout rate must lie in [0,1)");
}

ModelParams init_params(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed,
                        double dropout_rate) {
    if (layer_sizes.size() < 2)
        throw ConfigError("init_params: layer_sizes needs input and output entries");
    for (std::size_t s : layer_sizes)
        if (s == 0) throw ConfigError("init_params: layer sizes must be positive");

    ModelParams params;
    params.layer_sizes = layer_sizes;
    params.dropout_rate = dropout_rate;
    auto rng = make_rng(seed, 0x11);
    for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
        const std::size_t fan_in = layer_sizes[k];
        const std::size_t fan_out = layer_sizes[k + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> unif(-limit, limit);
        Matrix w(fan_in, fan_out);
        for (std::size_t i = 0; i < fan_in; ++i)
            for (std::size_t j = 0; j < fan_out; ++j) w(i, j) = unif(rng);
        params.layer_weights.push_back(std::move(w));
        if (k + 2 < layer_sizes.size())
            params.layer_biases.emplace_back(fan_out, 0.0);
    }
    params.validate();
    return params;
}

Matrix forward(const ModelParams& params, const Matrix& features, bool training_mode,
               std::uint64_t seed) {
    return run_forward(params, features, training_mode, seed).probs;
}

double GradientBundle::max_abs() const {
    double m = 0.0;
    for (const auto& w : weight_grads)
        for (std::size_t i = 0; i < w.size(); ++i) m = std::max(m, std::abs(w.data()[i]));
    for (const auto& b : bias_grads)
        for (double v : b) m = std::max(m, std::abs(v));
    return m;
}

BackwardResult backward(const ModelParams& params, const Matrix& features, const Matrix& targets,
                        const LossConfig& config, bool training_mode, std::uint64_t seed) {
    if (targets.rows() != features.rows())
        throw ShapeError("backward: feature and target row counts disagree");
    if (targets.cols() != params.output_dim())
        throw ShapeError("backward: target width does not match output layer");

    const auto pass = run_forward(params, features, training_mode, seed);
    const auto lg = loss_with_pred_grad(targets, pass.probs, config);

    const std::size_t n_layers = params.n_layers();
    BackwardResult result;
    result.loss = lg.value;
    result.grads.weight_grads.resize(n_layers);
    result.grads.bias_grads.resize(params.layer_biases.size());

    // d(loss)/d(z_out); the clamp contributes slope zero where the sigmoid
    // saturated past the clamp interval.
    Matrix delta(lg.pred_grad.rows(), lg.pred_grad.cols());
    for (std::size_t i = 0; i < delta.rows(); ++i)
        for (std::size_t j = 0; j < delta.cols(); ++j) {
            const double raw = pass.raw_probs(i, j);
            const double slope =
                (raw >= kProbClamp && raw <= 1.0 - kProbClamp) ? raw * (1.0 - raw) : 0.0;
            delta(i, j) = lg.pred_grad(i, j) * slope;
        }

    result.grads.weight_grads[n_layers - 1] = matmul_at_b(pass.inputs[n_layers - 1], delta);
    if (n_layers > 1) {
        Matrix upstream = matmul_a_bt(delta, params.layer_weights[n_layers - 1]);
        for (std::size_t k = n_layers - 1; k-- > 0;) {
            // Through dropout, then relu.
            if (!pass.dropout_masks.empty()) {
                const Matrix& mask = pass.dropout_masks[k];
                for (std::size_t i = 0; i < upstream.rows(); ++i)
                    for (std::size_t j = 0; j < upstream.cols(); ++j)
                        upstream(i, j) *= mask(i, j);
            }
            const Matrix& z = pass.pre_act[k];
            for (std::size_t i = 0; i < upstream.rows(); ++i)
                for (std::size_t j = 0; j < upstream.cols(); ++j)
                    if (z(i, j) <= 0.0) upstream(i, j) = 0.0;

            result.grads.weight_grads[k] = matmul_at_b(pass.inputs[k], upstream);
            std::vector<double> bias_grad(z.cols(), 0.0);
            for (std::size_t i = 0; i < upstream.rows(); ++i)
                for (std::size_t j = 0; j < upstream.cols(); ++j) bias_grad[j] += upstream(i, j);
            result.grads.bias_grads[k] = std::move(bias_grad);

            if (k > 0) upstream = matmul_a_bt(upstream, params.layer_weights[k]);
        }
    }
    return result;
}

OptimizerState init_adamax(const ModelParams& params, double learning_rate, double beta1,
                           double beta2, double epsilon) {
    if (!(learning_rate > 0.0)) throw ConfigError("adamax: learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
        throw ConfigError("adamax: betas must lie in (0,1)");
    OptimizerState state;
    state.learning_rate = learning_rate;
    state.beta1 = beta1;
    state.beta2 = beta2;
    state.epsilon = epsilon;
    for (const auto& w : params.layer_weights) {
        state.first_moment.emplace_back(w.rows(), w.cols(), 0.0);
        state.inf_norm.emplace_back(w.rows(), w.cols(), 0.0);
    }
    for (const auto& b : params.layer_biases) {
        state.first_moment_bias.emplace_back(b.size(), 0.0);
        state.inf_norm_bias.emplace_back(b.size(), 0.0);
    }
    return state;
}

std::pair<ModelParams, OptimizerState> adamax_step(ModelParams params, const GradientBundle& grads,
                                                   OptimizerState state) {
    check_grad_shapes(params, grads);
    if (state.first_moment.size() != params.layer_weights.size())
        throw ShapeError("adamax_step: state does not match parameter layout");

    const std::uint64_t t = state.step_count + 1;
    const double correction = 1.0 - std::pow(state.beta1, static_cast<double>(t));
    const double scale = state.learning_rate / correction;

    auto update = [&](double& theta, double g, double& m, double& u) {
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        u = std::max(state.beta2 * u, std::abs(g));
        theta -= scale * m / (u + state.epsilon);
    };

    for (std::size_t k = 0; k < params.layer_weights.size(); ++k) {
        Matrix& w = params.layer_weights[k];
        const Matrix& g = grads.weight_grads[k];
        Matrix& m = state.first_moment[k];
        Matrix& u = state.inf_norm[k];
        for (std::size_t i = 0; i < w.size(); ++i)
            update(w.data()[i], g.data()[i], m.data()[i], u.data()[i]);
    }
    for (std::size_t k = 0; k < params.layer_biases.size(); ++k) {
        auto& b = params.layer_biases[k];
        const auto& g = grads.bias_grads[k];
        auto& m = state.first_moment_bias[k];
        auto& u = state.inf_norm_bias[k];
        for (std::size_t i = 0; i < b.size(); ++i) update(b[i], g[i], m[i], u[i]);
    }
    state.step_count = t;
    return {std::move(params), std::move(state)};
}

GradientBundle finite_diff_grad(const ModelParams& params, const Matrix& features,
                                const Matrix& targets, const LossConfig& config, double h,
                                bool training_mode, std::uint64_t seed) {
    if (!(h > 0.0)) throw ConfigError("finite_diff_grad: h must be positive");

    ModelParams probe = params;
    auto eval = [&]() {
        const auto pass = run_forward(probe, features, training_mode, seed);
        return loss_value(targets, pass.probs, config);
    };

    GradientBundle out;
    for (auto& w : probe.layer_weights) {
        Matrix g(w.rows(), w.cols(), 0.0);
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w.data()[i];
            w.data()[i] = saved + h;
            const double up = eval();
            w.data()[i] = saved - h;
            const double down = eval();
            w.data()[i] = saved;
            g.data()[i] = (up - down) / (2.0 * h);
        }
        out.weight_grads.push_back(std::move(g));
    }
    for (auto& b : probe.layer_biases) {
        std::vector<double> g(b.size(), 0.0);
        for (std::size_t i = 0; i < b.size(); ++i) {
            const double saved = b[i];
            b[i] = saved + h;
            const double up = eval();
            b[i] = saved - h;
            const double down = eval();
            b[i] = saved;
            g[i] = (up - down) / (2.0 * h);
        }
        out.bias_grads.push_back(std::move(g));
    }
    return out;
}

double max_relative_error(const GradientBundle& a, const GradientBundle& b, double floor) {
    double worst = 0.0;
    auto accumulate = [&](double x, double y) {
        const double rel = std::abs(x - y) / std::max({std::abs(x), std::abs(y), floor});
        worst = std::max(worst, rel);
    };
    for (std::size_t k = 0; k < a.weight_grads.size(); ++k)
        for (std::size_t i = 0; i < a.weight_grads[k].size(); ++i)
            accumulate(a.weight_grads[k].data()[i], b.weight_grads[k].data()[i]);
    for (std::size_t k = 0; k < a.bias_grads.size(); ++k)
        for (std::size_t i = 0; i < a.bias_grads[k].size(); ++i)
            accumulate(a.bias_grads[k][i], b.bias_grads[k][i]);
    return worst;
}

} // namespace fairgap
