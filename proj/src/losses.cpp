#include "fairgap/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fairgap/errors.hpp"

namespace fairgap {

namespace {

// Per-cell weighted cross-entropy term and its derivative w.r.t. the
// prediction. Predictions are clamped first; the derivative is zero outside
// the clamp interval so the analytic path agrees with finite differences
// through the clamp.
double cell_term(double y, double p, const GroupWeights& w) {
    const double pc = clamp_prob(p);
    if (y != 0.0)
        return -w.pos * y * std::log(pc) - w.neg * (1.0 - y) * std::log(1.0 - pc);
    return -w.neg * std::log(1.0 - pc);
}

double cell_term_grad(double y, double p, const GroupWeights& w) {
    if (p < kProbClamp || p > 1.0 - kProbClamp) return 0.0;
    const double pc = clamp_prob(p);
    if (y != 0.0) return -w.pos * y / pc + w.neg * (1.0 - y) / (1.0 - pc);
    return w.neg / (1.0 - pc);
}

int sign(double x) { return (x > 0.0) - (x < 0.0); }

void check_matching(const Matrix& y_true, const Matrix& y_pred,
                    const std::vector<GroupWeights>& weights) {
    if (y_true.rows() != y_pred.rows() || y_true.cols() != y_pred.cols())
        throw ShapeError("loss: label and prediction shapes disagree");
    if (y_true.rows() == 0 || y_true.cols() == 0)
        throw EmptyInputError("loss: empty label matrix");
    if (weights.size() != y_true.cols())
        throw ShapeError("loss: one weight pair per group required");
}

// Chain coefficients d(loss)/d(err_g) for the losses that are functions of
// the per-group error vector.
std::vector<double> error_coefficients(LossKind kind, double lambda,
                                       const std::vector<double>& errs) {
    const std::size_t g_count = errs.size();
    std::vector<double> coeff(g_count, 1.0);
    if (kind == LossKind::GapMulti) {
        const double total = std::accumulate(errs.begin(), errs.end(), 0.0);
        for (std::size_t g = 0; g < g_count; ++g)
            coeff[g] = 1.0 + lambda * 2.0 * (static_cast<double>(g_count) * errs[g] - total);
    } else if (kind == LossKind::Soo) {
        const double mean =
            std::accumulate(errs.begin(), errs.end(), 0.0) / static_cast<double>(g_count);
        double sign_sum = 0.0;
        for (double e : errs) sign_sum += sign(e - mean);
        for (std::size_t g = 0; g < g_count; ++g)
            coeff[g] = 1.0 + lambda * (sign(errs[g] - mean) - sign_sum / static_cast<double>(g_count));
    }
    return coeff;
}

} // namespace

std::string loss_kind_name(LossKind k) {
    switch (k) {
        case LossKind::Oe: return "oe";
        case LossKind::GapMulti: return "gap_multi";
        case LossKind::Cla: return "cla";
        case LossKind::Soo: return "soo";
    }
    throw ConfigError("unknown loss kind");
}

LossKind loss_kind_from_name(const std::string& name) {
    if (name == "oe") return LossKind::Oe;
    if (name == "gap_multi") return LossKind::GapMulti;
    if (name == "cla") return LossKind::Cla;
    if (name == "soo") return LossKind::Soo;
    throw ConfigError("unknown loss kind: " + name);
}

void LossConfig::validate(std::size_t n_groups) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw ConfigError("loss: lambda must be finite and non-negative");
    if (class_weights.size() != n_groups)
        throw ConfigError("loss: class_weights must have one entry per group");
    for (const auto& w : class_weights) {
        if (!(w.pos > 0.0) || !(w.neg > 0.0) || !std::isfinite(w.pos) || !std::isfinite(w.neg))
            throw ConfigError("loss: class weights must be strictly positive and finite");
    }
}

double wbce(std::span<const double> y_true, std::span<const double> y_pred, double w_pos,
            double w_neg) {
    if (y_true.size() != y_pred.size()) throw ShapeError("wbce: length mismatch");
    if (y_true.empty()) throw EmptyInputError("wbce: empty input");
    const GroupWeights w{w_pos, w_neg};
    double sum = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) sum += cell_term(y_true[i], y_pred[i], w);
    return sum / static_cast<double>(y_true.size());
}

std::vector<double> group_errors(const Matrix& y_true, const Matrix& y_pred,
                                 const std::vector<GroupWeights>& weights) {
    check_matching(y_true, y_pred, weights);
    const std::size_t n = y_true.rows();
    const std::size_t g_count = y_true.cols();
    std::vector<double> errs(g_count, 0.0);
    for (std::size_t g = 0; g < g_count; ++g) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += cell_term(y_true(i, g), y_pred(i, g), weights[g]);
        errs[g] = sum / static_cast<double>(n);
    }
    return errs;
}

std::vector<double> partitioned_group_errors(std::span<const double> y_label,
                                             std::span<const int> group_ids,
                                             std::span<const double> y_pred,
                                             const std::vector<GroupWeights>& weights) {
    if (y_label.size() != group_ids.size() || y_label.size() != y_pred.size())
        throw ShapeError("partitioned_group_errors: length mismatch");
    if (y_label.empty()) throw EmptyInputError("partitioned_group_errors: empty input");
    const std::size_t g_count = weights.size();
    std::vector<double> sums(g_count, 0.0);
    std::vector<std::size_t> counts(g_count, 0);
    for (std::size_t i = 0; i < y_label.size(); ++i) {
        const int g = group_ids[i];
        if (g < 0 || static_cast<std::size_t>(g) >= g_count)
            throw ShapeError("partitioned_group_errors: group id out of range");
        sums[g] += cell_term(y_label[i], y_pred[i], weights[g]);
        ++counts[g];
    }
    std::vector<double> errs(g_count, 0.0);
    for (std::size_t g = 0; g < g_count; ++g) {
        // A group absent from the batch contributes zero rather than 0/0.
        if (counts[g] > 0) errs[g] = sums[g] / static_cast<double>(counts[g]);
    }
    return errs;
}

double overall_loss(const Matrix& y_true, const Matrix& y_pred,
                    const std::vector<GroupWeights>& weights) {
    const auto errs = group_errors(y_true, y_pred, weights);
    return std::accumulate(errs.begin(), errs.end(), 0.0);
}

double pairwise_penalty(std::span<const double> errs, std::size_t* term_count) {
    double sum = 0.0;
    std::size_t terms = 0;
    for (std::size_t i = 0; i < errs.size(); ++i) {
        for (std::size_t j = i + 1; j < errs.size(); ++j) {
            const double d = errs[i] - errs[j];
            sum += d * d;
            ++terms;
        }
    }
    if (term_count) *term_count = terms;
    return sum;
}

double gap_multi_loss(const Matrix& y_true, const Matrix& y_pred,
                      const std::vector<GroupWeights>& weights, double lambda) {
    const auto errs = group_errors(y_true, y_pred, weights);
    const double overall = std::accumulate(errs.begin(), errs.end(), 0.0);
    return overall + lambda * pairwise_penalty(errs);
}

double gap_binary_loss(const Matrix& y_true, const Matrix& y_pred,
                       const std::vector<GroupWeights>& weights, double lambda) {
    if (y_true.cols() != 2 || weights.size() != 2)
        throw ConfigError("gap_binary_loss: exactly two groups required");
    const auto errs = group_errors(y_true, y_pred, weights);
    const double d = errs[1] - errs[0];
    return (errs[0] + errs[1]) + lambda * (d * d);
}

double soo_loss(const Matrix& y_true, const Matrix& y_pred,
                const std::vector<GroupWeights>& weights, double lambda) {
    const auto errs = group_errors(y_true, y_pred, weights);
    const double overall = std::accumulate(errs.begin(), errs.end(), 0.0);
    const double mean = overall / static_cast<double>(errs.size());
    double deviation = 0.0;
    for (double e : errs) deviation += std::abs(e - mean);
    return overall + lambda * deviation;
}

namespace {

struct ClaCells {
    // Indexed [label][group]; count == 0 marks an empty cell.
    double mean[2][64] = {};
    std::size_t count[2][64] = {};
    double pooled_mean[2] = {};
    std::size_t pooled_count[2] = {};
    double total_sum = 0.0;
};

ClaCells cla_cells(const Matrix& y_true, const Matrix& y_pred,
                   const std::vector<GroupWeights>& weights) {
    const std::size_t g_count = y_true.cols();
    if (g_count > 64) throw ConfigError("cla_loss: at most 64 groups supported");
    ClaCells cells;
    double sums[2][64] = {};
    double pooled_sums[2] = {};
    for (std::size_t g = 0; g < g_count; ++g) {
        for (std::size_t i = 0; i < y_true.rows(); ++i) {
            const int label = y_true(i, g) != 0.0 ? 1 : 0;
            const double term = cell_term(y_true(i, g), y_pred(i, g), weights[g]);
            sums[label][g] += term;
            ++cells.count[label][g];
            pooled_sums[label] += term;
            ++cells.pooled_count[label];
        }
    }
    cells.total_sum = pooled_sums[0] + pooled_sums[1];
    for (int label = 0; label < 2; ++label) {
        if (cells.pooled_count[label] > 0)
            cells.pooled_mean[label] =
                pooled_sums[label] / static_cast<double>(cells.pooled_count[label]);
        for (std::size_t g = 0; g < g_count; ++g)
            if (cells.count[label][g] > 0)
                cells.mean[label][g] = sums[label][g] / static_cast<double>(cells.count[label][g]);
    }
    return cells;
}

double cla_value_from_cells(const ClaCells& cells, std::size_t n, std::size_t g_count,
                            double lambda) {
    const double pooled = cells.total_sum / static_cast<double>(n * g_count);
    double regularizer = 0.0;
    for (int label = 0; label < 2; ++label) {
        if (cells.pooled_count[label] == 0) continue;
        for (std::size_t g = 0; g < g_count; ++g) {
            if (cells.count[label][g] == 0) continue; // empty cell contributes zero
            regularizer += std::abs(cells.mean[label][g] - cells.pooled_mean[label]);
        }
    }
    return pooled + lambda * regularizer;
}

} // namespace

double cla_loss(const Matrix& y_true, const Matrix& y_pred,
                const std::vector<GroupWeights>& weights, double lambda) {
    check_matching(y_true, y_pred, weights);
    const auto cells = cla_cells(y_true, y_pred, weights);
    return cla_value_from_cells(cells, y_true.rows(), y_true.cols(), lambda);
}

double loss_value(const Matrix& y_true, const Matrix& y_pred, const LossConfig& config) {
    switch (config.kind) {
        case LossKind::Oe: return overall_loss(y_true, y_pred, config.class_weights);
        case LossKind::GapMulti:
            return gap_multi_loss(y_true, y_pred, config.class_weights, config.lambda);
        case LossKind::Cla: return cla_loss(y_true, y_pred, config.class_weights, config.lambda);
        case LossKind::Soo: return soo_loss(y_true, y_pred, config.class_weights, config.lambda);
    }
    throw ConfigError("unknown loss kind");
}

LossGradient loss_with_pred_grad(const Matrix& y_true, const Matrix& y_pred,
                                 const LossConfig& config) {
    check_matching(y_true, y_pred, config.class_weights);
    const std::size_t n = y_true.rows();
    const std::size_t g_count = y_true.cols();
    const auto& weights = config.class_weights;

    LossGradient out;
    out.pred_grad = Matrix(n, g_count, 0.0);

    if (config.kind == LossKind::Cla) {
        const auto cells = cla_cells(y_true, y_pred, weights);
        out.value = cla_value_from_cells(cells, n, g_count, config.lambda);

        // d(regularizer)/d(cell mean) resolved per (label, group); the pooled
        // mean couples every cell of the same label.
        double sign_sum[2] = {0.0, 0.0};
        for (int label = 0; label < 2; ++label)
            for (std::size_t g = 0; g < g_count; ++g)
                if (cells.count[label][g] > 0)
                    sign_sum[label] += sign(cells.mean[label][g] - cells.pooled_mean[label]);

        const double pooled_scale = 1.0 / static_cast<double>(n * g_count);
        for (std::size_t g = 0; g < g_count; ++g) {
            for (std::size_t i = 0; i < n; ++i) {
                const int label = y_true(i, g) != 0.0 ? 1 : 0;
                double dl_dterm = pooled_scale;
                const double cell_n = static_cast<double>(cells.count[label][g]);
                const double pooled_n = static_cast<double>(cells.pooled_count[label]);
                dl_dterm += config.lambda *
                            (sign(cells.mean[label][g] - cells.pooled_mean[label]) / cell_n -
                             sign_sum[label] / pooled_n);
                out.pred_grad(i, g) = dl_dterm * cell_term_grad(y_true(i, g), y_pred(i, g), weights[g]);
            }
        }
        return out;
    }

    const auto errs = group_errors(y_true, y_pred, weights);
    switch (config.kind) {
        case LossKind::Oe:
            out.value = std::accumulate(errs.begin(), errs.end(), 0.0);
            break;
        case LossKind::GapMulti:
            out.value = std::accumulate(errs.begin(), errs.end(), 0.0) +
                        config.lambda * pairwise_penalty(errs);
            break;
        case LossKind::Soo:
            out.value = soo_loss(y_true, y_pred, weights, config.lambda);
            break;
        default: throw ConfigError("unknown loss kind");
    }

    const auto coeff = error_coefficients(config.kind, config.lambda, errs);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t g = 0; g < g_count; ++g)
        for (std::size_t i = 0; i < n; ++i)
            out.pred_grad(i, g) =
                coeff[g] * inv_n * cell_term_grad(y_true(i, g), y_pred(i, g), weights[g]);
    return out;
}

} // namespace fairgap
