#ifndef FAIRGAP_LOSSES_HPP
#define FAIRGAP_LOSSES_HPP

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fairgap/matrix.hpp"

namespace fairgap {

enum class LossKind { Oe, GapMulti, Cla, Soo };

std::string loss_kind_name(LossKind k);
LossKind loss_kind_from_name(const std::string& name);

// Per-group positive/negative class weights for weighted cross entropy.
struct GroupWeights {
    double pos = 1.0;
    double neg = 1.0;
};

struct LossConfig {
    LossKind kind = LossKind::Oe;
    double lambda = 1.0;                     // ignored for Oe
    std::vector<GroupWeights> class_weights; // one entry per group

    void validate(std::size_t n_groups) const;
};

// Predictions are clamped into [kProbClamp, 1-kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-7;

inline double clamp_prob(double p) {
    if (p < kProbClamp) return kProbClamp;
    if (p > 1.0 - kProbClamp) return 1.0 - kProbClamp;
    return p;
}

// Weighted binary cross entropy, mean over samples:
//   -(1/n) sum_i [ w_pos*y_i*log(p_i) + w_neg*(1-y_i)*log(1-p_i) ]
double wbce(std::span<const double> y_true, std::span<const double> y_pred,
            double w_pos, double w_neg);

// Multi-label mode: group g's error is the wbce over output column g across
// all samples.
std::vector<double> group_errors(const Matrix& y_true, const Matrix& y_pred,
                                 const std::vector<GroupWeights>& weights);

// Legacy partitioned mode: one label column plus a demographic column; group
// g's error is the wbce over the samples whose group id equals g. A group
// with no samples in the batch contributes zero.
std::vector<double> partitioned_group_errors(std::span<const double> y_label,
                                             std::span<const int> group_ids,
                                             std::span<const double> y_pred,
                                             const std::vector<GroupWeights>& weights);

// Sum of per-group errors (the OE term).
double overall_loss(const Matrix& y_true, const Matrix& y_pred,
                    const std::vector<GroupWeights>& weights);

// Sum over the G(G-1)/2 unordered pairs of squared error differences.
// term_count, when non-null, receives the number of evaluated pair terms.
double pairwise_penalty(std::span<const double> errs, std::size_t* term_count = nullptr);

double gap_multi_loss(const Matrix& y_true, const Matrix& y_pred,
                      const std::vector<GroupWeights>& weights, double lambda);

// Two-group form; requires exactly two groups.
double gap_binary_loss(const Matrix& y_true, const Matrix& y_pred,
                       const std::vector<GroupWeights>& weights, double lambda);

// Deviation-from-mean reference form: overall error plus
// lambda * sum_g |err_g - mean(err)|. Kept as the serial reference the
// pairwise form replaces.
double soo_loss(const Matrix& y_true, const Matrix& y_pred,
                const std::vector<GroupWeights>& weights, double lambda);

// Class-wise equal opportunity: pooled wbce plus
// lambda * sum_{y in {0,1}} sum_g |wbce(y,g) - wbce(y)|.
// Empty (label, group) cells contribute zero.
double cla_loss(const Matrix& y_true, const Matrix& y_pred,
                const std::vector<GroupWeights>& weights, double lambda);

// Dispatch on config.kind.
double loss_value(const Matrix& y_true, const Matrix& y_pred, const LossConfig& config);

// Loss value together with its gradient w.r.t. every prediction cell.
// Backbone of the analytic backward pass; the gradient is exact wherever the
// loss is differentiable (sign terms use the subgradient 0 at ties).
struct LossGradient {
    double value = 0.0;
    Matrix pred_grad; // N x G
};
LossGradient loss_with_pred_grad(const Matrix& y_true, const Matrix& y_pred,
                                 const LossConfig& config);

} // namespace fairgap

#endif // FAIRGAP_LOSSES_HPP
