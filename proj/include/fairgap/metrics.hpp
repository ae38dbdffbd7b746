#ifndef FAIRGAP_METRICS_HPP
#define FAIRGAP_METRICS_HPP

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fairgap/matrix.hpp"

namespace fairgap {

struct GroupConfusion {
    std::int64_t tp = 0;
    std::int64_t fn = 0;
    std::int64_t fp = 0;
    std::int64_t tn = 0;

    std::int64_t positives() const { return tp + fn; }
    std::int64_t negatives() const { return fp + tn; }
    std::int64_t total() const { return tp + fn + fp + tn; }
};

// Predictions at or above the threshold count as positive.
GroupConfusion confusion(std::span<const double> y_true, std::span<const double> y_pred_prob,
                         double threshold);

enum class BaStatus { Defined, NoPositives, NoNegatives };

struct GroupBa {
    double value = 0.0; // meaningful only when status == Defined
    BaStatus status = BaStatus::Defined;
};

// (TPR + TNR) / 2; undefined when the group has no positives or no negatives.
GroupBa balanced_accuracy(const GroupConfusion& c);

// Arithmetic mean; empty input is an error.
double avg_ba(std::span<const double> bas);

// max - min; empty input is an error.
double max_diff(std::span<const double> bas);

// Fraction of label cells mispredicted.
double hamming_loss(const Matrix& y_true, const Matrix& y_pred_prob, double threshold);

struct MacroPrf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Unweighted mean over groups; zero-denominator cells contribute 0.
MacroPrf macro_prf(std::span<const GroupConfusion> confusions);

// Symmetric, zero diagonal, entry (i,j) = |ba_i - ba_j|.
Matrix ba_diff_matrix(std::span<const double> bas);

struct MetricsReport {
    std::vector<std::string> group_names;
    std::vector<GroupConfusion> confusions;
    std::vector<GroupBa> per_group_ba;
    double avg_ba = 0.0;      // over defined groups only
    double max_diff = 0.0;    // over defined groups only
    double hamming = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    Matrix ba_diff; // G x G; NaN where either group's BA is undefined
    std::vector<std::string> warnings;
};

MetricsReport build_report(const Matrix& y_true, const Matrix& y_pred_prob, double threshold,
                           const std::vector<std::string>& group_names);

// Fixed-field JSON document (per_group_ba keyed by group name, ba_diff_matrix
// row-major with nulls for undefined entries).
std::string report_to_json(const MetricsReport& report, int indent = 2);

// Heatmap CSV: group names as header row and leading column.
std::string ba_diff_to_csv(const std::vector<std::string>& group_names, const Matrix& ba_diff);

} // namespace fairgap

#endif // FAIRGAP_METRICS_HPP
