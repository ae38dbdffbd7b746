#include "fairgap/metrics.hpp"

#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "fairgap/errors.hpp"

namespace fairgap {

using ordered_json = nlohmann::ordered_json;

GroupConfusion confusion(std::span<const double> y_true, std::span<const double> y_pred_prob,
                         double threshold) {
    if (y_true.size() != y_pred_prob.size()) throw ShapeError("confusion: length mismatch");
    GroupConfusion c;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const bool actual = y_true[i] != 0.0;
        const bool predicted = y_pred_prob[i] >= threshold; // ties predict positive
        if (actual) {
            predicted ? ++c.tp : ++c.fn;
        } else {
            predicted ? ++c.fp : ++c.tn;
        }
    }
    return c;
}

GroupBa balanced_accuracy(const GroupConfusion& c) {
    GroupBa out;
    if (c.positives() == 0) {
        out.status = BaStatus::NoPositives;
        return out;
    }
    if (c.negatives() == 0) {
        out.status = BaStatus::NoNegatives;
        return out;
    }
    const double tpr = static_cast<double>(c.tp) / static_cast<double>(c.positives());
    const double tnr = static_cast<double>(c.tn) / static_cast<double>(c.negatives());
    out.value = (tpr + tnr) / 2.0;
    return out;
}

double avg_ba(std::span<const double> bas) {
    if (bas.empty()) throw EmptyInputError("avg_ba: empty input");
    double sum = 0.0;
    for (double v : bas) sum += v;
    return sum / static_cast<double>(bas.size());
}

double max_diff(std::span<const double> bas) {
    if (bas.empty()) throw EmptyInputError("max_diff: empty input");
    double lo = bas[0];
    double hi = bas[0];
    for (double v : bas) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return hi - lo;
}

double hamming_loss(const Matrix& y_true, const Matrix& y_pred_prob, double threshold) {
    if (y_true.rows() != y_pred_prob.rows() || y_true.cols() != y_pred_prob.cols())
        throw ShapeError("hamming_loss: shapes disagree");
    if (y_true.size() == 0) throw EmptyInputError("hamming_loss: empty matrices");
    std::int64_t wrong = 0;
    for (std::size_t i = 0; i < y_true.rows(); ++i)
        for (std::size_t g = 0; g < y_true.cols(); ++g) {
            const bool actual = y_true(i, g) != 0.0;
            const bool predicted = y_pred_prob(i, g) >= threshold;
            if (actual != predicted) ++wrong;
        }
    return static_cast<double>(wrong) / static_cast<double>(y_true.size());
}

MacroPrf macro_prf(std::span<const GroupConfusion> confusions) {
    if (confusions.empty()) throw EmptyInputError("macro_prf: empty input");
    MacroPrf macro;
    for (const auto& c : confusions) {
        const double precision =
            (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
        const double recall =
            (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
        const double f1 =
            (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        macro.precision += precision;
        macro.recall += recall;
        macro.f1 += f1;
    }
    const double g_count = static_cast<double>(confusions.size());
    macro.precision /= g_count;
    macro.recall /= g_count;
    macro.f1 /= g_count;
    return macro;
}

Matrix ba_diff_matrix(std::span<const double> bas) {
    if (bas.empty()) throw EmptyInputError("ba_diff_matrix: empty input");
    Matrix m(bas.size(), bas.size(), 0.0);
    for (std::size_t i = 0; i < bas.size(); ++i)
        for (std::size_t j = 0; j < bas.size(); ++j) m(i, j) = std::abs(bas[i] - bas[j]);
    return m;
}

MetricsReport build_report(const Matrix& y_true, const Matrix& y_pred_prob, double threshold,
                           const std::vector<std::string>& group_names) {
    if (y_true.cols() != group_names.size())
        throw ShapeError("build_report: one group name per label column required");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ConfigError("build_report: threshold must lie in (0,1)");

    MetricsReport report;
    report.group_names = group_names;
    const std::size_t g_count = y_true.cols();
    std::vector<double> defined_bas;
    for (std::size_t g = 0; g < g_count; ++g) {
        const auto c = confusion(y_true.col(g), y_pred_prob.col(g), threshold);
        report.confusions.push_back(c);
        const auto ba = balanced_accuracy(c);
        report.per_group_ba.push_back(ba);
        if (ba.status == BaStatus::Defined) {
            defined_bas.push_back(ba.value);
        } else {
            report.warnings.push_back(
                "group '" + group_names[g] + "' has " +
                (ba.status == BaStatus::NoPositives ? "no positives" : "no negatives") +
                "; excluded from avg_ba and max_diff");
        }
    }
    if (defined_bas.empty()) throw EmptyInputError("build_report: no group has a defined BA");

    report.avg_ba = avg_ba(defined_bas);
    report.max_diff = max_diff(defined_bas);
    report.hamming = hamming_loss(y_true, y_pred_prob, threshold);
    const auto prf = macro_prf(report.confusions);
    report.macro_precision = prf.precision;
    report.macro_recall = prf.recall;
    report.macro_f1 = prf.f1;

    report.ba_diff = Matrix(g_count, g_count, 0.0);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < g_count; ++i)
        for (std::size_t j = 0; j < g_count; ++j) {
            if (report.per_group_ba[i].status != BaStatus::Defined ||
                report.per_group_ba[j].status != BaStatus::Defined) {
                report.ba_diff(i, j) = nan;
            } else {
                report.ba_diff(i, j) = std::abs(report.per_group_ba[i].value -
                                                report.per_group_ba[j].value);
            }
        }
    return report;
}

std::string report_to_json(const MetricsReport& report, int indent) {
    ordered_json doc;
    ordered_json per_group = ordered_json::object();
    for (std::size_t g = 0; g < report.group_names.size(); ++g) {
        if (report.per_group_ba[g].status == BaStatus::Defined)
            per_group[report.group_names[g]] = report.per_group_ba[g].value;
        else
            per_group[report.group_names[g]] = nullptr;
    }
    doc["per_group_ba"] = per_group;
    doc["avg_ba"] = report.avg_ba;
    doc["max_diff"] = report.max_diff;
    doc["hamming"] = report.hamming;
    doc["macro_precision"] = report.macro_precision;
    doc["macro_recall"] = report.macro_recall;
    doc["macro_f1"] = report.macro_f1;

    ordered_json matrix = ordered_json::array();
    for (std::size_t i = 0; i < report.ba_diff.rows(); ++i)
        for (std::size_t j = 0; j < report.ba_diff.cols(); ++j) {
            const double v = report.ba_diff(i, j);
            if (std::isnan(v))
                matrix.push_back(nullptr);
            else
                matrix.push_back(v);
        }
    doc["ba_diff_matrix"] = matrix;
    doc["group_order"] = report.group_names;

    ordered_json confusions = ordered_json::object();
    for (std::size_t g = 0; g < report.group_names.size(); ++g) {
        const auto& c = report.confusions[g];
        confusions[report.group_names[g]] = {
            {"tp", c.tp}, {"fn", c.fn}, {"fp", c.fp}, {"tn", c.tn}};
    }
    doc["confusion"] = confusions;
    doc["warnings"] = report.warnings;
    return doc.dump(indent);
}

std::string ba_diff_to_csv(const std::vector<std::string>& group_names, const Matrix& ba_diff) {
    if (ba_diff.rows() != group_names.size() || ba_diff.cols() != group_names.size())
        throw ShapeError("ba_diff_to_csv: matrix does not match group names");
    std::string out = "group";
    for (const auto& name : group_names) out += "," + name;
    out += "\n";
    for (std::size_t i = 0; i < ba_diff.rows(); ++i) {
        out += group_names[i];
        for (std::size_t j = 0; j < ba_diff.cols(); ++j) {
            const double v = ba_diff(i, j);
            out += ",";
            if (!std::isnan(v)) out += ordered_json(v).dump();
        }
        out += "\n";
    }
    return out;
}

} // namespace fairgap
