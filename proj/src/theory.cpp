#include "fairgap/theory.hpp"

#include <cmath>

#include "fairgap/errors.hpp"

namespace fairgap {

namespace {

void check_counts(const GroupCounts& c, const char* who) {
    if (c.positives < 1 || c.negatives < 1)
        throw ConfigError(std::string(who) + ": positive and negative counts must be >= 1");
}

double acc_at(const GroupCounts& c, double tpr, double fpr) {
    return (tpr * static_cast<double>(c.positives) +
            static_cast<double>(c.negatives) * (1.0 - fpr)) /
           static_cast<double>(c.positives + c.negatives);
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

} // namespace

double acc_from_rates(const GroupRates& r) {
    if (r.positives < 1 || r.negatives < 1)
        throw ConfigError("acc_from_rates: counts must be >= 1");
    if (r.tpr < 0.0 || r.tpr > 1.0 || r.fpr < 0.0 || r.fpr > 1.0)
        throw ConfigError("acc_from_rates: rates must lie in [0,1]");
    return acc_at({r.positives, r.negatives}, r.tpr, r.fpr);
}

std::string feasibility_class_name(FeasibilityClass c) {
    switch (c) {
        case FeasibilityClass::AllFeasible: return "ALL_FEASIBLE";
        case FeasibilityClass::OnlyRandomLine: return "ONLY_RANDOM_LINE";
        case FeasibilityClass::Empty: return "EMPTY";
    }
    throw ConfigError("unknown feasibility class");
}

FeasibilityScan eo_ap_scan(GroupCounts a, GroupCounts b, std::size_t grid_resolution,
                           double epsilon, bool exclude_random_line) {
    check_counts(a, "eo_ap_scan");
    check_counts(b, "eo_ap_scan");
    if (grid_resolution < 11) throw ConfigError("eo_ap_scan: grid resolution must be >= 11");
    if (!(epsilon > 0.0)) throw ConfigError("eo_ap_scan: epsilon must be positive");

    FeasibilityScan scan;
    scan.grid_resolution = grid_resolution;
    scan.epsilon = epsilon;

    const double step = 1.0 / static_cast<double>(grid_resolution - 1);
    const double line_tol = 0.5 * step;
    bool all_feasible = true;
    bool off_line_feasible = false;

    for (std::size_t ti = 0; ti < grid_resolution; ++ti) {
        const double tpr = static_cast<double>(ti) * step;
        for (std::size_t fi = 0; fi < grid_resolution; ++fi) {
            const double fpr = static_cast<double>(fi) * step;
            const bool on_line = std::abs(tpr + fpr - 1.0) <= line_tol;
            if (exclude_random_line && on_line) continue;
            ++scan.total_points;
            const double gap = std::abs(acc_at(a, tpr, fpr) - acc_at(b, tpr, fpr));
            if (gap <= epsilon) {
                scan.feasible_points.emplace_back(tpr, fpr);
                if (!on_line) off_line_feasible = true;
            } else {
                all_feasible = false;
            }
        }
    }

    if (scan.feasible_points.empty())
        scan.classification = FeasibilityClass::Empty;
    else if (all_feasible)
        scan.classification = FeasibilityClass::AllFeasible;
    else if (!off_line_feasible)
        scan.classification = FeasibilityClass::OnlyRandomLine;
    else
        // Feasible points both on and off the line without covering the grid
        // do not occur at exact-line epsilons; fold into the nearest class.
        scan.classification = FeasibilityClass::OnlyRandomLine;
    return scan;
}

std::pair<double, double> fpned(std::span<const double> group_fprs,
                                std::span<const double> group_fnrs, double pooled_fpr,
                                double pooled_fnr) {
    if (group_fprs.size() != group_fnrs.size() || group_fprs.empty())
        throw ShapeError("fpned: rate vectors must be non-empty and equal length");
    double fped = 0.0;
    double fned = 0.0;
    for (double r : group_fprs) fped += std::abs(pooled_fpr - r);
    for (double r : group_fnrs) fned += std::abs(pooled_fnr - r);
    return {fped, fned};
}

bool fpned_ap_consistency(GroupCounts a, GroupCounts b) {
    check_counts(a, "fpned_ap_consistency");
    check_counts(b, "fpned_ap_consistency");
    // 128-bit products keep the cross-multiplication exact for any counts.
    return static_cast<__int128>(a.positives) * b.negatives ==
           static_cast<__int128>(b.positives) * a.negatives;
}

std::vector<ScenarioRow> table2_scenario() {
    std::vector<ScenarioRow> rows;

    // Equalized-odds case: shared TPR=0.80, FPR=0.30; counts follow from the
    // rates applied to each group's population.
    auto eo_row = [](const std::string& group, std::int64_t p, std::int64_t n, double acc_ref) {
        constexpr double kTpr = 0.80;
        constexpr double kFpr = 0.30;
        ScenarioRow row;
        row.scenario = "I-equalized-odds";
        row.group = group;
        row.positives = p;
        row.negatives = n;
        row.tp = static_cast<std::int64_t>(std::llround(kTpr * static_cast<double>(p)));
        row.fn = p - row.tp;
        row.fp = static_cast<std::int64_t>(std::llround(kFpr * static_cast<double>(n)));
        row.tn = n - row.fp;
        row.tpr = static_cast<double>(row.tp) / static_cast<double>(p);
        row.fpr = static_cast<double>(row.fp) / static_cast<double>(n);
        row.acc = static_cast<double>(row.tp + row.tn) / static_cast<double>(p + n);
        row.acc_ref = acc_ref;
        row.tpr_ref = kTpr;
        row.fpr_ref = kFpr;
        return row;
    };
    rows.push_back(eo_row("Group-A", 100, 100, 0.75));
    rows.push_back(eo_row("Group-B", 20, 180, 0.71));

    // Accuracy-parity case: counts are fixed; rates follow from the counts.
    auto ap_row = [](const std::string& group, std::int64_t p, std::int64_t n, std::int64_t tp,
                     std::int64_t fp, double acc_ref, double tpr_ref, double fpr_ref) {
        ScenarioRow row;
        row.scenario = "II-accuracy-parity";
        row.group = group;
        row.positives = p;
        row.negatives = n;
        row.tp = tp;
        row.fn = p - tp;
        row.fp = fp;
        row.tn = n - fp;
        row.tpr = static_cast<double>(tp) / static_cast<double>(p);
        row.fpr = static_cast<double>(fp) / static_cast<double>(n);
        row.acc = static_cast<double>(row.tp + row.tn) / static_cast<double>(p + n);
        row.acc_ref = acc_ref;
        row.tpr_ref = tpr_ref;
        row.fpr_ref = fpr_ref;
        return row;
    };
    rows.push_back(ap_row("Group-A", 100, 100, 77, 23, 0.77, 0.77, 0.23));
    rows.push_back(ap_row("Group-B", 20, 180, 15, 41, 0.77, 0.75, 0.23));
    return rows;
}

bool table2_matches_reference(const std::vector<ScenarioRow>& rows) {
    for (const auto& row : rows) {
        if (std::abs(round2(row.acc) - row.acc_ref) > 1e-12) return false;
        if (std::abs(round2(row.tpr) - row.tpr_ref) > 1e-12) return false;
        if (std::abs(round2(row.fpr) - row.fpr_ref) > 1e-12) return false;
    }
    return true;
}

} // namespace fairgap
