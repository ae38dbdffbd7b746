#ifndef FAIRGAP_THEORY_HPP
#define FAIRGAP_THEORY_HPP

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fairgap {

struct GroupCounts {
    std::int64_t positives = 0;
    std::int64_t negatives = 0;
};

struct GroupRates {
    std::int64_t positives = 1;
    std::int64_t negatives = 1;
    double tpr = 0.0;
    double fpr = 0.0;
};

// (tpr*P + N*(1-fpr)) / (P+N)
double acc_from_rates(const GroupRates& r);

enum class FeasibilityClass { AllFeasible, OnlyRandomLine, Empty };

std::string feasibility_class_name(FeasibilityClass c);

struct FeasibilityScan {
    std::size_t grid_resolution = 0;
    double epsilon = 0.0;
    std::size_t total_points = 0;
    std::vector<std::pair<double, double>> feasible_points; // (tpr, fpr)
    FeasibilityClass classification = FeasibilityClass::Empty;
};

// Scans the shared (tpr, fpr) grid -- equalized odds holds by construction --
// and marks points where |Acc_A - Acc_B| <= epsilon. With exclude_random_line
// the points within half a grid step of tpr+fpr=1 are dropped before
// classification. Classification is derived from the scanned set alone; the
// exact base-rate test lives in fpned_ap_consistency.
FeasibilityScan eo_ap_scan(GroupCounts a, GroupCounts b, std::size_t grid_resolution,
                           double epsilon, bool exclude_random_line = false);

// fped = sum_g |pooled_fpr - fpr_g|, fned analogous.
std::pair<double, double> fpned(std::span<const double> group_fprs,
                                std::span<const double> group_fnrs, double pooled_fpr,
                                double pooled_fnr);

// Exact integer cross-multiplication P_A*N_B == P_B*N_A: true iff groups with
// equal error rates can also have equal accuracy.
bool fpned_ap_consistency(GroupCounts a, GroupCounts b);

struct ScenarioRow {
    std::string scenario;
    std::string group;
    std::int64_t positives = 0;
    std::int64_t negatives = 0;
    std::int64_t tp = 0;
    std::int64_t fn = 0;
    std::int64_t fp = 0;
    std::int64_t tn = 0;
    double acc = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
    // Two-decimal reference values the row must reproduce after rounding.
    double acc_ref = 0.0;
    double tpr_ref = 0.0;
    double fpr_ref = 0.0;
};

// The two-group worked example: an equalized-odds-optimized case (shared
// TPR=0.80, FPR=0.30) and an accuracy-parity-optimized case (Acc=0.77 for
// both groups), four rows total.
std::vector<ScenarioRow> table2_scenario();

// True iff every row's acc/tpr/fpr matches its two-decimal reference.
bool table2_matches_reference(const std::vector<ScenarioRow>& rows);

} // namespace fairgap

#endif // FAIRGAP_THEORY_HPP
