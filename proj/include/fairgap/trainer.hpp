#ifndef FAIRGAP_TRAINER_HPP
#define FAIRGAP_TRAINER_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fairgap/data.hpp"
#include "fairgap/losses.hpp"
#include "fairgap/metrics.hpp"
#include "fairgap/numerics.hpp"

namespace fairgap {

struct TrainConfig {
    LossConfig loss;
    std::vector<std::size_t> hidden_sizes = {64, 32, 16};
    double dropout_rate = 0.1;
    double learning_rate = 1e-3;
    std::size_t epochs_max = 40;
    std::size_t steps_per_epoch = 0; // 0: one pass over the training set
    std::size_t batch_size = 64;
    double early_stop_min_delta = 1e-4;
    std::size_t early_stop_patience = 5;
    double threshold = 0.5;
    std::uint64_t seed = 0;
    bool allow_degenerate_groups = false;

    void validate() const;
    std::size_t resolved_steps_per_epoch(std::size_t n_train) const;
};

struct TrainTrace {
    std::vector<double> epoch_losses;
    std::vector<MetricsReport> epoch_reports;
    std::size_t epochs_run = 0;
    bool stopped_early = false;
    std::size_t converged_epoch = 0; // 1-based epoch of the best monitored loss
};

// Pure early-stopping rule: with best-so-far tracking and the given
// min_delta/patience, returns the 1-based epoch after which training stops
// (losses.size() if it never triggers) and the epoch of the last improvement.
std::pair<std::size_t, std::size_t> early_stop_epoch(std::span<const double> losses,
                                                     double min_delta, std::size_t patience);

// Shuffled mini-batch training with AdaMax; class weights are computed from
// d_train unless cfg.loss.class_weights is already populated. Per-epoch
// reports are evaluated on d_eval when given, otherwise on d_train.
std::pair<ModelParams, TrainTrace> train(const Dataset& d_train, const TrainConfig& cfg,
                                         const Dataset* d_eval = nullptr);

MetricsReport evaluate(const ModelParams& params, const Dataset& d_test, double threshold);

struct RunStats {
    std::uint64_t seed = 0;
    double avg_ba = 0.0;
    double max_diff = 0.0;
    double hamming = 0.0;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    std::size_t epochs_run = 0;
    std::vector<double> per_group_ba;
};

struct MeanStd {
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation (n-1)
};

MeanStd mean_std(std::span<const double> values);

struct LossSummary {
    std::string label;
    LossConfig loss;
    std::vector<RunStats> runs;
    MeanStd avg_ba;
    MeanStd max_diff;
    MeanStd hamming;
    MeanStd macro_precision;
    MeanStd macro_recall;
    MeanStd macro_f1;
    std::vector<double> mean_per_group_ba;
};

struct ComparisonReport {
    std::vector<std::string> group_names;
    std::vector<LossSummary> losses;
    std::vector<std::size_t> best_ba_tally; // per loss: groups where it has the best mean BA
    std::size_t n_seeds = 0;
};

// Trains every config for n_seeds paired seeds (base seed + k) on the train
// side of the split and evaluates on the test side. jobs > 1 fans runs out
// across threads; results are keyed by (config, seed) so the thread count
// never changes them.
ComparisonReport compare_losses(const Dataset& d, const SplitIndices& split,
                                const std::vector<std::pair<std::string, TrainConfig>>& configs,
                                std::size_t n_seeds, std::size_t jobs = 1);

struct SweepRow {
    double lambda = 0.0;
    MeanStd avg_ba;
    MeanStd max_diff;
    std::vector<RunStats> runs;
};

struct SweepReport {
    std::vector<std::string> group_names;
    LossKind kind = LossKind::GapMulti;
    std::vector<SweepRow> rows; // ascending lambda
    std::size_t n_seeds = 0;
};

SweepReport lambda_sweep(const Dataset& d, const SplitIndices& split, const TrainConfig& base_cfg,
                         std::vector<double> lambdas, std::size_t n_seeds, std::size_t jobs = 1);

std::string trace_to_json(const TrainTrace& trace, int indent = 2);
std::string comparison_to_json(const ComparisonReport& report, int indent = 2);
std::string sweep_to_json(const SweepReport& report, int indent = 2);

std::string params_to_json(const ModelParams& params, int indent = 2);
ModelParams params_from_json(const std::string& text);

} // namespace fairgap

#endif // FAIRGAP_TRAINER_HPP
