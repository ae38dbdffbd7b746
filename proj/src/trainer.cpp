#include "fairgap/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "fairgap/errors.hpp"
#include "fairgap/rng.hpp"

namespace fairgap {

using ordered_json = nlohmann::ordered_json;

void TrainConfig::validate() const {
    if (batch_size < 2) throw ConfigError("train: batch_size must be >= 2");
    if (early_stop_patience < 1) throw ConfigError("train: patience must be >= 1");
    if (!(early_stop_min_delta > 0.0)) throw ConfigError("train: min_delta must be positive");
    if (epochs_max < 1) throw ConfigError("train: epochs_max must be >= 1");
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("train: threshold must lie in (0,1)");
    if (!(learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw ConfigError("train: dropout rate must lie in [0,1)");
    for (std::size_t h : hidden_sizes)
        if (h == 0) throw ConfigError("train: hidden sizes must be positive");
}

std::size_t TrainConfig::resolved_steps_per_epoch(std::size_t n_train) const {
    if (steps_per_epoch > 0) return steps_per_epoch;
    return std::max<std::size_t>(1, (n_train + batch_size - 1) / batch_size);
}

std::pair<std::size_t, std::size_t> early_stop_epoch(std::span<const double> losses,
                                                     double min_delta, std::size_t patience) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t wait = 0;
    for (std::size_t e = 0; e < losses.size(); ++e) {
        if (losses[e] < best - min_delta) {
            best = losses[e];
            best_epoch = e + 1;
            wait = 0;
        } else if (++wait >= patience) {
            return {e + 1, best_epoch};
        }
    }
    return {losses.size(), best_epoch};
}

namespace {

std::vector<GroupWeights> resolve_weights(const Dataset& d_train, const TrainConfig& cfg) {
    if (!cfg.loss.class_weights.empty()) {
        cfg.loss.validate(d_train.n_groups());
        return cfg.loss.class_weights;
    }
    const auto computed = class_weights(d_train);
    std::vector<GroupWeights> weights(computed.size());
    for (std::size_t g = 0; g < computed.size(); ++g) {
        if (!computed[g].defined && !cfg.allow_degenerate_groups)
            throw ConfigError("train: group '" + d_train.group_names[g] +
                              "' lacks positives or negatives; pass explicit class weights or "
                              "allow_degenerate_groups to proceed");
        weights[g] = {computed[g].pos, computed[g].neg};
    }
    return weights;
}

} // namespace

std::pair<ModelParams, TrainTrace> train(const Dataset& d_train, const TrainConfig& cfg,
                                         const Dataset* d_eval) {
    d_train.validate();
    cfg.validate();

    LossConfig loss_cfg = cfg.loss;
    loss_cfg.class_weights = resolve_weights(d_train, cfg);
    loss_cfg.validate(d_train.n_groups());

    std::vector<std::size_t> layer_sizes;
    layer_sizes.push_back(d_train.feature_dim());
    for (std::size_t h : cfg.hidden_sizes) layer_sizes.push_back(h);
    layer_sizes.push_back(d_train.n_groups());

    ModelParams params = init_params(layer_sizes, mix_seed(cfg.seed, 0x696e), cfg.dropout_rate);
    OptimizerState state = init_adamax(params, cfg.learning_rate);

    const std::size_t n = d_train.n_samples();
    const std::size_t steps = cfg.resolved_steps_per_epoch(n);
    const Dataset& eval_ds = d_eval ? *d_eval : d_train;

    auto shuffle_rng = make_rng(cfg.seed, 0x7368);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::size_t cursor = 0;

    Matrix batch_x(cfg.batch_size, d_train.feature_dim());
    Matrix batch_y(cfg.batch_size, d_train.n_groups());

    TrainTrace trace;
    double best = std::numeric_limits<double>::infinity();
    std::size_t wait = 0;
    std::uint64_t global_step = 0;

    for (std::size_t epoch = 0; epoch < cfg.epochs_max; ++epoch) {
        double loss_sum = 0.0;
        for (std::size_t s = 0; s < steps; ++s) {
            for (std::size_t b = 0; b < cfg.batch_size; ++b) {
                if (cursor >= n) {
                    std::shuffle(order.begin(), order.end(), shuffle_rng);
                    cursor = 0;
                }
                const std::size_t src = order[cursor++];
                for (std::size_t c = 0; c < batch_x.cols(); ++c)
                    batch_x(b, c) = d_train.features(src, c);
                for (std::size_t g = 0; g < batch_y.cols(); ++g)
                    batch_y(b, g) = d_train.labels(src, g);
            }
            const std::uint64_t step_seed = mix_seed(cfg.seed, 0x64720000ULL + global_step);
            auto result = backward(params, batch_x, batch_y, loss_cfg, true, step_seed);
            loss_sum += result.loss;
            std::tie(params, state) = adamax_step(std::move(params), result.grads, std::move(state));
            ++global_step;
        }
        const double epoch_loss = loss_sum / static_cast<double>(steps);
        trace.epoch_losses.push_back(epoch_loss);
        trace.epoch_reports.push_back(evaluate(params, eval_ds, cfg.threshold));
        trace.epochs_run = epoch + 1;

        if (epoch_loss < best - cfg.early_stop_min_delta) {
            best = epoch_loss;
            trace.converged_epoch = epoch + 1;
            wait = 0;
        } else if (++wait >= cfg.early_stop_patience) {
            trace.stopped_early = true;
            break;
        }
    }
    return {std::move(params), std::move(trace)};
}

MetricsReport evaluate(const ModelParams& params, const Dataset& d_test, double threshold) {
    d_test.validate();
    if (d_test.feature_dim() != params.input_dim())
        throw ShapeError("evaluate: dataset feature width does not match model input");
    const Matrix probs = forward(params, d_test.features, false, 0);
    return build_report(d_test.labels, probs, threshold, d_test.group_names);
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    if (values.empty()) return out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - out.mean) * (v - out.mean);
        out.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
    }
    return out;
}

namespace {

RunStats run_stats_from_report(const MetricsReport& report, std::uint64_t seed,
                               std::size_t epochs_run) {
    RunStats stats;
    stats.seed = seed;
    stats.avg_ba = report.avg_ba;
    stats.max_diff = report.max_diff;
    stats.hamming = report.hamming;
    stats.macro_precision = report.macro_precision;
    stats.macro_recall = report.macro_recall;
    stats.macro_f1 = report.macro_f1;
    stats.epochs_run = epochs_run;
    for (const auto& ba : report.per_group_ba)
        stats.per_group_ba.push_back(ba.status == BaStatus::Defined
                                         ? ba.value
                                         : std::numeric_limits<double>::quiet_NaN());
    return stats;
}

// Fans the (config, seed) grid out over `jobs` threads; every run writes its
// own slot, so the thread count never changes the report.
std::vector<RunStats> run_grid(const Dataset& d_train, const Dataset& d_test,
                               const std::vector<TrainConfig>& run_configs, std::size_t jobs) {
    std::vector<RunStats> results(run_configs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= run_configs.size()) return;
            const auto& cfg = run_configs[idx];
            auto [params, trace] = train(d_train, cfg, nullptr);
            const auto report = evaluate(params, d_test, cfg.threshold);
            results[idx] = run_stats_from_report(report, cfg.seed, trace.epochs_run);
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, run_configs.size()));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return results;
}

void summarize(LossSummary& summary) {
    std::vector<double> avg_bas, max_diffs, hammings, precisions, recalls, f1s;
    for (const auto& run : summary.runs) {
        avg_bas.push_back(run.avg_ba);
        max_diffs.push_back(run.max_diff);
        hammings.push_back(run.hamming);
        precisions.push_back(run.macro_precision);
        recalls.push_back(run.macro_recall);
        f1s.push_back(run.macro_f1);
    }
    summary.avg_ba = mean_std(avg_bas);
    summary.max_diff = mean_std(max_diffs);
    summary.hamming = mean_std(hammings);
    summary.macro_precision = mean_std(precisions);
    summary.macro_recall = mean_std(recalls);
    summary.macro_f1 = mean_std(f1s);
    if (!summary.runs.empty()) {
        const std::size_t g_count = summary.runs.front().per_group_ba.size();
        summary.mean_per_group_ba.assign(g_count, 0.0);
        for (std::size_t g = 0; g < g_count; ++g) {
            double sum = 0.0;
            for (const auto& run : summary.runs) sum += run.per_group_ba[g];
            summary.mean_per_group_ba[g] = sum / static_cast<double>(summary.runs.size());
        }
    }
}

} // namespace

ComparisonReport compare_losses(const Dataset& d, const SplitIndices& split,
                                const std::vector<std::pair<std::string, TrainConfig>>& configs,
                                std::size_t n_seeds, std::size_t jobs) {
    if (configs.size() < 2) throw ConfigError("compare_losses: at least two configs required");
    if (n_seeds < 2) throw ConfigError("compare_losses: at least two seeds required");

    const Dataset d_train = d.subset(split.train_indices);
    const Dataset d_test = d.subset(split.test_indices);

    std::vector<TrainConfig> run_configs;
    for (const auto& [label, cfg] : configs) {
        for (std::size_t k = 0; k < n_seeds; ++k) {
            TrainConfig run_cfg = cfg;
            run_cfg.seed = cfg.seed + k; // paired across configs
            run_configs.push_back(run_cfg);
        }
    }
    const auto results = run_grid(d_train, d_test, run_configs, jobs);

    ComparisonReport report;
    report.group_names = d.group_names;
    report.n_seeds = n_seeds;
    std::size_t slot = 0;
    for (const auto& [label, cfg] : configs) {
        LossSummary summary;
        summary.label = label;
        summary.loss = cfg.loss;
        for (std::size_t k = 0; k < n_seeds; ++k) summary.runs.push_back(results[slot++]);
        summarize(summary);
        report.losses.push_back(std::move(summary));
    }

    report.best_ba_tally.assign(configs.size(), 0);
    for (std::size_t g = 0; g < d.n_groups(); ++g) {
        std::size_t best_loss = 0;
        double best_value = -1.0;
        bool usable = true;
        for (std::size_t c = 0; c < report.losses.size(); ++c) {
            const double v = report.losses[c].mean_per_group_ba[g];
            if (std::isnan(v)) usable = false;
            if (v > best_value) {
                best_value = v;
                best_loss = c;
            }
        }
        if (usable) ++report.best_ba_tally[best_loss];
    }
    return report;
}

SweepReport lambda_sweep(const Dataset& d, const SplitIndices& split, const TrainConfig& base_cfg,
                         std::vector<double> lambdas, std::size_t n_seeds, std::size_t jobs) {
    if (lambdas.empty()) throw ConfigError("lambda_sweep: lambdas must be non-empty");
    for (double l : lambdas)
        if (!(l >= 0.0)) throw ConfigError("lambda_sweep: lambdas must be non-negative");
    std::sort(lambdas.begin(), lambdas.end());

    const Dataset d_train = d.subset(split.train_indices);
    const Dataset d_test = d.subset(split.test_indices);

    std::vector<TrainConfig> run_configs;
    for (double lambda : lambdas) {
        for (std::size_t k = 0; k < n_seeds; ++k) {
            TrainConfig cfg = base_cfg;
            cfg.loss.lambda = lambda;
            cfg.seed = base_cfg.seed + k;
            run_configs.push_back(cfg);
        }
    }
    const auto results = run_grid(d_train, d_test, run_configs, jobs);

    SweepReport report;
    report.group_names = d.group_names;
    report.kind = base_cfg.loss.kind;
    report.n_seeds = n_seeds;
    std::size_t slot = 0;
    for (double lambda : lambdas) {
        SweepRow row;
        row.lambda = lambda;
        std::vector<double> avg_bas, max_diffs;
        for (std::size_t k = 0; k < n_seeds; ++k) {
            row.runs.push_back(results[slot++]);
            avg_bas.push_back(row.runs.back().avg_ba);
            max_diffs.push_back(row.runs.back().max_diff);
        }
        row.avg_ba = mean_std(avg_bas);
        row.max_diff = mean_std(max_diffs);
        report.rows.push_back(std::move(row));
    }
    return report;
}

namespace {

ordered_json run_stats_json(const RunStats& run) {
    ordered_json j;
    j["seed"] = run.seed;
    j["avg_ba"] = run.avg_ba;
    j["max_diff"] = run.max_diff;
    j["hamming"] = run.hamming;
    j["macro_precision"] = run.macro_precision;
    j["macro_recall"] = run.macro_recall;
    j["macro_f1"] = run.macro_f1;
    j["epochs_run"] = run.epochs_run;
    ordered_json bas = ordered_json::array();
    for (double v : run.per_group_ba) {
        if (std::isnan(v))
            bas.push_back(nullptr);
        else
            bas.push_back(v);
    }
    j["per_group_ba"] = bas;
    return j;
}

ordered_json mean_std_json(const MeanStd& ms) {
    return ordered_json{{"mean", ms.mean}, {"std", ms.stddev}};
}

ordered_json loss_config_json(const LossConfig& cfg) {
    ordered_json j;
    j["kind"] = loss_kind_name(cfg.kind);
    j["lambda"] = cfg.lambda;
    return j;
}

} // namespace

std::string trace_to_json(const TrainTrace& trace, int indent) {
    ordered_json doc;
    doc["epochs_run"] = trace.epochs_run;
    doc["stopped_early"] = trace.stopped_early;
    doc["converged_epoch"] = trace.converged_epoch;
    doc["epoch_losses"] = trace.epoch_losses;
    ordered_json metrics = ordered_json::array();
    for (const auto& report : trace.epoch_reports) {
        metrics.push_back(ordered_json{{"avg_ba", report.avg_ba},
                                       {"max_diff", report.max_diff},
                                       {"hamming", report.hamming}});
    }
    doc["epoch_metrics"] = metrics;
    return doc.dump(indent);
}

std::string comparison_to_json(const ComparisonReport& report, int indent) {
    ordered_json doc;
    doc["group_order"] = report.group_names;
    doc["n_seeds"] = report.n_seeds;
    ordered_json losses = ordered_json::array();
    for (std::size_t c = 0; c < report.losses.size(); ++c) {
        const auto& summary = report.losses[c];
        ordered_json j;
        j["label"] = summary.label;
        j["loss"] = loss_config_json(summary.loss);
        j["avg_ba"] = mean_std_json(summary.avg_ba);
        j["max_diff"] = mean_std_json(summary.max_diff);
        j["hamming"] = mean_std_json(summary.hamming);
        j["macro_precision"] = mean_std_json(summary.macro_precision);
        j["macro_recall"] = mean_std_json(summary.macro_recall);
        j["macro_f1"] = mean_std_json(summary.macro_f1);
        ordered_json mean_bas = ordered_json::object();
        for (std::size_t g = 0; g < report.group_names.size(); ++g) {
            const double v = summary.mean_per_group_ba[g];
            if (std::isnan(v))
                mean_bas[report.group_names[g]] = nullptr;
            else
                mean_bas[report.group_names[g]] = v;
        }
        j["mean_per_group_ba"] = mean_bas;
        j["best_ba_groups"] = report.best_ba_tally[c];
        ordered_json runs = ordered_json::array();
        for (const auto& run : summary.runs) runs.push_back(run_stats_json(run));
        j["runs"] = runs;
        losses.push_back(std::move(j));
    }
    doc["losses"] = losses;
    return doc.dump(indent);
}

std::string sweep_to_json(const SweepReport& report, int indent) {
    ordered_json doc;
    doc["group_order"] = report.group_names;
    doc["loss_kind"] = loss_kind_name(report.kind);
    doc["n_seeds"] = report.n_seeds;
    ordered_json rows = ordered_json::array();
    for (const auto& row : report.rows) {
        ordered_json j;
        j["lambda"] = row.lambda;
        j["avg_ba"] = mean_std_json(row.avg_ba);
        j["max_diff"] = mean_std_json(row.max_diff);
        ordered_json runs = ordered_json::array();
        for (const auto& run : row.runs) runs.push_back(run_stats_json(run));
        j["runs"] = runs;
        rows.push_back(std::move(j));
    }
    doc["rows"] = rows;
    return doc.dump(indent);
}

std::string params_to_json(const ModelParams& params, int indent) {
    ordered_json doc;
    doc["layer_sizes"] = params.layer_sizes;
    doc["dropout_rate"] = params.dropout_rate;
    ordered_json weights = ordered_json::array();
    for (const auto& w : params.layer_weights) {
        ordered_json rows = ordered_json::array();
        for (std::size_t i = 0; i < w.rows(); ++i) {
            ordered_json row = ordered_json::array();
            for (std::size_t j = 0; j < w.cols(); ++j) row.push_back(w(i, j));
            rows.push_back(std::move(row));
        }
        weights.push_back(std::move(rows));
    }
    doc["layer_weights"] = weights;
    ordered_json biases = ordered_json::array();
    for (const auto& b : params.layer_biases) biases.push_back(b);
    doc["layer_biases"] = biases;
    return doc.dump(indent);
}

ModelParams params_from_json(const std::string& text) {
    const auto doc = nlohmann::json::parse(text);
    ModelParams params;
    params.layer_sizes = doc.at("layer_sizes").get<std::vector<std::size_t>>();
    params.dropout_rate = doc.at("dropout_rate").get<double>();
    for (const auto& w : doc.at("layer_weights")) {
        std::vector<std::vector<double>> rows;
        for (const auto& row : w) rows.push_back(row.get<std::vector<double>>());
        params.layer_weights.push_back(Matrix::from_rows(rows));
    }
    for (const auto& b : doc.at("layer_biases"))
        params.layer_biases.push_back(b.get<std::vector<double>>());
    params.validate();
    return params;
}

} // namespace fairgap
