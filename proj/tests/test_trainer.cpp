#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fairgap/data.hpp"
#include "fairgap/errors.hpp"
#include "fairgap/trainer.hpp"

using namespace fairgap;

namespace {

TrainConfig quick_config(LossKind kind, double lambda, std::uint64_t seed) {
    TrainConfig cfg;
    cfg.loss.kind = kind;
    cfg.loss.lambda = lambda;
    cfg.hidden_sizes = {16};
    cfg.dropout_rate = 0.1;
    cfg.epochs_max = 8;
    cfg.batch_size = 32;
    cfg.seed = seed;
    return cfg;
}

Dataset noise_dataset(std::uint64_t seed, std::size_t n = 3000) {
    SyntheticSpec spec;
    spec.n_samples = n;
    spec.feature_dim = 4;
    spec.base_rates = {0.5, 0.5};
    spec.separability = 0.0;
    spec.noise_scale = 1.0;
    spec.seed = seed;
    return generate(spec);
}

// Two groups whose labels a linear threshold on the features recovers
// exactly, up to a small jitter that keeps the columns non-constant.
Dataset separable_dataset(std::uint64_t seed, std::size_t n = 1200) {
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution label(0.5);
    std::normal_distribution<double> jitter(0.0, 0.05);
    Dataset d;
    d.features = Matrix(n, 2);
    d.labels = Matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t g = 0; g < 2; ++g) {
            const bool positive = label(rng);
            d.labels(i, g) = positive ? 1.0 : 0.0;
            d.features(i, g) = (positive ? 1.0 : -1.0) + jitter(rng);
        }
    }
    d.group_names = {"left", "right"};
    return d;
}

} // namespace

TEST_CASE("early_stop_epoch") {
    SUBCASE("constant stream stops after patience + 1 epochs") {
        const std::vector<double> losses(20, 1.0);
        const auto [stop, best] = early_stop_epoch(losses, 1e-4, 5);
        CHECK(stop == 6);
        CHECK(best == 1);
    }
    SUBCASE("steadily improving stream never stops") {
        std::vector<double> losses;
        for (int i = 0; i < 15; ++i) losses.push_back(1.0 - 0.01 * i);
        const auto [stop, best] = early_stop_epoch(losses, 1e-4, 3);
        CHECK(stop == 15);
        CHECK(best == 15);
    }
    SUBCASE("improvement below min_delta does not reset patience") {
        // every value stays within min_delta of the first best
        const std::vector<double> losses = {1.0, 0.99995, 0.99993, 0.99992};
        const auto [stop, best] = early_stop_epoch(losses, 1e-4, 3);
        CHECK(stop == 4);
        CHECK(best == 1);
    }
    SUBCASE("late improvement resets the counter") {
        const std::vector<double> losses = {1.0, 1.0, 0.5, 0.5, 0.5, 0.5};
        const auto [stop, best] = early_stop_epoch(losses, 1e-4, 3);
        CHECK(stop == 6);
        CHECK(best == 3);
    }
}

TEST_CASE("train") {
    SUBCASE("config validation") {
        auto cfg = quick_config(LossKind::Oe, 0.0, 1);
        cfg.batch_size = 1;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
        cfg = quick_config(LossKind::Oe, 0.0, 1);
        cfg.early_stop_min_delta = 0.0;
        CHECK_THROWS_AS(cfg.validate(), ConfigError);
    }
    SUBCASE("deterministic per seed") {
        const auto d = separable_dataset(5, 400);
        auto cfg = quick_config(LossKind::GapMulti, 1.0, 9);
        cfg.epochs_max = 3;
        const auto [p1, t1] = train(d, cfg);
        const auto [p2, t2] = train(d, cfg);
        CHECK(t1.epoch_losses == t2.epoch_losses);
        CHECK(p1.layer_weights[0] == p2.layer_weights[0]);
        CHECK(p1.layer_weights[1] == p2.layer_weights[1]);
    }
    SUBCASE("gap_multi at lambda zero trains identically to oe") {
        const auto d = separable_dataset(6, 400);
        auto gap_cfg = quick_config(LossKind::GapMulti, 0.0, 4);
        gap_cfg.epochs_max = 3;
        auto oe_cfg = gap_cfg;
        oe_cfg.loss.kind = LossKind::Oe;
        const auto [pg, tg] = train(d, gap_cfg);
        const auto [po, to] = train(d, oe_cfg);
        CHECK(tg.epoch_losses == to.epoch_losses);
        CHECK(pg.layer_weights[0] == po.layer_weights[0]);
    }
    SUBCASE("trace is consistent with the pure early-stop rule") {
        const auto d = separable_dataset(7, 400);
        auto cfg = quick_config(LossKind::Oe, 0.0, 2);
        cfg.epochs_max = 30;
        const auto [params, trace] = train(d, cfg);
        const auto [stop, best] = early_stop_epoch(trace.epoch_losses, cfg.early_stop_min_delta,
                                                   cfg.early_stop_patience);
        CHECK(trace.epochs_run == stop);
        CHECK(trace.converged_epoch == best);
        CHECK(trace.epoch_losses.size() == trace.epochs_run);
        CHECK(trace.epoch_reports.size() == trace.epochs_run);
        CHECK(trace.converged_epoch <= trace.epochs_run);
    }
    SUBCASE("no learnable signal lands at chance-level balanced accuracy") {
        const auto d = noise_dataset(11);
        auto cfg = quick_config(LossKind::Oe, 0.0, 3);
        cfg.epochs_max = 5;
        const auto [params, trace] = train(d, cfg);
        const auto report = evaluate(params, d, 0.5);
        for (const auto& ba : report.per_group_ba) {
            REQUIRE(ba.status == BaStatus::Defined);
            CHECK(ba.value > 0.45);
            CHECK(ba.value < 0.55);
        }
    }
    SUBCASE("separable data is learned quickly") {
        const auto d = separable_dataset(8);
        auto cfg = quick_config(LossKind::Oe, 0.0, 5);
        cfg.epochs_max = 30;
        cfg.dropout_rate = 0.0;
        const auto [params, trace] = train(d, cfg);
        const auto report = evaluate(params, d, 0.5);
        CHECK(trace.epochs_run <= 30);
        CHECK(report.hamming < 0.05);
    }
    SUBCASE("degenerate group is refused without an override") {
        Dataset d;
        d.features = Matrix(64, 2, 0.5);
        d.labels = Matrix(64, 2, 0.0);
        for (int i = 0; i < 64; ++i) d.labels(i, 0) = 1.0; // group 1 never positive
        for (int i = 0; i < 32; ++i) d.labels(i, 1) = 0.0;
        d.group_names = {"full", "empty"};
        auto cfg = quick_config(LossKind::Oe, 0.0, 1);
        cfg.epochs_max = 1;
        CHECK_THROWS_AS(train(d, cfg), ConfigError);
    }
}

TEST_CASE("evaluate") {
    SUBCASE("zero-weight network predicts positive everywhere under the tie rule") {
        ModelParams params;
        params.layer_sizes = {3, 2, 2};
        params.layer_weights = {Matrix(3, 2, 0.0), Matrix(2, 2, 0.0)};
        params.layer_biases = {std::vector<double>(2, 0.0)};
        Dataset d;
        d.features = Matrix(10, 3, 0.7);
        d.labels = Matrix(10, 2, 0.0);
        for (int i = 0; i < 5; ++i) d.labels(i, 0) = 1.0;
        for (int i = 0; i < 3; ++i) d.labels(i, 1) = 1.0;
        d.group_names = {"a", "b"};
        const auto report = evaluate(params, d, 0.5);
        for (std::size_t g = 0; g < 2; ++g) {
            CHECK(report.confusions[g].fn == 0);
            CHECK(report.confusions[g].tn == 0);
            CHECK(report.per_group_ba[g].value == 0.5);
        }
    }
    SUBCASE("pure function") {
        const auto d = separable_dataset(9, 200);
        auto cfg = quick_config(LossKind::Oe, 0.0, 7);
        cfg.epochs_max = 2;
        const auto [params, trace] = train(d, cfg);
        const auto a = evaluate(params, d, 0.5);
        const auto b = evaluate(params, d, 0.5);
        CHECK(a.avg_ba == b.avg_ba);
        CHECK(a.hamming == b.hamming);
        CHECK(a.ba_diff == b.ba_diff);
    }
    SUBCASE("hand-built four-sample dataset against hand-set parameters") {
        // Single linear layer to two sigmoid outputs; weights picked so the
        // confusion counts are computable by hand.
        ModelParams params;
        params.layer_sizes = {2, 2};
        params.layer_weights = {Matrix(2, 2, 0.0)};
        params.layer_weights[0](0, 0) = 2.0;  // output 0 follows feature 0
        params.layer_weights[0](1, 1) = -2.0; // output 1 inverts feature 1
        Dataset d;
        d.features = Matrix(4, 2);
        d.labels = Matrix(4, 2);
        const double f[4][2] = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
        const double y[4][2] = {{1, 0}, {1, 1}, {0, 0}, {1, 1}};
        for (int i = 0; i < 4; ++i) {
            d.features(i, 0) = f[i][0];
            d.features(i, 1) = f[i][1];
            d.labels(i, 0) = y[i][0];
            d.labels(i, 1) = y[i][1];
        }
        d.group_names = {"g0", "g1"};
        // predictions: sigmoid(2*f0) -> pos iff f0 > 0; sigmoid(-2*f1) -> pos iff f1 < 0
        // group 0: predictions [1,1,0,0], labels [1,1,0,1] -> tp=2 fn=1 fp=0 tn=1
        // group 1: predictions [0,1,0,1], labels [0,1,0,1] -> tp=2 fn=0 fp=0 tn=2
        const auto report = evaluate(params, d, 0.5);
        CHECK(report.confusions[0].tp == 2);
        CHECK(report.confusions[0].fn == 1);
        CHECK(report.confusions[0].fp == 0);
        CHECK(report.confusions[0].tn == 1);
        CHECK(report.confusions[1].tp == 2);
        CHECK(report.confusions[1].fn == 0);
        CHECK(report.confusions[1].fp == 0);
        CHECK(report.confusions[1].tn == 2);
        CHECK(report.per_group_ba[0].value == doctest::Approx((2.0 / 3.0 + 1.0) / 2.0).epsilon(1e-14));
        CHECK(report.per_group_ba[1].value == 1.0);
    }
}

TEST_CASE("compare_losses") {
    const auto d = separable_dataset(12, 600);
    const auto split = stratified_split(d, 0.25, 3);

    SUBCASE("duplicated configs give identical statistics") {
        auto cfg = quick_config(LossKind::Oe, 0.0, 6);
        cfg.epochs_max = 2;
        const std::vector<std::pair<std::string, TrainConfig>> configs = {{"first", cfg},
                                                                          {"second", cfg}};
        const auto report = compare_losses(d, split, configs, 2, 1);
        REQUIRE(report.losses.size() == 2);
        CHECK(report.losses[0].avg_ba.mean == report.losses[1].avg_ba.mean);
        CHECK(report.losses[0].max_diff.mean == report.losses[1].max_diff.mean);
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(report.losses[0].runs[k].avg_ba == report.losses[1].runs[k].avg_ba);
    }
    SUBCASE("std-dev fields populated per seed count") {
        auto oe = quick_config(LossKind::Oe, 0.0, 6);
        oe.epochs_max = 2;
        auto gap = quick_config(LossKind::GapMulti, 1.0, 6);
        gap.epochs_max = 2;
        const auto report = compare_losses(d, split, {{"oe", oe}, {"gap", gap}}, 3, 1);
        for (const auto& summary : report.losses) {
            CHECK(summary.runs.size() == 3);
            CHECK(std::isfinite(summary.avg_ba.stddev));
            CHECK(summary.avg_ba.stddev >= 0.0);
        }
        std::size_t tally = 0;
        for (auto t : report.best_ba_tally) tally += t;
        CHECK(tally == d.n_groups());
    }
    SUBCASE("thread count does not change results") {
        auto oe = quick_config(LossKind::Oe, 0.0, 6);
        oe.epochs_max = 2;
        auto gap = quick_config(LossKind::GapMulti, 1.0, 6);
        gap.epochs_max = 2;
        const auto serial = compare_losses(d, split, {{"oe", oe}, {"gap", gap}}, 2, 1);
        const auto threaded = compare_losses(d, split, {{"oe", oe}, {"gap", gap}}, 2, 4);
        CHECK(comparison_to_json(serial) == comparison_to_json(threaded));
    }
    SUBCASE("input validation") {
        auto cfg = quick_config(LossKind::Oe, 0.0, 1);
        CHECK_THROWS_AS(compare_losses(d, split, {{"one", cfg}}, 2, 1), ConfigError);
        CHECK_THROWS_AS(compare_losses(d, split, {{"a", cfg}, {"b", cfg}}, 1, 1), ConfigError);
    }
}

TEST_CASE("lambda_sweep") {
    const auto d = separable_dataset(15, 500);
    const auto split = stratified_split(d, 0.25, 4);
    auto base = quick_config(LossKind::GapMulti, 1.0, 20);
    base.epochs_max = 2;

    SUBCASE("lambda zero matches the plain objective per paired seed") {
        const auto sweep = lambda_sweep(d, split, base, {0.0}, 2, 1);
        auto oe = base;
        oe.loss.kind = LossKind::Oe;
        const Dataset d_train = d.subset(split.train_indices);
        const Dataset d_test = d.subset(split.test_indices);
        for (std::size_t k = 0; k < 2; ++k) {
            auto run_cfg = oe;
            run_cfg.seed = base.seed + k;
            const auto [params, trace] = train(d_train, run_cfg);
            const auto report = evaluate(params, d_test, run_cfg.threshold);
            CHECK(sweep.rows[0].runs[k].avg_ba == report.avg_ba);
            CHECK(sweep.rows[0].runs[k].max_diff == report.max_diff);
        }
    }
    SUBCASE("rows are ordered by lambda") {
        const auto sweep = lambda_sweep(d, split, base, {1.0, 0.1, 10.0}, 2, 2);
        REQUIRE(sweep.rows.size() == 3);
        CHECK(sweep.rows[0].lambda == 0.1);
        CHECK(sweep.rows[1].lambda == 1.0);
        CHECK(sweep.rows[2].lambda == 10.0);
    }
    SUBCASE("rejects empty or negative lambdas") {
        CHECK_THROWS_AS(lambda_sweep(d, split, base, {}, 2, 1), ConfigError);
        CHECK_THROWS_AS(lambda_sweep(d, split, base, {-1.0}, 2, 1), ConfigError);
    }
}

TEST_CASE("serialization") {
    SUBCASE("model params round-trip through JSON") {
        const auto params = init_params({3, 4, 2}, 77, 0.25);
        const auto text = params_to_json(params);
        const auto loaded = params_from_json(text);
        CHECK(loaded.layer_sizes == params.layer_sizes);
        CHECK(loaded.dropout_rate == params.dropout_rate);
        CHECK(loaded.layer_weights[0] == params.layer_weights[0]);
        CHECK(loaded.layer_weights[1] == params.layer_weights[1]);
        CHECK(loaded.layer_biases == params.layer_biases);
    }
    SUBCASE("trace serializes") {
        const auto d = separable_dataset(3, 200);
        auto cfg = quick_config(LossKind::Oe, 0.0, 2);
        cfg.epochs_max = 2;
        const auto [params, trace] = train(d, cfg);
        const auto text = trace_to_json(trace);
        CHECK(text.find("epoch_losses") != std::string::npos);
        CHECK(text.find("converged_epoch") != std::string::npos);
    }
}
