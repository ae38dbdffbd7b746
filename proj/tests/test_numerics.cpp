#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fairgap/errors.hpp"
#include "fairgap/numerics.hpp"

using namespace fairgap;

namespace {

std::vector<GroupWeights> unit_weights(std::size_t g) { return std::vector<GroupWeights>(g, {1.0, 1.0}); }

LossConfig make_config(LossKind kind, double lambda, std::size_t g) {
    LossConfig cfg;
    cfg.kind = kind;
    cfg.lambda = lambda;
    cfg.class_weights = unit_weights(g);
    return cfg;
}

// Random features, binary targets and mixed class weights for gradient checks.
struct Case {
    Matrix x;
    Matrix y;
    LossConfig cfg;
};

Case random_case(std::uint64_t seed, LossKind kind, double lambda, std::size_t n, std::size_t f,
                 std::size_t g) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::bernoulli_distribution label(0.5);
    std::uniform_real_distribution<double> weight(0.5, 2.0);
    Case c;
    c.x = Matrix(n, f);
    c.y = Matrix(n, g);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < f; ++j) c.x(i, j) = gauss(rng);
        for (std::size_t j = 0; j < g; ++j) c.y(i, j) = label(rng) ? 1.0 : 0.0;
    }
    c.cfg.kind = kind;
    c.cfg.lambda = lambda;
    for (std::size_t j = 0; j < g; ++j) c.cfg.class_weights.push_back({weight(rng), weight(rng)});
    return c;
}

} // namespace

TEST_CASE("init_params") {
    SUBCASE("deterministic per seed") {
        const auto a = init_params({8, 4, 2}, 7);
        const auto b = init_params({8, 4, 2}, 7);
        CHECK(a.layer_weights[0] == b.layer_weights[0]);
        CHECK(a.layer_weights[1] == b.layer_weights[1]);
        const auto c = init_params({8, 4, 2}, 8);
        CHECK(a.layer_weights[0] != c.layer_weights[0]);
    }
    SUBCASE("shape bookkeeping") {
        const auto p = init_params({8, 4, 2}, 7);
        REQUIRE(p.layer_weights.size() == 2);
        CHECK(p.layer_weights[0].rows() == 8);
        CHECK(p.layer_weights[0].cols() == 4);
        CHECK(p.layer_weights[1].rows() == 4);
        CHECK(p.layer_weights[1].cols() == 2);
        REQUIRE(p.layer_biases.size() == 1); // output layer carries no bias
        CHECK(p.layer_biases[0].size() == 4);
        CHECK(p.n_parameters() == 8 * 4 + 4 * 2 + 4);
    }
    SUBCASE("glorot bounds") {
        const auto p = init_params({8, 4, 2}, 3);
        const double limit = std::sqrt(6.0 / (8 + 4));
        for (std::size_t i = 0; i < p.layer_weights[0].size(); ++i) {
            CHECK(p.layer_weights[0].data()[i] <= limit);
            CHECK(p.layer_weights[0].data()[i] >= -limit);
        }
        for (double b : p.layer_biases[0]) CHECK(b == 0.0);
    }
    SUBCASE("degenerate configurations") {
        CHECK_THROWS_AS(init_params({}, 1), ConfigError);
        CHECK_THROWS_AS(init_params({4}, 1), ConfigError);
        CHECK_THROWS_AS(init_params({4, 0, 2}, 1), ConfigError);
    }
}

TEST_CASE("forward") {
    SUBCASE("zero weights give sigmoid(0) everywhere") {
        ModelParams p;
        p.layer_sizes = {3, 2, 2};
        p.layer_weights = {Matrix(3, 2, 0.0), Matrix(2, 2, 0.0)};
        p.layer_biases = {std::vector<double>(2, 0.0)};
        Matrix x(4, 3, 1.5);
        const Matrix probs = forward(p, x);
        for (std::size_t i = 0; i < probs.size(); ++i) CHECK(probs.data()[i] == 0.5);
    }
    SUBCASE("evaluation mode is deterministic") {
        const auto p = init_params({5, 4, 3}, 11, 0.5);
        Matrix x(6, 5);
        std::mt19937_64 rng(2);
        std::normal_distribution<double> gauss;
        for (std::size_t i = 0; i < x.size(); ++i) x.data()[i] = gauss(rng);
        CHECK(forward(p, x, false, 1) == forward(p, x, false, 99));
    }
    SUBCASE("hand-computed single hidden unit") {
        // sigmoid(relu(w.x) * v) with w = (0.3, -0.2), v = 1.7, x = (1.0, 0.5)
        ModelParams p;
        p.layer_sizes = {2, 1, 1};
        p.layer_weights = {Matrix(2, 1), Matrix(1, 1)};
        p.layer_weights[0](0, 0) = 0.3;
        p.layer_weights[0](1, 0) = -0.2;
        p.layer_weights[1](0, 0) = 1.7;
        p.layer_biases = {std::vector<double>(1, 0.0)};
        Matrix x(1, 2);
        x(0, 0) = 1.0;
        x(0, 1) = 0.5;
        const double z = std::max(0.0, 0.3 * 1.0 + (-0.2) * 0.5) * 1.7;
        const double expected = 1.0 / (1.0 + std::exp(-z));
        CHECK(forward(p, x)(0, 0) == doctest::Approx(expected).epsilon(1e-15));
    }
    SUBCASE("outputs stay inside the open unit interval") {
        ModelParams p;
        p.layer_sizes = {1, 1};
        p.layer_weights = {Matrix(1, 1, 1000.0)};
        Matrix x(2, 1);
        x(0, 0) = 100.0;
        x(1, 0) = -100.0;
        const Matrix probs = forward(p, x);
        CHECK(probs(0, 0) > 0.0);
        CHECK(probs(0, 0) < 1.0);
        CHECK(probs(1, 0) > 0.0);
        CHECK(probs(1, 0) < 1.0);
    }
    SUBCASE("dropout reproducibility and scaling") {
        const auto p = init_params({4, 8, 2}, 5, 0.5);
        Matrix x(3, 4, 1.0);
        CHECK(forward(p, x, true, 42) == forward(p, x, true, 42));
        CHECK(forward(p, x, true, 42) != forward(p, x, true, 43));
    }
    SUBCASE("errors") {
        const auto p = init_params({4, 2}, 1);
        CHECK_THROWS_AS(forward(p, Matrix(2, 3, 0.0)), ShapeError);
        Matrix bad(1, 4, 0.0);
        bad(0, 0) = std::nan("");
        CHECK_THROWS_AS(forward(p, bad), NumericError);
    }
}

TEST_CASE("backward") {
    SUBCASE("loss equals the losses-module value on the same predictions") {
        const auto c = random_case(101, LossKind::GapMulti, 1.0, 12, 5, 3);
        const auto params = init_params({5, 6, 3}, 3);
        const auto result = backward(params, c.x, c.y, c.cfg);
        const Matrix probs = forward(params, c.x);
        const double direct = loss_value(c.y, probs, c.cfg);
        CHECK(result.loss == doctest::Approx(direct).epsilon(1e-10));
    }
    SUBCASE("perfect predictions give vanishing gradients") {
        // Saturate the single output unit so predictions clamp at the target.
        ModelParams p;
        p.layer_sizes = {1, 1};
        p.layer_weights = {Matrix(1, 1, 50.0)};
        Matrix x(2, 1);
        x(0, 0) = 1.0;
        x(1, 0) = -1.0;
        Matrix y(2, 1);
        y(0, 0) = 1.0;
        y(1, 0) = 0.0;
        const auto result = backward(p, x, y, make_config(LossKind::Oe, 0.0, 1));
        CHECK(result.loss == doctest::Approx(0.0).epsilon(1e-6));
        CHECK(result.grads.max_abs() < 1e-6);
    }
    SUBCASE("deterministic") {
        const auto c = random_case(7, LossKind::Soo, 0.5, 8, 4, 2);
        const auto params = init_params({4, 5, 2}, 9);
        const auto a = backward(params, c.x, c.y, c.cfg);
        const auto b = backward(params, c.x, c.y, c.cfg);
        CHECK(a.loss == b.loss);
        CHECK(a.grads.weight_grads[0] == b.grads.weight_grads[0]);
    }
}

TEST_CASE("finite difference oracle") {
    SUBCASE("quadratic sanity: derivative of w^2 at w=3") {
        // The central-difference machinery is exercised against an analytic
        // derivative before it is trusted as the gradient oracle.
        const double h = 1e-5;
        const auto f = [](double w) { return w * w; };
        const double estimate = (f(3.0 + h) - f(3.0 - h)) / (2 * h);
        CHECK(estimate == doctest::Approx(6.0).epsilon(1e-7));
    }
    SUBCASE("constant loss surface gives near-zero estimates") {
        // Saturated output: every probe stays clamped, so differences vanish.
        ModelParams p;
        p.layer_sizes = {1, 1};
        p.layer_weights = {Matrix(1, 1, 80.0)};
        Matrix x(1, 1, 1.0);
        Matrix y(1, 1, 1.0);
        const auto fd = finite_diff_grad(p, x, y, make_config(LossKind::Oe, 0.0, 1), 1e-5);
        CHECK(fd.max_abs() < 1e-9);
    }
    SUBCASE("agreement with backward across losses and seeds") {
        const struct {
            LossKind kind;
            double lambda;
        } setups[] = {{LossKind::Oe, 0.0},      {LossKind::GapMulti, 0.1},
                      {LossKind::GapMulti, 1.0}, {LossKind::GapMulti, 10.0},
                      {LossKind::Cla, 1.0},      {LossKind::Soo, 1.0}};
        for (const auto& setup : setups) {
            for (std::uint64_t seed = 1; seed <= 10; ++seed) {
                const std::size_t n = 4 + seed % 29; // batches up to 32
                const auto c = random_case(900 + seed, setup.kind, setup.lambda, n, 5, 3);
                const auto params = init_params({5, 8, 3}, seed); // 5*8+8+8*3 = 72 params
                const auto analytic = backward(params, c.x, c.y, c.cfg);
                const auto fd = finite_diff_grad(params, c.x, c.y, c.cfg, 1e-5);
                const double rel = max_relative_error(analytic.grads, fd);
                CAPTURE(loss_kind_name(setup.kind));
                CAPTURE(setup.lambda);
                CAPTURE(seed);
                CHECK(rel < 1e-4);
            }
        }
    }
    SUBCASE("agreement holds through dropout with a shared mask seed") {
        const auto c = random_case(55, LossKind::GapMulti, 1.0, 16, 5, 2);
        const auto params = init_params({5, 6, 2}, 21, 0.3);
        const auto analytic = backward(params, c.x, c.y, c.cfg, true, 77);
        const auto fd = finite_diff_grad(params, c.x, c.y, c.cfg, 1e-5, true, 77);
        CHECK(max_relative_error(analytic.grads, fd) < 1e-4);
    }
    SUBCASE("h must be positive") {
        const auto c = random_case(1, LossKind::Oe, 0.0, 4, 3, 2);
        const auto params = init_params({3, 2}, 1);
        CHECK_THROWS_AS(finite_diff_grad(params, c.x, c.y, c.cfg, 0.0), ConfigError);
    }
}

TEST_CASE("adamax") {
    auto scalar_model = [](double w0) {
        ModelParams p;
        p.layer_sizes = {1, 1};
        p.layer_weights = {Matrix(1, 1, w0)};
        return p;
    };
    auto scalar_grad = [](double g) {
        GradientBundle grads;
        grads.weight_grads = {Matrix(1, 1, g)};
        return grads;
    };

    SUBCASE("zero gradient is a no-op on parameters") {
        auto p = scalar_model(0.37);
        auto state = init_adamax(p, 1e-3);
        state.inf_norm[0](0, 0) = 0.2; // arbitrary prior state
        state.first_moment[0](0, 0) = 0.0;
        const auto [p2, s2] = adamax_step(p, scalar_grad(0.0), state);
        CHECK(p2.layer_weights[0](0, 0) == 0.37);
        CHECK(s2.step_count == 1);
    }
    SUBCASE("hand-computed first step") {
        // lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8, fresh state, g=1:
        //   m = 0.1, u = 1, update = (lr / (1-0.9)) * m / (u+eps)
        auto p = scalar_model(1.0);
        const auto state = init_adamax(p, 1e-3, 0.9, 0.999, 1e-8);
        const auto [p1, s1] = adamax_step(p, scalar_grad(1.0), state);
        const double expected = 1.0 - (0.001 / 0.1) * 0.1 / (1.0 + 1e-8);
        CHECK(p1.layer_weights[0](0, 0) == doctest::Approx(expected).epsilon(1e-15));
        CHECK(s1.first_moment[0](0, 0) == doctest::Approx(0.1).epsilon(1e-15));
        CHECK(s1.inf_norm[0](0, 0) == 1.0);
        CHECK(s1.step_count == 1);
    }
    SUBCASE("two hand-computed steps: parameters keep strictly descending") {
        // For a constant gradient the bias-corrected AdaMax step has constant
        // magnitude lr/(1+eps): m_t/(1-beta1^t) telescopes to g. The
        // parameter sequence is still strictly ordered; both facts are pinned
        // here from the recurrences.
        auto p = scalar_model(1.0);
        auto state = init_adamax(p, 1e-3, 0.9, 0.999, 1e-8);
        const auto [p1, s1] = adamax_step(p, scalar_grad(1.0), state);
        const auto [p2, s2] = adamax_step(p1, scalar_grad(1.0), s1);
        const double w0 = 1.0, w1 = p1.layer_weights[0](0, 0), w2 = p2.layer_weights[0](0, 0);
        CHECK(w0 > w1);
        CHECK(w1 > w2);
        // m2 = 0.9*0.1 + 0.1 = 0.19; correction 1-0.81 = 0.19; u stays 1.
        CHECK(s2.first_moment[0](0, 0) == doctest::Approx(0.19).epsilon(1e-15));
        CHECK(w1 - w2 == doctest::Approx((0.001 / 0.19) * 0.19 / (1.0 + 1e-8)).epsilon(1e-12));
        CHECK(s2.step_count == 2);
    }
    SUBCASE("bias correction visible once the gradient stops") {
        // Step 1 with g=1, step 2 with g=0: the second step shrinks.
        auto p = scalar_model(1.0);
        auto state = init_adamax(p, 1e-3, 0.9, 0.999, 1e-8);
        const auto [p1, s1] = adamax_step(p, scalar_grad(1.0), state);
        const auto [p2, s2] = adamax_step(p1, scalar_grad(0.0), s1);
        const double step1 = 1.0 - p1.layer_weights[0](0, 0);
        const double step2 = p1.layer_weights[0](0, 0) - p2.layer_weights[0](0, 0);
        // m2 = 0.09, u2 = 0.999, correction 0.19.
        CHECK(step2 == doctest::Approx((0.001 / 0.19) * 0.09 / (0.999 + 1e-8)).epsilon(1e-12));
        CHECK(step1 > step2);
        CHECK(step2 > 0.0);
    }
    SUBCASE("shape mismatch is rejected") {
        auto p = scalar_model(1.0);
        auto state = init_adamax(p);
        GradientBundle bad;
        bad.weight_grads = {Matrix(2, 1, 0.0)};
        CHECK_THROWS_AS(adamax_step(p, bad, state), ShapeError);
    }
}
