#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sublearn/quadrature.hpp"
#include "testutil.hpp"

using namespace sublearn;

namespace {

// fixed analytic integrands wrapped as batched graph functions
Integrand constant_fn(double c) {
    return [c](const Mat& pts) {
        return Var::constant(Mat::Constant(1, pts.cols(), c));
    };
}

Integrand exp_neg() {
    return [](const Mat& pts) {
        return Var::constant(Mat((-pts.array()).exp().matrix()));
    };
}

Integrand linear_fn(double a, double b) {
    return [a, b](const Mat& pts) {
        return Var::constant(Mat((a * pts.array() + b).matrix()));
    };
}

Integrand cosine_fn() {
    return [](const Mat& pts) {
        return Var::constant(Mat(pts.array().cos().matrix()));
    };
}

double cumulative_value(const Integrand& f, double x, const QuadratureSpec& spec) {
    return integrate_cumulative(f, Var::scalar(x), spec).scalar_value();
}

}  // namespace

TEST_CASE("rule weights integrate constants exactly") {
    for (QuadRule rule : {QuadRule::ClenshawCurtis, QuadRule::Trapezoid}) {
        QuadPoints p = quad_points(rule, 33, 0.25, 2.75);
        CHECK(p.w.sum() == doctest::Approx(2.5).epsilon(1e-13));
        CHECK(p.x[0] == doctest::Approx(0.25));
        CHECK(p.x[p.x.size() - 1] == doctest::Approx(2.75));
        for (int i = 1; i < p.x.size(); ++i) CHECK(p.x[i] > p.x[i - 1]);
        CHECK((p.w.array() >= 0.0).all());
    }
}

TEST_CASE("clenshaw-curtis is exact on low-degree polynomials") {
    QuadPoints p = quad_points(QuadRule::ClenshawCurtis, 9, -1.0, 1.0);
    // integrates x^2 and x^4 exactly on [-1,1]
    CHECK((p.w.array() * p.x.array().square()).sum() ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK((p.w.array() * p.x.array().pow(4)).sum() ==
          doctest::Approx(2.0 / 5.0).epsilon(1e-12));
}

TEST_CASE("spec validation") {
    QuadratureSpec bad_even{QuadRule::ClenshawCurtis, 10, 1.0};
    CHECK_THROWS_AS(bad_even.validate(), std::invalid_argument);
    QuadratureSpec too_few{QuadRule::Trapezoid, 2, 1.0};
    CHECK_THROWS_AS(too_few.validate(), std::invalid_argument);
    QuadratureSpec inf_b{QuadRule::Trapezoid, 9,
                         std::numeric_limits<double>::infinity()};
    CHECK_THROWS_AS(inf_b.validate(), std::invalid_argument);
}

TEST_CASE("cumulative integral on analytic oracles") {
    QuadratureSpec cc{QuadRule::ClenshawCurtis, 33, 2.0};
    QuadratureSpec trap{QuadRule::Trapezoid, 65, 2.0};

    CHECK(cumulative_value(constant_fn(0.0), 1.3, cc) == 0.0);
    for (const auto& spec : {cc, trap}) {
        CHECK(cumulative_value(constant_fn(1.0), 1.5, spec) ==
              doctest::Approx(1.5).epsilon(1e-10));
        CHECK(cumulative_value(linear_fn(2.0, -0.5), 2.0, spec) ==
              doctest::Approx(3.0).epsilon(1e-10));
    }
    CHECK(cumulative_value(exp_neg(), 1.0, cc) ==
          doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-9));
}

TEST_CASE("cumulative rejects negative limits") {
    QuadratureSpec spec{QuadRule::ClenshawCurtis, 9, 2.0};
    CHECK_THROWS_AS(cumulative_value(constant_fn(1.0), -0.5, spec),
                    std::invalid_argument);
}

TEST_CASE("leibniz derivative of the cumulative integral is f(x)") {
    QuadratureSpec spec{QuadRule::ClenshawCurtis, 33, 2.0};
    ParamStore store;
    store.add("x", Mat::Constant(1, 1, 1.0));
    ParamLeaves leaves(store);
    Var q = integrate_cumulative(exp_neg(), leaves("x"), spec);
    backward(q);
    CHECK(leaves.grads().at("x")(0, 0) ==
          doctest::Approx(std::exp(-1.0)).epsilon(1e-6));
}

TEST_CASE("tail integral on analytic oracles") {
    QuadratureSpec spec{QuadRule::ClenshawCurtis, 33, 2.0};
    CHECK(integrate_tail(constant_fn(1.0), Var::scalar(2.0), spec).scalar_value() ==
          doctest::Approx(0.0));
    CHECK(integrate_tail(constant_fn(1.0), Var::scalar(0.0), spec).scalar_value() ==
          doctest::Approx(2.0).epsilon(1e-12));
    QuadratureSpec wide{QuadRule::ClenshawCurtis, 65, 20.0};
    CHECK(integrate_tail(exp_neg(), Var::scalar(0.5), wide).scalar_value() ==
          doctest::Approx(std::exp(-0.5) - std::exp(-20.0)).epsilon(1e-8));
}

TEST_CASE("tail clamps beyond b_max and counts it") {
    QuadratureSpec spec{QuadRule::ClenshawCurtis, 9, 1.0};
    QuadCounters counters;
    ParamStore store;
    store.add("x", Mat::Constant(1, 1, 1.5));
    ParamLeaves leaves(store);
    Var q = integrate_tail(constant_fn(1.0), leaves("x"), spec, &counters);
    CHECK(q.scalar_value() == 0.0);
    CHECK(counters.tail_clamps == 1);
    backward(q);
    CHECK(leaves.grads().at("x")(0, 0) == 0.0);
}

TEST_CASE("tail derivative is -f(x)") {
    QuadratureSpec spec{QuadRule::ClenshawCurtis, 33, 2.0};
    ParamStore store;
    store.add("x", Mat::Constant(1, 1, 0.5));
    ParamLeaves leaves(store);
    Var q = integrate_tail(exp_neg(), leaves("x"), spec);
    backward(q);
    CHECK(leaves.grads().at("x")(0, 0) ==
          doctest::Approx(-std::exp(-0.5)).epsilon(1e-6));
}

TEST_CASE("double integral analytic cases") {
    DoubleQuadSpec dq{{QuadRule::ClenshawCurtis, 33, 2.0},
                      {QuadRule::ClenshawCurtis, 33, 2.0}};
    // normalized at zero
    CHECK(double_integral(constant_fn(1.0), Var::scalar(0.0), 0.0, dq)
              .scalar_value() == doctest::Approx(0.0));
    // f == 1, b_max = 2: int_0^1 (2 - a) da = 1.5
    CHECK(double_integral(constant_fn(1.0), Var::scalar(1.0), 0.0, dq)
              .scalar_value() == doctest::Approx(1.5).epsilon(1e-10));
    // exponential tail with a large truncation: int_0^1 e^{-a} da
    DoubleQuadSpec wide{{QuadRule::ClenshawCurtis, 33, 40.0},
                        {QuadRule::ClenshawCurtis, 65, 40.0}};
    CHECK(double_integral(exp_neg(), Var::scalar(1.0), 0.0, wide).scalar_value() ==
          doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-7));
    // exponential tilt: int_0^1 e^{0.1 a} (2 - a) da
    CHECK(double_integral(constant_fn(1.0), Var::scalar(1.0), 0.1, dq)
              .scalar_value() == doctest::Approx(1.5688009883212453).epsilon(1e-10));
}

TEST_CASE("double integral leibniz derivative carries the tilt") {
    DoubleQuadSpec dq{{QuadRule::ClenshawCurtis, 33, 2.0},
                      {QuadRule::ClenshawCurtis, 33, 2.0}};
    ParamStore store;
    store.add("x", Mat::Constant(1, 1, 0.75));
    ParamLeaves leaves(store);
    Var q = double_integral(constant_fn(1.0), leaves("x"), 0.2, dq);
    backward(q);
    // d/dx = e^{kappa x} * (b_max - x)
    CHECK(leaves.grads().at("x")(0, 0) ==
          doctest::Approx(std::exp(0.15) * 1.25).epsilon(1e-8));
}

TEST_CASE("trapezoid error decays at second order") {
    auto trap_err = [&](int nodes) {
        QuadratureSpec spec{QuadRule::Trapezoid, nodes, 2.0};
        const double got = cumulative_value(exp_neg(), 1.0, spec);
        return std::abs(got - (1.0 - std::exp(-1.0)));
    };
    auto cos_err = [&](int nodes) {
        QuadratureSpec spec{QuadRule::Trapezoid, nodes, 2.0};
        const double got = cumulative_value(cosine_fn(), 1.0, spec);
        return std::abs(got - std::sin(1.0));
    };
    // halving the spacing should cut the error by about 4; demand >= 3.5
    CHECK(trap_err(17) / trap_err(33) > 3.5);
    CHECK(trap_err(33) / trap_err(65) > 3.5);
    CHECK(cos_err(17) / cos_err(33) > 3.5);
}

TEST_CASE("monotonicity in the limit for non-negative integrands") {
    QuadratureSpec spec{QuadRule::ClenshawCurtis, 33, 3.0};
    double prev_c = -1.0;
    double prev_t = 1e18;
    for (int i = 0; i <= 30; ++i) {
        const double x = 3.0 * i / 30.0;
        const double c = cumulative_value(exp_neg(), x, spec);
        const double t =
            integrate_tail(exp_neg(), Var::scalar(x), spec).scalar_value();
        CHECK(c >= prev_c - 1e-12);
        CHECK(t <= prev_t + 1e-12);
        prev_c = c;
        prev_t = t;
    }
}

TEST_CASE("non-finite integrand values are rejected") {
    QuadratureSpec spec{QuadRule::ClenshawCurtis, 9, 1.0};
    Integrand bad = [](const Mat& pts) {
        Mat v = Mat::Constant(1, pts.cols(), std::nan(""));
        return Var::constant(v);
    };
    CHECK_THROWS_AS(cumulative_value(bad, 0.5, spec), std::runtime_error);
}

TEST_CASE("parameter gradients flow through quadrature") {
    // integrand h(b) = softplus(w * b + c); check d integral / d{w,c}
    ParamStore store;
    store.add("w", Mat::Constant(1, 1, 0.8));
    store.add("c", Mat::Constant(1, 1, -0.2));
    QuadratureSpec spec{QuadRule::ClenshawCurtis, 33, 2.0};
    DoubleQuadSpec dq{spec, spec};

    auto build = [&](ParamLeaves& leaves) {
        Integrand f = [&leaves](const Mat& pts) {
            Var w = leaves("w");
            Var c = leaves("c");
            return softplus(add_colwise(matmul(w, Var::constant(pts)), c));
        };
        Var a = integrate_cumulative(f, Var::scalar(1.2), spec);
        Var b = integrate_tail(f, Var::scalar(0.4), spec);
        Var d = double_integral(f, Var::scalar(1.1), 0.05, dq);
        return a + b + d;
    };
    auto loss_value = [&] {
        ParamLeaves leaves(store);
        return build(leaves).scalar_value();
    };
    ParamLeaves leaves(store);
    Var loss = build(leaves);
    backward(loss);
    auto result = test::check_gradients(store, loss_value, leaves.grads());
    CAPTURE(result.worst_param);
    CHECK(result.pass);
}

TEST_CASE("batched limits agree with one-at-a-time evaluation") {
    QuadratureSpec spec{QuadRule::ClenshawCurtis, 17, 2.0};
    Mat xs(1, 4);
    xs << 0.0, 0.4, 1.1, 2.0;
    Var batched = integrate_cumulative_batch(exp_neg(), Var::constant(xs), spec);
    for (int i = 0; i < 4; ++i)
        CHECK(batched.value()(0, i) ==
              doctest::Approx(cumulative_value(exp_neg(), xs(0, i), spec)));
}
