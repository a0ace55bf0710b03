#pragma once

#include <functional>
#include <vector>

#include "sublearn/diffgraph.hpp"

namespace sublearn {

enum class QuadRule { ClenshawCurtis, Trapezoid };

QuadRule quad_rule_from_string(const std::string& s);
std::string to_string(QuadRule r);

struct QuadratureSpec {
    QuadRule rule = QuadRule::ClenshawCurtis;
    int nodes = 33;  // evaluation points; odd for Clenshaw-Curtis
    double b_max = 1.0;

    void validate() const;
};

// nodes ascending on [lo,hi], endpoints included, weights for plain sums
struct QuadPoints {
    Vec x;
    Vec w;
};
QuadPoints quad_points(QuadRule rule, int n, double lo, double hi);

struct QuadCounters {
    long long tail_clamps = 0;
};

// Integrand as a batched map: a row of evaluation points (1xK) to values.
using Integrand = std::function<Var(const Mat& points)>;
using IntegrandValues = std::function<Vec(const Vec& points)>;

// Precomputed evaluation layout for a batch of integration limits. One
// integrand call covers every point of every input; per-input results are
// fused weighted sums over contiguous column blocks.
struct BatchQuadLayout {
    Vec points;               // all evaluation points, concatenated
    Vec fused_w;              // per-point weights (outer x inner x tilt)
    std::vector<int> offset;  // size M+1, block i = [offset[i], offset[i+1])
    // Leibniz stencil: d(value_i)/d(x_i) = sum_j leib_w[i][j] * f(points[leib_start[i]+j]).
    // Empty stencil means the derivative is identically zero (clamped tail).
    std::vector<int> leib_start;
    std::vector<Vec> leib_w;

    int inputs() const { return int(offset.size()) - 1; }
};

BatchQuadLayout layout_cumulative(const QuadratureSpec& spec, const Vec& xs);
BatchQuadLayout layout_tail(const QuadratureSpec& spec, const Vec& xs,
                            QuadCounters* counters);
struct DoubleQuadSpec {
    QuadratureSpec outer;  // cumulative rule over [0, x]
    QuadratureSpec inner;  // tail rule; inner.b_max is the truncation point
};
BatchQuadLayout layout_double(const DoubleQuadSpec& spec, const Vec& xs,
                              double kappa, QuadCounters* counters);

// Shared reduction: evaluates f once over layout.points and contracts with
// the fused weights; gradient w.r.t. each x_i uses the Leibniz stencil.
Var quadrature_reduce(const BatchQuadLayout& layout, const Integrand& f,
                      const Var& xs);
Vec quadrature_reduce_nograd(const BatchQuadLayout& layout, const Vec& fvals);

// ---------------------------------------------------------------------------
// The three integral primitives. x (or each entry of xs) is the variable
// integration limit; gradients w.r.t. x follow the Leibniz rule and
// gradients w.r.t. the integrand's parameters are quadrature-weighted sums.

// int_0^x f(a) da ; d/dx = f(x)
Var integrate_cumulative(const Integrand& f, const Var& x,
                         const QuadratureSpec& spec);
Var integrate_cumulative_batch(const Integrand& f, const Var& xs,
                               const QuadratureSpec& spec);

// int_x^{b_max} f(b) db ; d/dx = -f(x); x beyond b_max clamps to 0
Var integrate_tail(const Integrand& f, const Var& x, const QuadratureSpec& spec,
                   QuadCounters* counters = nullptr);
Var integrate_tail_batch(const Integrand& f, const Var& xs,
                         const QuadratureSpec& spec,
                         QuadCounters* counters = nullptr);

// int_0^x e^{a*kappa} int_a^{b_max} f(b) db da, evaluated as the nested
// composition: the inner tail integral is recomputed at every outer node
Var double_integral(const Integrand& f, const Var& x, double kappa,
                    const DoubleQuadSpec& spec, QuadCounters* counters = nullptr);
Var double_integral_batch(const Integrand& f, const Var& xs, double kappa,
                          const DoubleQuadSpec& spec,
                          QuadCounters* counters = nullptr);

}  // namespace sublearn
