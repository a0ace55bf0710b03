#include "sublearn/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace sublearn {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kNegTol = 1e-12;  // tolerance for tiny negative limits
}  // namespace

QuadRule quad_rule_from_string(const std::string& s) {
    if (s == "clenshaw_curtis" || s == "cc") return QuadRule::ClenshawCurtis;
    if (s == "trapezoid") return QuadRule::Trapezoid;
    throw std::invalid_argument("unknown quadrature rule: " + s);
}

std::string to_string(QuadRule r) {
    return r == QuadRule::ClenshawCurtis ? "clenshaw_curtis" : "trapezoid";
}

void QuadratureSpec::validate() const {
    if (nodes < 3) throw std::invalid_argument("quadrature needs >= 3 nodes");
    if (rule == QuadRule::ClenshawCurtis && nodes % 2 == 0)
        throw std::invalid_argument("Clenshaw-Curtis node count must be odd");
    if (!std::isfinite(b_max)) throw std::invalid_argument("b_max must be finite");
}

QuadPoints quad_points(QuadRule rule, int n, double lo, double hi) {
    QuadPoints pts;
    pts.x.resize(n);
    pts.w.resize(n);
    const double half = 0.5 * (hi - lo);
    if (rule == QuadRule::Trapezoid) {
        const double h = (hi - lo) / double(n - 1);
        for (int k = 0; k < n; ++k) {
            pts.x[k] = lo + h * k;
            pts.w[k] = (k == 0 || k == n - 1) ? 0.5 * h : h;
        }
        pts.x[n - 1] = hi;
        return pts;
    }
    // Clenshaw-Curtis with endpoints; exact closed-form weights
    const int segs = n - 1;
    for (int k = 0; k <= segs; ++k) {
        const double theta = kPi * double(k) / double(segs);
        pts.x[k] = lo + half * (1.0 - std::cos(theta));
        double s = 0.0;
        for (int j = 1; j <= segs / 2; ++j) {
            const double b = (2 * j == segs) ? 1.0 : 2.0;
            s += b * std::cos(2.0 * j * theta) / double(4 * j * j - 1);
        }
        const double c = (k == 0 || k == segs) ? 1.0 : 2.0;
        pts.w[k] = half * c * (1.0 - s) / double(segs);
    }
    return pts;
}

namespace {

double checked_limit(double x) {
    if (!(x >= -kNegTol))
        throw std::invalid_argument("integration limit must be >= 0, got " +
                                    std::to_string(x));
    return x < 0.0 ? 0.0 : x;
}

}  // namespace

BatchQuadLayout layout_cumulative(const QuadratureSpec& spec, const Vec& xs) {
    spec.validate();
    const int m = int(xs.size());
    const int n = spec.nodes;
    BatchQuadLayout L;
    L.points.resize(std::int64_t(m) * n);
    L.fused_w.resize(std::int64_t(m) * n);
    L.offset.resize(m + 1);
    L.leib_start.resize(m);
    L.leib_w.resize(m);
    for (int i = 0; i < m; ++i) {
        const double x = checked_limit(xs[i]);
        QuadPoints p = quad_points(spec.rule, n, 0.0, x);
        const int base = i * n;
        L.points.segment(base, n) = p.x;
        L.fused_w.segment(base, n) = p.w;
        L.offset[i] = base;
        L.leib_start[i] = base + n - 1;  // last node sits at x
        L.leib_w[i] = Vec::Ones(1);
    }
    L.offset[m] = m * n;
    return L;
}

BatchQuadLayout layout_tail(const QuadratureSpec& spec, const Vec& xs,
                            QuadCounters* counters) {
    spec.validate();
    const int m = int(xs.size());
    const int n = spec.nodes;
    BatchQuadLayout L;
    L.points.resize(std::int64_t(m) * n);
    L.fused_w.resize(std::int64_t(m) * n);
    L.offset.resize(m + 1);
    L.leib_start.resize(m);
    L.leib_w.resize(m);
    for (int i = 0; i < m; ++i) {
        double x = checked_limit(xs[i]);
        const bool clamped = x > spec.b_max;
        if (clamped) {
            if (counters) ++counters->tail_clamps;
            x = spec.b_max;  // zero-width interval: value and gradient vanish
        }
        QuadPoints p = quad_points(spec.rule, n, x, spec.b_max);
        const int base = i * n;
        L.points.segment(base, n) = p.x;
        L.fused_w.segment(base, n) = p.w;
        L.offset[i] = base;
        if (clamped) {
            L.leib_start[i] = base;
            L.leib_w[i] = Vec();
        } else {
            L.leib_start[i] = base;  // first node sits at x
            L.leib_w[i] = -Vec::Ones(1);
        }
    }
    L.offset[m] = m * n;
    return L;
}

BatchQuadLayout layout_double(const DoubleQuadSpec& spec, const Vec& xs,
                              double kappa, QuadCounters* counters) {
    spec.outer.validate();
    spec.inner.validate();
    if (!std::isfinite(kappa)) throw std::invalid_argument("kappa must be finite");
    const int m = int(xs.size());
    const int no = spec.outer.nodes;
    const int ni = spec.inner.nodes;
    const double bmax = spec.inner.b_max;
    BatchQuadLayout L;
    L.points.resize(std::int64_t(m) * no * ni);
    L.fused_w.resize(std::int64_t(m) * no * ni);
    L.offset.resize(m + 1);
    L.leib_start.resize(m);
    L.leib_w.resize(m);
    for (int i = 0; i < m; ++i) {
        double x = checked_limit(xs[i]);
        const bool clamped = x > bmax;
        if (clamped) {
            // the truncated function is exactly flat beyond b_max: cap the
            // outer interval so the value is constant and d/dx vanishes
            if (counters) ++counters->tail_clamps;
            x = bmax;
        }
        QuadPoints outer = quad_points(spec.outer.rule, no, 0.0, x);
        const int base = i * no * ni;
        for (int j = 0; j < no; ++j) {
            const double a = outer.x[j];
            const double tilt = std::exp(kappa * a);
            QuadPoints inner = quad_points(spec.inner.rule, ni, a, bmax);
            const int jb = base + j * ni;
            L.points.segment(jb, ni) = inner.x;
            L.fused_w.segment(jb, ni) = (outer.w[j] * tilt) * inner.w;
            if (j == no - 1) {
                // d/dx = e^{kappa x} * (inner tail at a = x)
                L.leib_start[i] = jb;
                L.leib_w[i] = clamped ? Vec() : Vec(tilt * inner.w);
            }
        }
        L.offset[i] = base;
    }
    L.offset[m] = m * no * ni;
    return L;
}

Var quadrature_reduce(const BatchQuadLayout& layout, const Integrand& f,
                      const Var& xs) {
    const int m = layout.inputs();
    Mat pts(1, layout.points.size());
    pts.row(0) = layout.points.transpose();
    Var fv = f(pts);
    if (fv.rows() != 1 || fv.cols() != layout.points.size())
        throw std::invalid_argument("integrand must map 1xK points to 1xK values");
    if (!fv.value().allFinite())
        throw std::runtime_error("non-finite integrand value at a quadrature node");

    Mat out(1, m);
    Vec leib(m);
    for (int i = 0; i < m; ++i) {
        const int b = layout.offset[i], e = layout.offset[i + 1];
        out(0, i) = fv.value()
                        .row(0)
                        .segment(b, e - b)
                        .cwiseProduct(layout.fused_w.segment(b, e - b).transpose())
                        .sum();
        const Vec& lw = layout.leib_w[i];
        leib[i] = lw.size() == 0
                      ? 0.0
                      : fv.value()
                            .row(0)
                            .segment(layout.leib_start[i], lw.size())
                            .cwiseProduct(lw.transpose())
                            .sum();
    }

    auto fn = fv.node();
    auto xn = xs.node();
    auto node = std::make_shared<Node>();
    node->value = std::move(out);
    node->needs_grad = fn->needs_grad || xn->needs_grad;
    node->parents = {fn, xn};
    Vec fused = layout.fused_w;
    std::vector<int> offset = layout.offset;
    node->backprop = [fn, xn, fused, offset, leib](Node& n) {
        const int m = int(offset.size()) - 1;
        if (fn->needs_grad) {
            Mat& fg = fn->ensure_grad();
            for (int i = 0; i < m; ++i) {
                const int b = offset[i], e = offset[i + 1];
                fg.row(0).segment(b, e - b) +=
                    n.grad(0, i) * fused.segment(b, e - b).transpose();
            }
        }
        if (xn->needs_grad) {
            Mat& xg = xn->ensure_grad();
            for (int i = 0; i < m; ++i) xg(0, i) += n.grad(0, i) * leib[i];
        }
    };
    return Var(node);
}

Vec quadrature_reduce_nograd(const BatchQuadLayout& layout, const Vec& fvals) {
    if (fvals.size() != layout.points.size())
        throw std::invalid_argument("quadrature_reduce_nograd: size mismatch");
    const int m = layout.inputs();
    Vec out(m);
    for (int i = 0; i < m; ++i) {
        const int b = layout.offset[i], e = layout.offset[i + 1];
        out[i] =
            fvals.segment(b, e - b).cwiseProduct(layout.fused_w.segment(b, e - b))
                .sum();
    }
    return out;
}

namespace {

Vec row_values(const Var& xs) {
    if (xs.rows() != 1)
        throw std::invalid_argument("integration limits must form a 1xM row");
    return xs.value().row(0).transpose();
}

}  // namespace

Var integrate_cumulative_batch(const Integrand& f, const Var& xs,
                               const QuadratureSpec& spec) {
    return quadrature_reduce(layout_cumulative(spec, row_values(xs)), f, xs);
}

Var integrate_cumulative(const Integrand& f, const Var& x,
                         const QuadratureSpec& spec) {
    return integrate_cumulative_batch(f, x, spec);
}

Var integrate_tail_batch(const Integrand& f, const Var& xs,
                         const QuadratureSpec& spec, QuadCounters* counters) {
    return quadrature_reduce(layout_tail(spec, row_values(xs), counters), f, xs);
}

Var integrate_tail(const Integrand& f, const Var& x, const QuadratureSpec& spec,
                   QuadCounters* counters) {
    return integrate_tail_batch(f, x, spec, counters);
}

Var double_integral_batch(const Integrand& f, const Var& xs, double kappa,
                          const DoubleQuadSpec& spec, QuadCounters* counters) {
    return quadrature_reduce(layout_double(spec, row_values(xs), kappa, counters),
                             f, xs);
}

Var double_integral(const Integrand& f, const Var& x, double kappa,
                    const DoubleQuadSpec& spec, QuadCounters* counters) {
    return double_integral_batch(f, x, kappa, spec, counters);
}

}  // namespace sublearn
