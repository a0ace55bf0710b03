#include "sublearn/shapefn.hpp"

#include <cmath>
#include <stdexcept>

namespace sublearn {

double kappa_for(double alpha, int cardinality_k) {
    if (!(alpha > 0.0) || alpha > 1.0)
        throw std::invalid_argument("alpha must lie in (0, 1]");
    if (cardinality_k < 1)
        throw std::invalid_argument("cardinality bound must be >= 1");
    if (alpha == 1.0) return 0.0;
    return std::log(1.0 / alpha) / double(cardinality_k);
}

ShapeKind shape_kind_from_string(const std::string& s) {
    if (s == "monotone_concave") return ShapeKind::MonotoneConcave;
    if (s == "alpha_tilted") return ShapeKind::AlphaTilted;
    if (s == "general_concave") return ShapeKind::GeneralConcave;
    throw std::invalid_argument("unknown shape kind: " + s);
}

std::string to_string(ShapeKind k) {
    switch (k) {
        case ShapeKind::MonotoneConcave: return "monotone_concave";
        case ShapeKind::AlphaTilted: return "alpha_tilted";
        case ShapeKind::GeneralConcave: return "general_concave";
    }
    return "monotone_concave";
}

ShapeMode shape_mode_from_string(const std::string& s) {
    if (s == "end_to_end") return ShapeMode::EndToEnd;
    if (s == "decoupled") return ShapeMode::Decoupled;
    throw std::invalid_argument("unknown shape mode: " + s);
}

std::string to_string(ShapeMode m) {
    return m == ShapeMode::EndToEnd ? "end_to_end" : "decoupled";
}

void ShapeFnConfig::validate() const {
    integrand.validate();
    aux.validate();
    outer.validate();
    inner.validate();
    if (!std::isfinite(kappa)) throw std::invalid_argument("kappa must be finite");
    if (kind == ShapeKind::GeneralConcave &&
        (!(x_max > 0.0) || !std::isfinite(x_max)))
        throw std::invalid_argument("x_max must be positive and finite");
}

ShapeFn::ShapeFn(ShapeFnConfig cfg, std::string prefix)
    : cfg_(std::move(cfg)), prefix_(std::move(prefix)) {
    cfg_.validate();
}

void ShapeFn::init_params(ParamStore& store, Rng rng, double weight_scale) const {
    Rng rh = rng.substream("h");
    init_mlp(store, prefix_ + ".h", cfg_.integrand, rh, weight_scale);
    if (cfg_.kind == ShapeKind::GeneralConcave) {
        Rng rg = rng.substream("g");
        init_mlp(store, prefix_ + ".g", cfg_.integrand, rg, weight_scale);
    }
    if (cfg_.mode == ShapeMode::Decoupled) {
        Rng rd = rng.substream("dh");
        init_mlp(store, prefix_ + ".dh", cfg_.aux, rd, weight_scale);
        if (cfg_.kind == ShapeKind::GeneralConcave) {
            Rng rd2 = rng.substream("dg");
            init_mlp(store, prefix_ + ".dg", cfg_.aux, rd2, weight_scale);
        }
    }
}

Integrand ShapeFn::graph_integrand(ParamLeaves& leaves, const std::string& net,
                                   bool tilted) const {
    const MlpSpec* spec =
        (net == "dh" || net == "dg") ? &cfg_.aux : &cfg_.integrand;
    const std::string full = prefix_ + "." + net;
    const double kappa = cfg_.kappa;
    return [spec, full, tilted, kappa, &leaves](const Mat& pts) {
        Var v = forward_mlp(*spec, leaves, full, Var::constant(pts));
        if (tilted && kappa != 0.0)
            v = cwise_mul_const(v, (kappa * pts.array()).exp().matrix());
        return v;
    };
}

IntegrandValues ShapeFn::value_integrand(const ParamStore& store,
                                         const std::string& net,
                                         bool tilted) const {
    const MlpSpec* spec =
        (net == "dh" || net == "dg") ? &cfg_.aux : &cfg_.integrand;
    const std::string full = prefix_ + "." + net;
    const double kappa = cfg_.kappa;
    return [spec, full, tilted, kappa, &store](const Vec& pts) {
        Mat in(1, pts.size());
        in.row(0) = pts.transpose();
        Vec out = forward_mlp_nograd(*spec, store, full, in).row(0).transpose();
        if (tilted && kappa != 0.0)
            out = out.cwiseProduct((kappa * pts.array()).exp().matrix());
        return out;
    };
}

Var ShapeFn::eval(ParamLeaves& leaves, const Var& xs) const {
    DoubleQuadSpec dq{cfg_.outer, cfg_.inner};
    switch (cfg_.kind) {
        case ShapeKind::MonotoneConcave:
            if (cfg_.mode == ShapeMode::EndToEnd)
                return double_integral_batch(graph_integrand(leaves, "h", false),
                                             xs, 0.0, dq, &counters);
            return integrate_cumulative_batch(graph_integrand(leaves, "dh", false),
                                              xs, cfg_.outer);
        case ShapeKind::AlphaTilted:
            if (cfg_.mode == ShapeMode::EndToEnd)
                return double_integral_batch(graph_integrand(leaves, "h", false),
                                             xs, cfg_.kappa, dq, &counters);
            return integrate_cumulative_batch(graph_integrand(leaves, "dh", false),
                                              xs, cfg_.outer);
        case ShapeKind::GeneralConcave: {
            for (Eigen::Index i = 0; i < xs.cols(); ++i) {
                const double x = xs.value()(0, i);
                if (x < -1e-9 || x > cfg_.x_max + 1e-9)
                    throw std::invalid_argument(
                        "general_concave input outside [0, x_max]");
            }
            Var mirrored = rsub_const(cfg_.x_max, xs);
            Var xm = Var::scalar(cfg_.x_max);
            if (cfg_.mode == ShapeMode::EndToEnd) {
                Integrand g = graph_integrand(leaves, "h", false);
                Integrand gh = graph_integrand(leaves, "g", false);
                Var pos = double_integral_batch(g, xs, 0.0, dq, &counters);
                Var full = double_integral_batch(gh, xm, 0.0, dq, &counters);
                Var part = double_integral_batch(gh, mirrored, 0.0, dq, &counters);
                return pos - (full - part);
            }
            Integrand dh = graph_integrand(leaves, "dh", false);
            Integrand dg = graph_integrand(leaves, "dg", false);
            Var pos = integrate_cumulative_batch(dh, xs, cfg_.outer);
            Var full = integrate_cumulative_batch(dg, xm, cfg_.outer);
            Var part = integrate_cumulative_batch(dg, mirrored, cfg_.outer);
            return pos - (full - part);
        }
    }
    throw std::logic_error("unreachable");
}

Vec ShapeFn::reduce_nograd(const ParamStore& store,
                           const BatchQuadLayout& layout, const std::string& net,
                           bool tilted) const {
    // stream in chunks so the widest audit batches stay in cache-sized slabs
    constexpr std::int64_t kChunk = 1 << 18;
    IntegrandValues f = value_integrand(store, net, tilted);
    const std::int64_t total = layout.points.size();
    Vec fvals(total);
    for (std::int64_t b = 0; b < total; b += kChunk) {
        const std::int64_t len = std::min(kChunk, total - b);
        fvals.segment(b, len) = f(layout.points.segment(b, len));
    }
    if (!fvals.allFinite())
        throw std::runtime_error("non-finite integrand value at a quadrature node");
    return quadrature_reduce_nograd(layout, fvals);
}

Vec ShapeFn::eval_nograd(const ParamStore& store, const Vec& xs) const {
    DoubleQuadSpec dq{cfg_.outer, cfg_.inner};
    switch (cfg_.kind) {
        case ShapeKind::MonotoneConcave:
        case ShapeKind::AlphaTilted: {
            const double kappa =
                cfg_.kind == ShapeKind::AlphaTilted ? cfg_.kappa : 0.0;
            if (cfg_.mode == ShapeMode::EndToEnd)
                return reduce_nograd(store,
                                     layout_double(dq, xs, kappa, &counters), "h",
                                     false);
            return reduce_nograd(store, layout_cumulative(cfg_.outer, xs), "dh",
                                 false);
        }
        case ShapeKind::GeneralConcave: {
            Vec mirrored = (cfg_.x_max - xs.array()).matrix();
            Vec xm = Vec::Constant(1, cfg_.x_max);
            if (cfg_.mode == ShapeMode::EndToEnd) {
                Vec pos = reduce_nograd(
                    store, layout_double(dq, xs, 0.0, &counters), "h", false);
                Vec full = reduce_nograd(
                    store, layout_double(dq, xm, 0.0, &counters), "g", false);
                Vec part = reduce_nograd(
                    store, layout_double(dq, mirrored, 0.0, &counters), "g",
                    false);
                return pos.array() - (full[0] - part.array());
            }
            Vec pos = reduce_nograd(store, layout_cumulative(cfg_.outer, xs),
                                    "dh", false);
            Vec full = reduce_nograd(store, layout_cumulative(cfg_.outer, xm),
                                     "dg", false);
            Vec part =
                reduce_nograd(store, layout_cumulative(cfg_.outer, mirrored),
                              "dg", false);
            return pos.array() - (full[0] - part.array());
        }
    }
    throw std::logic_error("unreachable");
}

double ShapeFn::eval_nograd(const ParamStore& store, double x) const {
    return eval_nograd(store, Vec::Constant(1, x))[0];
}

Var ShapeFn::consistency_penalty(ParamLeaves& leaves, const Var& xs) const {
    if (cfg_.mode != ShapeMode::Decoupled)
        throw std::logic_error("consistency penalty requires decoupled mode");
    switch (cfg_.kind) {
        case ShapeKind::MonotoneConcave: {
            Var d = forward_mlp(cfg_.aux, leaves, prefix_ + ".dh", xs);
            Var tail = integrate_tail_batch(graph_integrand(leaves, "h", false),
                                            xs, cfg_.inner, &counters);
            return square(d - tail);
        }
        case ShapeKind::AlphaTilted: {
            // the tilt rides inside the tail integrand here
            Var d = forward_mlp(cfg_.aux, leaves, prefix_ + ".dh", xs);
            Var tail = integrate_tail_batch(graph_integrand(leaves, "h", true),
                                            xs, cfg_.inner, &counters);
            return square(d - tail);
        }
        case ShapeKind::GeneralConcave: {
            Var dh = forward_mlp(cfg_.aux, leaves, prefix_ + ".dh", xs);
            Var th = integrate_tail_batch(graph_integrand(leaves, "h", false),
                                          xs, cfg_.inner, &counters);
            Var mirrored = rsub_const(cfg_.x_max, xs);
            Var dg = forward_mlp(cfg_.aux, leaves, prefix_ + ".dg", mirrored);
            Var tg = integrate_tail_batch(graph_integrand(leaves, "g", false),
                                          mirrored, cfg_.inner, &counters);
            return square(dh - th) + square(dg - tg);
        }
    }
    throw std::logic_error("unreachable");
}

Vec ShapeFn::aux_values_nograd(const ParamStore& store, const Vec& xs) const {
    Mat in(1, xs.size());
    in.row(0) = xs.transpose();
    return forward_mlp_nograd(cfg_.aux, store, prefix_ + ".dh", in)
        .row(0)
        .transpose();
}

Vec ShapeFn::tail_values_nograd(const ParamStore& store, const Vec& xs) const {
    const bool tilted = cfg_.kind == ShapeKind::AlphaTilted;
    return reduce_nograd(store, layout_tail(cfg_.inner, xs, &counters), "h",
                         tilted);
}

void ShapeFn::set_b_max(double b_max) {
    if (!(b_max > 0.0) || !std::isfinite(b_max))
        throw std::invalid_argument("b_max must be positive and finite");
    cfg_.inner.b_max = b_max;
    cfg_.outer.b_max = b_max;
}

void ShapeFn::set_x_max(double x_max) {
    if (!(x_max > 0.0) || !std::isfinite(x_max))
        throw std::invalid_argument("x_max must be positive and finite");
    cfg_.x_max = x_max;
}

}  // namespace sublearn
