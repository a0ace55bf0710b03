#pragma once

#include <optional>
#include <string>

#include "sublearn/quadrature.hpp"

namespace sublearn {

// kappa(alpha) = (1/k) * ln(1/alpha); the tilt constant of the second-order
// differential inequality that certifies alpha-submodularity up to |S| <= k
double kappa_for(double alpha, int cardinality_k);

enum class ShapeKind { MonotoneConcave, AlphaTilted, GeneralConcave };
enum class ShapeMode { EndToEnd, Decoupled };

ShapeKind shape_kind_from_string(const std::string& s);
std::string to_string(ShapeKind k);
ShapeMode shape_mode_from_string(const std::string& s);
std::string to_string(ShapeMode m);

struct ShapeFnConfig {
    ShapeKind kind = ShapeKind::MonotoneConcave;
    ShapeMode mode = ShapeMode::EndToEnd;
    // integrand networks: the (positive) second-derivative models
    MlpSpec integrand{1, {50, 50, 50}, 1, Activation::Rectifier,
                      Activation::Softplus};
    // derivative networks deployed in decoupled mode (rectified output)
    MlpSpec aux{1, {50, 50, 50}, 1, Activation::Rectifier,
                Activation::Rectifier};
    QuadratureSpec outer;  // cumulative integral over [0, x]
    QuadratureSpec inner;  // tail integral; inner.b_max is the truncation
    double kappa = 0.0;    // AlphaTilted only
    double x_max = 1.0;    // GeneralConcave only

    void validate() const;
};

// A trainable univariate function with a certified shape contract. Parameters
// live in an external ParamStore under this function's name prefix:
//   <prefix>.h  — primary integrand network (h for monotone, g for tilted)
//   <prefix>.g  — second integrand network (GeneralConcave only)
//   <prefix>.dh — deployed derivative network (decoupled mode)
//   <prefix>.dg — second derivative network (GeneralConcave decoupled)
class ShapeFn {
public:
    ShapeFn(ShapeFnConfig cfg, std::string prefix);

    void init_params(ParamStore& store, Rng rng, double weight_scale = 1.0) const;

    // batched evaluation at xs (a 1xM row); normalized so value(0) == 0
    Var eval(ParamLeaves& leaves, const Var& xs) const;
    Vec eval_nograd(const ParamStore& store, const Vec& xs) const;
    double eval_nograd(const ParamStore& store, double x) const;

    // decoupled mode: per-point squared residual between the deployed
    // derivative network and its defining tail integral, at query points xs
    Var consistency_penalty(ParamLeaves& leaves, const Var& xs) const;
    // residual diagnostics for the soft decoupled-consistency check
    Vec aux_values_nograd(const ParamStore& store, const Vec& xs) const;
    Vec tail_values_nograd(const ParamStore& store, const Vec& xs) const;

    const ShapeFnConfig& config() const { return cfg_; }
    const std::string& prefix() const { return prefix_; }
    void set_b_max(double b_max);
    void set_x_max(double x_max);

    mutable QuadCounters counters;

private:
    Integrand graph_integrand(ParamLeaves& leaves, const std::string& net,
                              bool tilted) const;
    IntegrandValues value_integrand(const ParamStore& store,
                                    const std::string& net, bool tilted) const;
    Vec reduce_nograd(const ParamStore& store, const BatchQuadLayout& layout,
                      const std::string& net, bool tilted) const;

    ShapeFnConfig cfg_;
    std::string prefix_;
};

}  // namespace sublearn
