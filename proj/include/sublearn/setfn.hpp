#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "sublearn/shapefn.hpp"

namespace sublearn {

using json = nlohmann::json;
using ElementSet = std::vector<int>;

// sorted ascending, duplicates rejected
ElementSet canonical_set(ElementSet s);

// Ground set with one non-negative feature vector per element; element ids
// are row indices.
struct FeatureTable {
    Mat z;  // n x d

    FeatureTable() = default;
    explicit FeatureTable(Mat features);

    int count() const { return int(z.rows()); }
    int dim() const { return int(z.cols()); }

    void check_ids(const ElementSet& s) const;
    // sum of feature rows, accumulated in ascending element-id order
    Vec zsum(const ElementSet& s) const;
    // column j = zsum of sets[j]
    Mat zsum_matrix(const std::vector<ElementSet>& sets) const;
};

FeatureTable read_features_csv(const std::string& path);
void write_features_csv(const FeatureTable& table, const std::string& path);

// m(S) = sum_{s in S} w . z_s
Var modular_value(ParamLeaves& leaves, const std::string& weight_name,
                  const FeatureTable& table, const ElementSet& s);
double modular_value_nograd(const Vec& w, const FeatureTable& table,
                            const ElementSet& s);

enum class ModelKind { Monotone, Alpha, NonMonotone, SubMix, FixedDsf };
ModelKind model_kind_from_string(const std::string& s);
std::string to_string(ModelKind k);

struct SetFnModelConfig {
    ModelKind kind = ModelKind::Monotone;
    int feature_dim = 10;
    int n_steps = 2;  // recursion depth N
    ShapeMode mode = ShapeMode::EndToEnd;
    MlpSpec integrand{1, {50, 50, 50}, 1, Activation::Rectifier,
                      Activation::Softplus};
    MlpSpec aux{1, {50, 50, 50}, 1, Activation::Rectifier,
                Activation::Rectifier};
    QuadratureSpec outer{QuadRule::ClenshawCurtis, 33, 1.0};
    QuadratureSpec inner{QuadRule::ClenshawCurtis, 33, 1.0};
    double alpha = 1.0;       // Alpha kind
    int cardinality_k = 1;    // Alpha kind
    double x_max = 1.0;       // NonMonotone kind
    double lambda_init = 0.5;
    bool lambda_frozen = false;
    bool share_modular_weights = false;
    double init_weight_scale = 1.0;

    void validate() const;
    json to_json() const;
    static SetFnModelConfig from_json(const json& j);
};

// Recursion structure shared by the trainable kinds:
//   F^0 = m^0(S)                             (Monotone, FixedDsf)
//   F^0 = phihat(m^0(S))                     (Alpha)
//   F^n = phi(lambda F^{n-1} + (1-lambda) m^n(S))
//   F   = psi(m(S))                          (NonMonotone)
class SetFnModel {
public:
    struct EvalTrace {
        std::vector<Var> phi_inputs;  // G^(n) rows, n = 1..N
        Var alpha_input;              // m^0 row (Alpha kind)
        Var psi_input;                // clamped m row (NonMonotone kind)
    };

    struct Flags {
        long long cardinality_exceeded = 0;  // |S| > k on an Alpha model
        long long psi_clamps = 0;            // m(S) > x_max
        long long submix_domain = 0;         // non-positive inner log argument
    };

    static SetFnModel create(SetFnModelConfig cfg, std::uint64_t seed);

    // graph evaluation over a batch of sets given as zsum columns (d x M)
    Var value_batch(ParamLeaves& leaves, const Var& zsums,
                    EvalTrace* trace = nullptr) const;
    Var value(ParamLeaves& leaves, const FeatureTable& table,
              const ElementSet& s) const;
    Var marginal_gain(ParamLeaves& leaves, const FeatureTable& table,
                      const ElementSet& s_without, int element) const;

    // value-only paths
    Vec values_nograd_zsums(const Mat& zsums) const;
    Vec values_nograd(const FeatureTable& table,
                      const std::vector<ElementSet>& sets) const;
    double value_nograd(const FeatureTable& table, const ElementSet& s) const;
    double marginal_gain_nograd(const FeatureTable& table,
                                const ElementSet& s_without, int element) const;

    // decoupled-mode regularizer: per-instance sum of squared consistency
    // residuals at exactly the recursion inputs recorded in the trace
    Var consistency_penalties(ParamLeaves& leaves, const EvalTrace& trace) const;

    // per-epoch recalibration of the quadrature truncation point (and x_max
    // for the non-monotone kind) from the inputs the model actually sees
    struct Limits {
        double b_max = 1.0;
        double x_max = 1.0;
    };
    Limits observed_limits(const FeatureTable& table,
                           const std::vector<ElementSet>& sets) const;
    void set_limits(const Limits& limits);
    void calibrate_limits(const FeatureTable& table,
                          const std::vector<ElementSet>& sets, int rounds = 2);

    double lambda_value() const;
    const SetFnModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const ShapeFn* phi() const { return phi_ ? &*phi_ : nullptr; }
    const ShapeFn* phihat() const { return phihat_ ? &*phihat_ : nullptr; }
    const ShapeFn* psi() const { return psi_ ? &*psi_ : nullptr; }
    Flags& flags() const { return flags_; }

    json checkpoint() const;
    static SetFnModel from_checkpoint(const json& j);

    std::string modular_weight_name(int step) const;

private:
    SetFnModel() = default;
    Var lambda_var(ParamLeaves& leaves) const;
    Var msum_row(ParamLeaves& leaves, int step, const Var& zsums) const;
    Var submix_value(ParamLeaves& leaves, const Var& msum) const;

    SetFnModelConfig cfg_;
    ParamStore params_;
    std::optional<ShapeFn> phi_;
    std::optional<ShapeFn> phihat_;
    std::optional<ShapeFn> psi_;
    mutable Flags flags_;
};

// json <-> dense matrix helpers shared by checkpoints and reports
json mat_to_json(const Mat& m);
Mat mat_from_json(const json& j);
json mlp_spec_to_json(const MlpSpec& spec);
MlpSpec mlp_spec_from_json(const json& j);

}  // namespace sublearn
