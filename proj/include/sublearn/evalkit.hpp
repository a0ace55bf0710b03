#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sublearn/planted.hpp"
#include "sublearn/setfn.hpp"

namespace sublearn {

double rmse(const Vec& predictions, const Vec& targets);
double rmse(const std::vector<double>& predictions,
            const std::vector<double>& targets);

// mean over test sets T of |S'_{<=|T|} ∩ T| / |S'_{<=|T|} ∪ T|
double mean_jaccard(const std::vector<std::vector<int>>& predicted_sequences,
                    const std::vector<ElementSet>& test_sets);

// binary-relevance DCG over the first 10 positions, log2(position+1)
// discount, normalized by the ideal ranking of min(|T|,10) ones
double ndcg_at_10(const std::vector<int>& predicted_sequence,
                  const ElementSet& relevant);
double mean_ndcg_at_10(const std::vector<std::vector<int>>& predicted_sequences,
                       const std::vector<ElementSet>& test_sets);

struct AuditReport {
    std::string property;
    long long samples = 0;
    double max_violation = 0.0;
    double violation_rate = 0.0;
    double tolerance = 0.0;
    bool pass = false;

    json to_json() const;
};

// batched set-value oracle shared by model and planted-function audits
using BatchSetValues =
    std::function<Vec(const std::vector<ElementSet>& sets)>;

BatchSetValues batch_values_for(const SetFnModel& model,
                                const FeatureTable& table);
BatchSetValues batch_values_for(const PlantedFn& fn, const FeatureTable& table);

struct ChainAuditConfig {
    int universe = 0;          // ground-set size to sample from
    long long samples = 10000;
    double alpha = 1.0;
    int cardinality_k = 0;     // 0 means |T| may grow to the universe size
    std::uint64_t seed = 0;
    double tolerance = 1e-6;
    double mono_tolerance = 1e-9;
    bool nonempty_base = true;  // sample S nonempty (log-domain functions)
};

struct ChainAuditReports {
    AuditReport submodular;    // max over chains of alpha*F(s|T) - F(s|S)
    AuditReport monotonicity;  // max over chains of -F(s|S)
};

// random chains S ⊂ T ⊆ V with |T| <= k and s ∉ T
ChainAuditReports audit_submodular(const BatchSetValues& values,
                                   const ChainAuditConfig& cfg);

// max positive centered second difference on a uniform grid, h^2-scaled
AuditReport audit_concave(const std::function<double(double)>& f, double lo,
                          double hi, int grid, double tolerance);

// non-decreasing on a uniform grid
AuditReport audit_monotone(const std::function<double(double)>& f, double lo,
                           double hi, int grid, double tolerance);

// second-order differential inequality of the tilted shape functions:
// (f(x+2h) - 2 f(x+h) + f(x)) / h^2 <= kappa * (f(x+h) - f(x-h)) / (2h) + tol
AuditReport audit_alpha_inequality(const std::function<double(double)>& f,
                                   double kappa, double lo, double hi, int grid,
                                   double h, double tolerance);

}  // namespace sublearn
