#pragma once

#include "sublearn/evalkit.hpp"
#include "sublearn/planted.hpp"
#include "sublearn/setfn.hpp"

namespace sublearn {

// k alternating row/column normalizations of exp(B/t); differentiable in B.
// Rows of B are max-shifted before the exponential to avoid overflow.
Var sinkhorn(const Var& seed, double t, int iters);

struct SoftPermutation {
    Mat p;
    double t = 0.5;
    int iters = 50;
};
SoftPermutation make_soft_permutation(const Mat& seed, double t, int iters);

// numerically hard permutation matrix: every row has one entry >= 1 - tol
// and the argmax columns are distinct
bool is_hard_permutation(const Mat& p, std::vector<int>& perm_out,
                         double tol = 1e-9);

// Seed-matrix generator G_omega, shared across instances: element embeddings
// from a small network, scored against learned position embeddings.
class SeedNetwork {
public:
    SeedNetwork(MlpSpec embed, int max_subset, std::uint64_t seed);

    // zrows: |S| x d feature rows; result |S| x |S|
    Var seed_matrix(ParamLeaves& leaves, const Mat& zrows) const;
    Mat seed_matrix_nograd(const Mat& zrows) const;

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const MlpSpec& embed_spec() const { return embed_; }
    int max_subset() const { return max_subset_; }

    json checkpoint() const;
    void restore(const json& j);

private:
    MlpSpec embed_;
    int max_subset_;
    ParamStore params_;
};

// log Pr of selecting `sequence` in order from `universe`:
//   sum_j [ tau * F(prefix + seq_j) - logsumexp_{s in V \ prefix} tau * F(prefix + s) ]
Var greedy_log_likelihood(const SetFnModel& model, ParamLeaves& leaves,
                          const FeatureTable& table, const ElementSet& universe,
                          const std::vector<int>& sequence, double tau);

// Soft-permutation relaxation: step j consumes row j of P Z_S. Competitor
// terms run over all of V without exclusion while P is soft; at a hard P the
// computation switches to the exclusion form and equals the hard likelihood.
Var soft_greedy_log_likelihood(const SetFnModel& model, ParamLeaves& leaves,
                               const FeatureTable& table,
                               const ElementSet& universe,
                               const ElementSet& subset, const Var& p,
                               double tau);

// deterministic greedy argmax sequence, lowest element id on ties
std::vector<int> greedy_select(const SetFnModel& model, const FeatureTable& table,
                               const ElementSet& universe, int k);

double mean_jaccard_of_model(const SetFnModel& model, const FeatureTable& table,
                             const std::vector<UniverseSubsetInstance>& insts);
double mean_ndcg_of_model(const SetFnModel& model, const FeatureTable& table,
                          const std::vector<UniverseSubsetInstance>& insts);
// expected prefix-Jaccard of uniformly random orderings, sampled
double random_selection_mjc(const std::vector<UniverseSubsetInstance>& insts,
                            std::uint64_t seed, int draws = 64);

struct SelectionConfig {
    double tau = 1.0;
    double sinkhorn_t = 0.5;
    int sinkhorn_iters = 50;
    int outer_steps = 5;  // model (theta) updates per alternation cycle
    int inner_steps = 1;  // adversary (omega) updates per cycle
    int epochs = 30;
    int batch_size = 16;
    double lr_theta = 2e-3;
    double lr_omega = 2e-3;
    double weight_decay = 1e-4;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SelectionEpoch {
    int epoch = 0;
    double objective = 0.0;  // mean train log-likelihood
    double dev_mjc = 0.0;
    double seconds = 0.0;
};

struct SelectionTrainResult {
    bool diverged = false;
    std::vector<SelectionEpoch> epochs;
    int best_epoch = -1;
    double best_dev_mjc = 0.0;
};

// Permutation-adversarial training: the seed network searches for orderings
// that depress the likelihood while the model maximizes it. Returns the
// best-dev-MJC checkpoint observed.
SelectionTrainResult train_maxmin(
    SetFnModel& model, SeedNetwork& adversary, const FeatureTable& table,
    const std::vector<UniverseSubsetInstance>& train,
    const std::vector<UniverseSubsetInstance>& dev, const SelectionConfig& cfg);

// Reference trainer maximizing log sum over all |S|! permutations of the
// sequence likelihood; exhaustive, for |S| <= 6 only.
SelectionTrainResult train_sumperm(
    SetFnModel& model, const FeatureTable& table,
    const std::vector<UniverseSubsetInstance>& train,
    const std::vector<UniverseSubsetInstance>& dev, const SelectionConfig& cfg);

}  // namespace sublearn
