#pragma once

#include <span>

#include "sublearn/evalkit.hpp"
#include "sublearn/planted.hpp"
#include "sublearn/setfn.hpp"

namespace sublearn {

struct RegressionConfig {
    int epochs = 400;
    int batch_size = 66;
    double lr = 2e-3;
    double weight_decay = 1e-4;
    double rho = 1.0;        // consistency-regularizer weight (decoupled mode)
    int select_window = 10;  // pick best dev RMSE among the final N epochs
    std::uint64_t seed = 0;

    void validate() const;
};

enum class TrainStatus { Ok, Diverged };

struct EpochMetrics {
    int epoch = 0;
    double train_rmse = 0.0;
    double dev_rmse = 0.0;
};

struct RegressionResult {
    TrainStatus status = TrainStatus::Ok;
    std::vector<EpochMetrics> metrics;
    int best_epoch = -1;
    double best_dev_rmse = std::numeric_limits<double>::infinity();
    double test_rmse = std::numeric_limits<double>::quiet_NaN();
    // state after the last completed epoch (pre best-window restore), with
    // optimizer moments; enough to resume bit-exactly under the same seed
    json final_state;
};

// resume payload produced in RegressionResult::final_state
struct RegressionResume {
    int start_epoch = 0;
    json adam_state;  // empty for a fresh run

    static RegressionResume from_final_state(const json& state);
};

// mean squared error over the batch
Var loss_plain(const SetFnModel& model, ParamLeaves& leaves,
               const FeatureTable& table,
               std::span<const SetValueInstance> batch);

// data term plus rho times the consistency residuals evaluated at exactly
// the recursion inputs of the current batch; bit-compatible with loss_plain
// at rho = 0
Var loss_decoupled(const SetFnModel& model, ParamLeaves& leaves,
                   const FeatureTable& table,
                   std::span<const SetValueInstance> batch, double rho);

Vec predict(const SetFnModel& model, const FeatureTable& table,
            const std::vector<ElementSet>& sets);
double evaluate_rmse(const SetFnModel& model, const FeatureTable& table,
                     const std::vector<ElementSet>& sets, const Vec& targets);

// Trains on fold 0, selects by dev RMSE (fold 1) within the final
// `select_window` epochs, reports test RMSE (fold 2) of the selected
// checkpoint. The quadrature truncation point (and x_max) is recalibrated
// from the train fold at the start of every epoch. On divergence the model
// reverts to the last finite checkpoint.
RegressionResult train_regression(SetFnModel& model, const FeatureTable& table,
                                  const SetValueDataset& dataset,
                                  const RegressionConfig& cfg,
                                  const RegressionResume* resume = nullptr);

}  // namespace sublearn
