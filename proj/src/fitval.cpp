#include "sublearn/fitval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sublearn {

void RegressionConfig::validate() const {
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (rho < 0) throw std::invalid_argument("rho must be >= 0");
}

namespace {

json adam_state_to_json(const AdamOptimizer& opt) {
    json j;
    j["t"] = opt.steps_taken();
    json m, v;
    for (const auto& [name, mv] : opt.state()) {
        m[name] = mat_to_json(mv.first);
        v[name] = mat_to_json(mv.second);
    }
    j["m"] = std::move(m);
    j["v"] = std::move(v);
    return j;
}

void adam_state_from_json(AdamOptimizer& opt, const json& j) {
    std::map<std::string, std::pair<Mat, Mat>> st;
    for (const auto& [name, payload] : j.at("m").items())
        st[name].first = mat_from_json(payload);
    for (const auto& [name, payload] : j.at("v").items())
        st[name].second = mat_from_json(payload);
    opt.restore(j.at("t").get<std::int64_t>(), std::move(st));
}

Var batch_value(const SetFnModel& model, ParamLeaves& leaves,
                const FeatureTable& table,
                std::span<const SetValueInstance> batch,
                SetFnModel::EvalTrace* trace) {
    if (batch.empty()) throw std::invalid_argument("empty batch");
    Mat zsums(table.dim(), Eigen::Index(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i)
        zsums.col(Eigen::Index(i)) = table.zsum(batch[i].s);
    return model.value_batch(leaves, Var::constant(std::move(zsums)), trace);
}

Var mse_of(const Var& preds, std::span<const SetValueInstance> batch) {
    Mat targets(1, Eigen::Index(batch.size()));
    for (std::size_t i = 0; i < batch.size(); ++i)
        targets(0, Eigen::Index(i)) = batch[i].y;
    return mean(square(Var::constant(std::move(targets)) - preds));
}

}  // namespace

Var loss_plain(const SetFnModel& model, ParamLeaves& leaves,
               const FeatureTable& table,
               std::span<const SetValueInstance> batch) {
    Var preds = batch_value(model, leaves, table, batch, nullptr);
    if (!preds.value().allFinite())
        throw std::runtime_error("non-finite model output in loss");
    return mse_of(preds, batch);
}

Var loss_decoupled(const SetFnModel& model, ParamLeaves& leaves,
                   const FeatureTable& table,
                   std::span<const SetValueInstance> batch, double rho) {
    if (rho == 0.0) return loss_plain(model, leaves, table, batch);
    SetFnModel::EvalTrace trace;
    Var preds = batch_value(model, leaves, table, batch, &trace);
    if (!preds.value().allFinite())
        throw std::runtime_error("non-finite model output in loss");
    Var data = mse_of(preds, batch);
    Var penalty = mean(model.consistency_penalties(leaves, trace));
    return data + mul_const(penalty, rho);
}

Vec predict(const SetFnModel& model, const FeatureTable& table,
            const std::vector<ElementSet>& sets) {
    return model.values_nograd(table, sets);
}

double evaluate_rmse(const SetFnModel& model, const FeatureTable& table,
                     const std::vector<ElementSet>& sets, const Vec& targets) {
    return rmse(predict(model, table, sets), targets);
}

RegressionResume RegressionResume::from_final_state(const json& state) {
    RegressionResume r;
    r.start_epoch = state.at("epoch").get<int>() + 1;
    r.adam_state = state.at("adam");
    return r;
}

RegressionResult train_regression(SetFnModel& model, const FeatureTable& table,
                                  const SetValueDataset& dataset,
                                  const RegressionConfig& cfg,
                                  const RegressionResume* resume) {
    cfg.validate();
    RegressionResult result;

    const auto train_idx = dataset.fold_indices(0);
    const auto dev_sets = dataset.fold_sets(1);
    const auto test_sets = dataset.fold_sets(2);
    const Vec dev_y = dataset.fold_targets(1);
    const Vec test_y = dataset.fold_targets(2);
    const auto train_sets = dataset.fold_sets(0);
    const Vec train_y = dataset.fold_targets(0);
    if (train_idx.empty()) throw std::invalid_argument("empty train fold");

    const bool decoupled = model.config().mode == ShapeMode::Decoupled;
    AdamOptimizer adam({cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
    Rng root(cfg.seed);

    // (epoch, dev rmse, checkpoint) ring over the selection window
    struct Snapshot {
        int epoch;
        double dev;
        json state;
    };
    std::vector<Snapshot> window;
    json last_good = model.checkpoint();

    int start_epoch = 0;
    if (resume) {
        start_epoch = resume->start_epoch;
        if (!resume->adam_state.empty())
            adam_state_from_json(adam, resume->adam_state);
    }
    model.calibrate_limits(table, train_sets);

    auto restore = [&](const json& state) {
        SetFnModel loaded = SetFnModel::from_checkpoint(state);
        model.params() = loaded.params();
        model.set_limits({loaded.config().inner.b_max, loaded.config().x_max});
    };

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        model.set_limits(model.observed_limits(table, train_sets));

        std::vector<int> order = train_idx;
        Rng shuffle_rng = root.substream("shuffle", std::uint64_t(epoch));
        shuffle_rng.shuffle(order);

        bool diverged = false;
        for (std::size_t base = 0; base < order.size() && !diverged;
             base += std::size_t(cfg.batch_size)) {
            const std::size_t len =
                std::min<std::size_t>(cfg.batch_size, order.size() - base);
            std::vector<SetValueInstance> batch(len);
            for (std::size_t i = 0; i < len; ++i)
                batch[i] = dataset.instances[order[base + i]];

            ParamLeaves leaves(model.params());
            Var loss;
            try {
                loss = decoupled
                           ? loss_decoupled(model, leaves, table, batch, cfg.rho)
                           : loss_plain(model, leaves, table, batch);
            } catch (const std::runtime_error&) {
                diverged = true;
                break;
            }
            if (!std::isfinite(loss.scalar_value())) {
                diverged = true;
                break;
            }
            backward(loss);
            if (!adam.step(model.params(), leaves.grads())) {
                diverged = true;
                break;
            }
        }
        if (diverged) {
            restore(last_good);
            result.status = TrainStatus::Diverged;
            break;
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.train_rmse = evaluate_rmse(model, table, train_sets, train_y);
        em.dev_rmse = evaluate_rmse(model, table, dev_sets, dev_y);
        result.metrics.push_back(em);
        if (!std::isfinite(em.train_rmse) || !std::isfinite(em.dev_rmse)) {
            restore(last_good);
            result.status = TrainStatus::Diverged;
            break;
        }
        last_good = model.checkpoint();

        window.push_back({epoch, em.dev_rmse, last_good});
        if (int(window.size()) > cfg.select_window)
            window.erase(window.begin());

        result.final_state = json{{"epoch", epoch},
                                  {"model", last_good},
                                  {"adam", adam_state_to_json(adam)}};
    }

    if (!window.empty()) {
        const auto best = std::min_element(
            window.begin(), window.end(),
            [](const Snapshot& a, const Snapshot& b) { return a.dev < b.dev; });
        restore(best->state);
        result.best_epoch = best->epoch;
        result.best_dev_rmse = best->dev;
    }
    if (!test_sets.empty())
        result.test_rmse = evaluate_rmse(model, table, test_sets, test_y);
    return result;
}

}  // namespace sublearn
