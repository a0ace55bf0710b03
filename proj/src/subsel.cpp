#include "sublearn/subsel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sublearn {

Var sinkhorn(const Var& seed, double t, int iters) {
    if (seed.rows() != seed.cols())
        throw std::invalid_argument("sinkhorn seed must be square");
    if (!(t > 0.0)) throw std::invalid_argument("sinkhorn temperature must be > 0");
    if (iters < 0) throw std::invalid_argument("sinkhorn iterations must be >= 0");
    if (!seed.value().allFinite())
        throw std::invalid_argument("sinkhorn seed must be finite");
    // the row shift cancels in the first row normalization, so treating it
    // as a constant leaves gradients exact
    Mat shift = -seed.value().rowwise().maxCoeff();
    Var p = exp(mul_const(add_colwise(seed, Var::constant(shift)), 1.0 / t));
    for (int k = 0; k < iters; ++k) p = normalize_cols(normalize_rows(p));
    return p;
}

SoftPermutation make_soft_permutation(const Mat& seed, double t, int iters) {
    Var p = sinkhorn(Var::constant(seed), t, iters);
    return SoftPermutation{p.value(), t, iters};
}

bool is_hard_permutation(const Mat& p, std::vector<int>& perm_out, double tol) {
    const Eigen::Index n = p.rows();
    perm_out.assign(std::size_t(n), -1);
    std::vector<bool> used(std::size_t(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index j;
        if (p.row(i).maxCoeff(&j) < 1.0 - tol) return false;
        if (used[std::size_t(j)]) return false;
        used[std::size_t(j)] = true;
        perm_out[std::size_t(i)] = int(j);
    }
    return true;
}

SeedNetwork::SeedNetwork(MlpSpec embed, int max_subset, std::uint64_t seed)
    : embed_(std::move(embed)), max_subset_(max_subset) {
    embed_.validate();
    if (max_subset_ < 1)
        throw std::invalid_argument("max_subset must be >= 1");
    Rng rng(seed);
    Rng net_rng = rng.substream("gw");
    init_mlp(params_, "gw", embed_, net_rng);
    Rng pos_rng = rng.substream("gw.pos");
    Mat pos(embed_.output_width, max_subset_);
    const double scale = std::sqrt(1.0 / double(embed_.output_width));
    for (Eigen::Index i = 0; i < pos.rows(); ++i)
        for (Eigen::Index j = 0; j < pos.cols(); ++j)
            pos(i, j) = scale * pos_rng.normal();
    params_.add("gw.pos", std::move(pos));
}

Var SeedNetwork::seed_matrix(ParamLeaves& leaves, const Mat& zrows) const {
    const Eigen::Index n = zrows.rows();
    if (n > max_subset_)
        throw std::invalid_argument("subset larger than the position table");
    Var embeds = forward_mlp(embed_, leaves, "gw",
                             Var::constant(zrows.transpose()));  // emb x n
    Var positions = middle_cols(leaves("gw.pos"), 0, n);
    return matmul(transpose(embeds), positions);  // n x n
}

Mat SeedNetwork::seed_matrix_nograd(const Mat& zrows) const {
    const Eigen::Index n = zrows.rows();
    if (n > max_subset_)
        throw std::invalid_argument("subset larger than the position table");
    Mat embeds = forward_mlp_nograd(embed_, params_, "gw", zrows.transpose());
    return embeds.transpose() * params_.value("gw.pos").leftCols(n);
}

json SeedNetwork::checkpoint() const {
    json params;
    for (const auto& [name, entry] : params_.entries())
        params[name] = mat_to_json(entry.value);
    return json{{"embed", mlp_spec_to_json(embed_)},
                {"max_subset", max_subset_},
                {"params", std::move(params)}};
}

void SeedNetwork::restore(const json& j) {
    for (const auto& [name, payload] : j.at("params").items())
        params_.mutable_value(name) = mat_from_json(payload);
}

namespace {

void check_selection_model(const SetFnModel& model) {
    const ModelKind k = model.config().kind;
    if (k != ModelKind::Monotone && k != ModelKind::Alpha)
        throw std::invalid_argument(
            "sequence likelihoods need a monotone or alpha model");
}

// candidate zsum columns: zsum(prefix) + z_s for each candidate s
Mat candidate_zsums(const FeatureTable& table, const Vec& prefix_zsum,
                    const std::vector<int>& candidates) {
    Mat out(table.dim(), Eigen::Index(candidates.size()));
    for (std::size_t c = 0; c < candidates.size(); ++c)
        out.col(Eigen::Index(c)) =
            prefix_zsum + table.z.row(candidates[c]).transpose();
    return out;
}

}  // namespace

Var greedy_log_likelihood(const SetFnModel& model, ParamLeaves& leaves,
                          const FeatureTable& table, const ElementSet& universe,
                          const std::vector<int>& sequence, double tau) {
    check_selection_model(model);
    ElementSet uni = canonical_set(universe);
    table.check_ids(uni);
    if (sequence.empty()) throw std::invalid_argument("empty sequence");
    {
        ElementSet dedup(sequence.begin(), sequence.end());
        dedup = canonical_set(dedup);  // throws on repeats
        for (int id : dedup)
            if (!std::binary_search(uni.begin(), uni.end(), id))
                throw std::invalid_argument("sequence element outside universe");
    }

    Var ll = Var::scalar(0.0);
    Vec prefix_zsum = Vec::Zero(table.dim());
    std::vector<int> remaining = uni;
    for (int next : sequence) {
        Mat cands = candidate_zsums(table, prefix_zsum, remaining);
        Var scores =
            mul_const(model.value_batch(leaves, Var::constant(cands)), tau);
        const auto pos = std::find(remaining.begin(), remaining.end(), next);
        const Eigen::Index idx = pos - remaining.begin();
        ll = ll + col(scores, idx) - logsumexp_row(scores);
        prefix_zsum += table.z.row(next).transpose();
        remaining.erase(pos);
    }
    return ll;
}

Var soft_greedy_log_likelihood(const SetFnModel& model, ParamLeaves& leaves,
                               const FeatureTable& table,
                               const ElementSet& universe,
                               const ElementSet& subset, const Var& p,
                               double tau) {
    check_selection_model(model);
    ElementSet uni = canonical_set(universe);
    ElementSet sub = canonical_set(subset);
    table.check_ids(uni);
    for (int id : sub)
        if (!std::binary_search(uni.begin(), uni.end(), id))
            throw std::invalid_argument("subset element outside universe");
    const Eigen::Index n = Eigen::Index(sub.size());
    if (p.rows() != n || p.cols() != n)
        throw std::invalid_argument("permutation side must equal |S|");

    // at a numerically hard P consumed elements regain identities and the
    // exclusion form applies exactly
    std::vector<int> perm;
    if (is_hard_permutation(p.value(), perm)) {
        std::vector<int> sequence(sub.size());
        for (std::size_t j = 0; j < sub.size(); ++j)
            sequence[j] = sub[std::size_t(perm[j])];
        return greedy_log_likelihood(model, leaves, table, uni, sequence, tau);
    }

    Mat zrows(n, table.dim());
    for (Eigen::Index i = 0; i < n; ++i)
        zrows.row(i) = table.z.row(sub[std::size_t(i)]);
    Var soft_rows = matmul(p, Var::constant(zrows));  // n x d

    // competitor features: all of V, never excluded while P is soft
    Mat all_feats(table.dim(), Eigen::Index(uni.size()));
    for (std::size_t c = 0; c < uni.size(); ++c)
        all_feats.col(Eigen::Index(c)) = table.z.row(uni[c]).transpose();

    Var ll = Var::scalar(0.0);
    Var prefix;  // d x 1, starts at zero
    for (Eigen::Index j = 0; j < n; ++j) {
        Var soft_next = col(transpose(soft_rows), j);  // d x 1
        Var numerator_zsum =
            prefix.valid() ? prefix + soft_next : soft_next;  // d x 1
        Var competitors = prefix.valid()
                              ? add_colwise(Var::constant(all_feats), prefix)
                              : Var::constant(all_feats);
        Var batch = hcat({numerator_zsum, competitors});
        Var scores = mul_const(model.value_batch(leaves, batch), tau);
        Var numerator = col(scores, 0);
        Var denom = logsumexp_row(middle_cols(scores, 1, Eigen::Index(uni.size())));
        ll = ll + numerator - denom;
        prefix = numerator_zsum;
    }
    return ll;
}

std::vector<int> greedy_select(const SetFnModel& model, const FeatureTable& table,
                               const ElementSet& universe, int k) {
    ElementSet uni = canonical_set(universe);
    table.check_ids(uni);
    if (k > int(uni.size()))
        throw std::invalid_argument("k exceeds universe size");
    std::vector<int> picked;
    Vec prefix_zsum = Vec::Zero(table.dim());
    std::vector<int> remaining = uni;  // ascending: ties resolve to lowest id
    for (int step = 0; step < k; ++step) {
        Mat cands = candidate_zsums(table, prefix_zsum, remaining);
        Vec vals = model.values_nograd_zsums(cands);
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < vals.size(); ++i)
            if (vals[i] > vals[best]) best = i;
        const int chosen = remaining[std::size_t(best)];
        picked.push_back(chosen);
        prefix_zsum += table.z.row(chosen).transpose();
        remaining.erase(remaining.begin() + best);
    }
    return picked;
}

double mean_jaccard_of_model(const SetFnModel& model, const FeatureTable& table,
                             const std::vector<UniverseSubsetInstance>& insts) {
    std::vector<std::vector<int>> seqs;
    std::vector<ElementSet> tests;
    for (const auto& inst : insts) {
        seqs.push_back(
            greedy_select(model, table, inst.universe, int(inst.subset.size())));
        tests.push_back(inst.subset);
    }
    return mean_jaccard(seqs, tests);
}

double mean_ndcg_of_model(const SetFnModel& model, const FeatureTable& table,
                          const std::vector<UniverseSubsetInstance>& insts) {
    std::vector<std::vector<int>> seqs;
    std::vector<ElementSet> tests;
    for (const auto& inst : insts) {
        const int depth = std::min<int>(10, int(inst.universe.size()));
        seqs.push_back(greedy_select(model, table, inst.universe, depth));
        tests.push_back(inst.subset);
    }
    return mean_ndcg_at_10(seqs, tests);
}

double random_selection_mjc(const std::vector<UniverseSubsetInstance>& insts,
                            std::uint64_t seed, int draws) {
    Rng root = Rng(seed).substream("random_baseline");
    std::vector<std::vector<int>> seqs;
    std::vector<ElementSet> tests;
    for (std::size_t i = 0; i < insts.size(); ++i) {
        for (int d = 0; d < draws; ++d) {
            Rng rng = root.substream("draw", i * 1000003ull + std::uint64_t(d));
            std::vector<int> pool = insts[i].universe;
            rng.shuffle(pool);
            pool.resize(insts[i].subset.size());
            seqs.push_back(pool);
            tests.push_back(insts[i].subset);
        }
    }
    return mean_jaccard(seqs, tests);
}

void SelectionConfig::validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("tau must be > 0");
    if (!(sinkhorn_t > 0.0)) throw std::invalid_argument("sinkhorn t must be > 0");
    if (sinkhorn_iters < 1 || epochs < 0 || batch_size < 1 || outer_steps < 1 ||
        inner_steps < 1)
        throw std::invalid_argument("invalid selection config");
}

namespace {

// b_max proxy: training subsets plus the heaviest candidate of each universe
std::vector<ElementSet> calibration_sets(
    const FeatureTable& table,
    const std::vector<UniverseSubsetInstance>& train) {
    std::vector<ElementSet> sets;
    sets.reserve(train.size());
    for (const auto& inst : train) {
        ElementSet s = inst.subset;
        int heaviest = -1;
        double best = -1.0;
        for (int id : inst.universe) {
            if (std::binary_search(s.begin(), s.end(), id)) continue;
            const double m = table.z.row(id).sum();
            if (m > best) {
                best = m;
                heaviest = id;
            }
        }
        if (heaviest >= 0) s.push_back(heaviest);
        sets.push_back(canonical_set(s));
    }
    return sets;
}

void recalibrate(SetFnModel& model, const FeatureTable& table,
                 const std::vector<ElementSet>& sets) {
    auto limits = model.observed_limits(table, sets);
    limits.b_max *= 1.1;  // headroom for soft-prefix candidates
    limits.x_max *= 1.1;
    model.set_limits(limits);
}

void restore_model(SetFnModel& model, const json& state) {
    SetFnModel loaded = SetFnModel::from_checkpoint(state);
    model.params() = loaded.params();
    model.set_limits({loaded.config().inner.b_max, loaded.config().x_max});
}

struct BestState {
    double mjc = -1.0;
    int epoch = -1;
    json model_state;
    json adversary_state;
};

}  // namespace

SelectionTrainResult train_maxmin(
    SetFnModel& model, SeedNetwork& adversary, const FeatureTable& table,
    const std::vector<UniverseSubsetInstance>& train,
    const std::vector<UniverseSubsetInstance>& dev, const SelectionConfig& cfg) {
    cfg.validate();
    check_selection_model(model);
    if (train.empty()) throw std::invalid_argument("empty training set");

    SelectionTrainResult result;
    AdamOptimizer adam_theta({cfg.lr_theta, 0.9, 0.999, 1e-8, cfg.weight_decay});
    AdamOptimizer adam_omega({cfg.lr_omega, 0.9, 0.999, 1e-8, cfg.weight_decay});
    Rng root(cfg.seed);
    const auto calib = calibration_sets(table, train);
    BestState best;
    json last_model = model.checkpoint();
    json last_adv = adversary.checkpoint();

    long long cycle = 0;  // position within the theta/omega alternation
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto tic = std::chrono::steady_clock::now();
        recalibrate(model, table, calib);
        std::vector<int> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = root.substream("shuffle", std::uint64_t(epoch));
        shuffle_rng.shuffle(order);

        double obj_acc = 0.0;
        long long obj_count = 0;
        bool diverged = false;
        for (std::size_t base = 0; base < order.size() && !diverged;
             base += std::size_t(cfg.batch_size)) {
            const std::size_t len =
                std::min<std::size_t>(cfg.batch_size, order.size() - base);
            const bool omega_turn =
                (cycle % (cfg.outer_steps + cfg.inner_steps)) >= cfg.outer_steps;
            ++cycle;

            ParamLeaves model_leaves(model.params());
            ParamLeaves adv_leaves(adversary.params());
            Var mean_ll;
            for (std::size_t i = 0; i < len; ++i) {
                const auto& inst = train[std::size_t(order[base + i])];
                Mat zrows(Eigen::Index(inst.subset.size()), table.dim());
                for (Eigen::Index r = 0; r < zrows.rows(); ++r)
                    zrows.row(r) = table.z.row(inst.subset[std::size_t(r)]);
                Var seed = adversary.seed_matrix(adv_leaves, zrows);
                Var p = sinkhorn(seed, cfg.sinkhorn_t, cfg.sinkhorn_iters);
                Var ll = soft_greedy_log_likelihood(
                    model, model_leaves, table, inst.universe, inst.subset, p,
                    cfg.tau);
                mean_ll = mean_ll.valid() ? mean_ll + ll : ll;
            }
            mean_ll = mul_const(mean_ll, 1.0 / double(len));
            if (!std::isfinite(mean_ll.scalar_value())) {
                diverged = true;
                break;
            }
            obj_acc += mean_ll.scalar_value();
            ++obj_count;

            if (omega_turn) {
                backward(mean_ll);  // adversary descends the likelihood
                if (!adam_omega.step(adversary.params(), adv_leaves.grads()))
                    diverged = true;
            } else {
                Var loss = mul_const(mean_ll, -1.0);
                backward(loss);
                if (!adam_theta.step(model.params(), model_leaves.grads()))
                    diverged = true;
            }
        }

        if (diverged) {
            restore_model(model, last_model);
            adversary.restore(last_adv);
            result.diverged = true;
            break;
        }
        last_model = model.checkpoint();
        last_adv = adversary.checkpoint();

        SelectionEpoch ep;
        ep.epoch = epoch;
        ep.objective = obj_count ? obj_acc / double(obj_count) : 0.0;
        ep.dev_mjc = dev.empty() ? 0.0
                                 : mean_jaccard_of_model(model, table, dev);
        ep.seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - tic)
                         .count();
        result.epochs.push_back(ep);
        if (ep.dev_mjc > best.mjc) {
            best.mjc = ep.dev_mjc;
            best.epoch = epoch;
            best.model_state = last_model;
            best.adversary_state = last_adv;
        }
    }

    if (best.epoch >= 0) {
        restore_model(model, best.model_state);
        adversary.restore(best.adversary_state);
        result.best_epoch = best.epoch;
        result.best_dev_mjc = best.mjc;
    }
    return result;
}

SelectionTrainResult train_sumperm(
    SetFnModel& model, const FeatureTable& table,
    const std::vector<UniverseSubsetInstance>& train,
    const std::vector<UniverseSubsetInstance>& dev, const SelectionConfig& cfg) {
    cfg.validate();
    check_selection_model(model);
    for (const auto& inst : train)
        if (inst.subset.size() > 6)
            throw std::invalid_argument(
                "exhaustive-permutation training handles |S| <= 6 only");

    SelectionTrainResult result;
    AdamOptimizer adam({cfg.lr_theta, 0.9, 0.999, 1e-8, cfg.weight_decay});
    Rng root(cfg.seed);
    const auto calib = calibration_sets(table, train);
    BestState best;
    json last_model = model.checkpoint();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto tic = std::chrono::steady_clock::now();
        recalibrate(model, table, calib);
        std::vector<int> order(train.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = root.substream("shuffle", std::uint64_t(epoch));
        shuffle_rng.shuffle(order);

        double obj_acc = 0.0;
        long long obj_count = 0;
        bool diverged = false;
        for (std::size_t base = 0; base < order.size() && !diverged;
             base += std::size_t(cfg.batch_size)) {
            const std::size_t len =
                std::min<std::size_t>(cfg.batch_size, order.size() - base);
            ParamLeaves leaves(model.params());
            Var mean_obj;
            for (std::size_t i = 0; i < len; ++i) {
                const auto& inst = train[std::size_t(order[base + i])];
                std::vector<int> perm = inst.subset;  // ascending start
                std::vector<Var> lls;
                do {
                    lls.push_back(greedy_log_likelihood(
                        model, leaves, table, inst.universe, perm, cfg.tau));
                } while (std::next_permutation(perm.begin(), perm.end()));
                Var obj = logsumexp_row(hcat(lls));
                mean_obj = mean_obj.valid() ? mean_obj + obj : obj;
            }
            mean_obj = mul_const(mean_obj, 1.0 / double(len));
            if (!std::isfinite(mean_obj.scalar_value())) {
                diverged = true;
                break;
            }
            obj_acc += mean_obj.scalar_value();
            ++obj_count;
            Var loss = mul_const(mean_obj, -1.0);
            backward(loss);
            if (!adam.step(model.params(), leaves.grads())) diverged = true;
        }

        if (diverged) {
            restore_model(model, last_model);
            result.diverged = true;
            break;
        }
        last_model = model.checkpoint();

        SelectionEpoch ep;
        ep.epoch = epoch;
        ep.objective = obj_count ? obj_acc / double(obj_count) : 0.0;
        ep.dev_mjc = dev.empty() ? 0.0
                                 : mean_jaccard_of_model(model, table, dev);
        ep.seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - tic)
                         .count();
        result.epochs.push_back(ep);
        if (ep.dev_mjc > best.mjc) {
            best.mjc = ep.dev_mjc;
            best.epoch = epoch;
            best.model_state = last_model;
        }
    }

    if (best.epoch >= 0) {
        restore_model(model, best.model_state);
        result.best_epoch = best.epoch;
        result.best_dev_mjc = best.mjc;
    }
    return result;
}

}  // namespace sublearn
