#include "sublearn/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

namespace sublearn {

double rmse(const Vec& predictions, const Vec& targets) {
    if (predictions.size() != targets.size() || predictions.size() == 0)
        throw std::invalid_argument("rmse needs equal nonzero lengths");
    return std::sqrt((predictions - targets).squaredNorm() /
                     double(predictions.size()));
}

double rmse(const std::vector<double>& predictions,
            const std::vector<double>& targets) {
    return rmse(Eigen::Map<const Vec>(predictions.data(),
                                      Eigen::Index(predictions.size())),
                Eigen::Map<const Vec>(targets.data(),
                                      Eigen::Index(targets.size())));
}

double mean_jaccard(const std::vector<std::vector<int>>& predicted_sequences,
                    const std::vector<ElementSet>& test_sets) {
    if (predicted_sequences.size() != test_sets.size() || test_sets.empty())
        throw std::invalid_argument("mean_jaccard needs matched nonzero lengths");
    double acc = 0.0;
    for (std::size_t i = 0; i < test_sets.size(); ++i) {
        const auto& seq = predicted_sequences[i];
        const auto& t = test_sets[i];
        if (seq.size() < t.size())
            throw std::invalid_argument(
                "predicted sequence shorter than the test set");
        std::unordered_set<int> tset(t.begin(), t.end());
        long long inter = 0;
        for (std::size_t j = 0; j < t.size(); ++j)
            if (tset.count(seq[j])) ++inter;
        const double uni = double(2 * t.size()) - double(inter);
        acc += uni > 0 ? double(inter) / uni : 1.0;
    }
    return acc / double(test_sets.size());
}

double ndcg_at_10(const std::vector<int>& predicted_sequence,
                  const ElementSet& relevant) {
    if (relevant.empty()) return 0.0;
    std::unordered_set<int> rel(relevant.begin(), relevant.end());
    const std::size_t depth = std::min<std::size_t>(10, predicted_sequence.size());
    double dcg = 0.0;
    for (std::size_t pos = 0; pos < depth; ++pos)
        if (rel.count(predicted_sequence[pos]))
            dcg += 1.0 / std::log2(double(pos) + 2.0);
    const std::size_t ideal = std::min<std::size_t>(relevant.size(), 10);
    double idcg = 0.0;
    for (std::size_t pos = 0; pos < ideal; ++pos)
        idcg += 1.0 / std::log2(double(pos) + 2.0);
    return dcg / idcg;
}

double mean_ndcg_at_10(const std::vector<std::vector<int>>& predicted_sequences,
                       const std::vector<ElementSet>& test_sets) {
    if (predicted_sequences.size() != test_sets.size() || test_sets.empty())
        throw std::invalid_argument("mean ndcg needs matched nonzero lengths");
    double acc = 0.0;
    for (std::size_t i = 0; i < test_sets.size(); ++i)
        acc += ndcg_at_10(predicted_sequences[i], test_sets[i]);
    return acc / double(test_sets.size());
}

json AuditReport::to_json() const {
    return json{{"property", property},   {"samples", samples},
                {"max_violation", max_violation},
                {"violation_rate", violation_rate},
                {"tolerance", tolerance}, {"pass", pass}};
}

BatchSetValues batch_values_for(const SetFnModel& model,
                                const FeatureTable& table) {
    return [&model, &table](const std::vector<ElementSet>& sets) {
        return model.values_nograd(table, sets);
    };
}

BatchSetValues batch_values_for(const PlantedFn& fn, const FeatureTable& table) {
    return [fn, &table](const std::vector<ElementSet>& sets) {
        Vec out(Eigen::Index(sets.size()));
        for (std::size_t i = 0; i < sets.size(); ++i)
            out[Eigen::Index(i)] = eval_planted(fn, table, sets[i]);
        return out;
    };
}

ChainAuditReports audit_submodular(const BatchSetValues& values,
                                   const ChainAuditConfig& cfg) {
    if (cfg.samples < 1) throw std::invalid_argument("need >= 1 samples");
    if (cfg.universe < 3)
        throw std::invalid_argument("chain audit needs a universe of >= 3");
    const int t_cap = cfg.cardinality_k > 0
                          ? std::min(cfg.cardinality_k, cfg.universe - 1)
                          : cfg.universe - 1;
    if (t_cap < 2) throw std::invalid_argument("cardinality cap too small");

    Rng root = Rng(cfg.seed).substream("chain_audit");
    std::vector<int> ids(cfg.universe);
    std::iota(ids.begin(), ids.end(), 0);

    // quadruples (S, S+s, T, T+s) for every chain, evaluated in batches
    std::vector<ElementSet> batch;
    batch.reserve(4 * 1024);
    double max_sub = -std::numeric_limits<double>::infinity();
    double max_mono = -std::numeric_limits<double>::infinity();
    long long sub_violations = 0, mono_violations = 0;

    const long long chunk = 1024;
    for (long long done = 0; done < cfg.samples; done += chunk) {
        const long long m = std::min(chunk, cfg.samples - done);
        batch.clear();
        for (long long i = 0; i < m; ++i) {
            Rng rng = root.substream("chain", std::uint64_t(done + i));
            const int tsize = 2 + int(rng.below(std::uint64_t(t_cap - 1)));
            std::vector<int> pool = ids;
            rng.shuffle(pool);
            ElementSet t(pool.begin(), pool.begin() + tsize);
            const int s_lo = cfg.nonempty_base ? 1 : 0;
            const int ssize =
                s_lo + int(rng.below(std::uint64_t(tsize - s_lo)));
            ElementSet s(t.begin(), t.begin() + ssize);
            const int extra = pool[tsize];  // outside T by construction
            ElementSet s_plus = s, t_plus = t;
            s_plus.push_back(extra);
            t_plus.push_back(extra);
            batch.push_back(canonical_set(s));
            batch.push_back(canonical_set(s_plus));
            batch.push_back(canonical_set(t));
            batch.push_back(canonical_set(t_plus));
        }
        Vec v = values(batch);
        for (long long i = 0; i < m; ++i) {
            const double fs = v[4 * i], fsp = v[4 * i + 1];
            const double ft = v[4 * i + 2], ftp = v[4 * i + 3];
            const double gain_s = fsp - fs;
            const double gain_t = ftp - ft;
            const double sub_vio = cfg.alpha * gain_t - gain_s;
            const double mono_vio = -gain_s;
            max_sub = std::max(max_sub, sub_vio);
            max_mono = std::max(max_mono, mono_vio);
            if (sub_vio > cfg.tolerance) ++sub_violations;
            if (mono_vio > cfg.mono_tolerance) ++mono_violations;
        }
    }

    ChainAuditReports reports;
    reports.submodular.property = "alpha_submodular";
    reports.submodular.samples = cfg.samples;
    reports.submodular.max_violation = max_sub;
    reports.submodular.violation_rate =
        double(sub_violations) / double(cfg.samples);
    reports.submodular.tolerance = cfg.tolerance;
    reports.submodular.pass = max_sub <= cfg.tolerance;
    reports.monotonicity.property = "monotone";
    reports.monotonicity.samples = cfg.samples;
    reports.monotonicity.max_violation = max_mono;
    reports.monotonicity.violation_rate =
        double(mono_violations) / double(cfg.samples);
    reports.monotonicity.tolerance = cfg.mono_tolerance;
    reports.monotonicity.pass = max_mono <= cfg.mono_tolerance;
    return reports;
}

AuditReport audit_concave(const std::function<double(double)>& f, double lo,
                          double hi, int grid, double tolerance) {
    if (grid < 3) throw std::invalid_argument("grid must have >= 3 points");
    const double h = (hi - lo) / double(grid - 1);
    AuditReport report;
    report.property = "concave";
    report.tolerance = tolerance;
    double max_vio = -std::numeric_limits<double>::infinity();
    long long violations = 0;
    for (int i = 1; i + 1 < grid; ++i) {
        const double x = lo + h * i;
        const double second = (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h);
        max_vio = std::max(max_vio, second);
        if (second > tolerance) ++violations;
        ++report.samples;
    }
    report.max_violation = max_vio;
    report.violation_rate = double(violations) / double(report.samples);
    report.pass = max_vio <= tolerance;
    return report;
}

AuditReport audit_monotone(const std::function<double(double)>& f, double lo,
                           double hi, int grid, double tolerance) {
    if (grid < 2) throw std::invalid_argument("grid must have >= 2 points");
    const double h = (hi - lo) / double(grid - 1);
    AuditReport report;
    report.property = "monotone";
    report.tolerance = tolerance;
    double max_vio = -std::numeric_limits<double>::infinity();
    long long violations = 0;
    double prev = f(lo);
    for (int i = 1; i < grid; ++i) {
        const double cur = f(lo + h * i);
        const double vio = prev - cur;
        max_vio = std::max(max_vio, vio);
        if (vio > tolerance) ++violations;
        prev = cur;
        ++report.samples;
    }
    report.max_violation = max_vio;
    report.violation_rate = double(violations) / double(report.samples);
    report.pass = max_vio <= tolerance;
    return report;
}

AuditReport audit_alpha_inequality(const std::function<double(double)>& f,
                                   double kappa, double lo, double hi, int grid,
                                   double h, double tolerance) {
    if (grid < 2) throw std::invalid_argument("grid must have >= 2 points");
    const double step = (hi - lo) / double(grid - 1);
    AuditReport report;
    report.property = "alpha_inequality";
    report.tolerance = tolerance;
    double max_vio = -std::numeric_limits<double>::infinity();
    long long violations = 0;
    for (int i = 0; i < grid; ++i) {
        const double x = std::max(lo + step * i, lo + h);
        const double second = (f(x + 2 * h) - 2.0 * f(x + h) + f(x)) / (h * h);
        const double first = (f(x + h) - f(x - h)) / (2.0 * h);
        const double vio = second - kappa * first;
        max_vio = std::max(max_vio, vio);
        if (vio > tolerance) ++violations;
        ++report.samples;
    }
    report.max_violation = max_vio;
    report.violation_rate = double(violations) / double(report.samples);
    report.pass = max_vio <= tolerance;
    return report;
}

}  // namespace sublearn
