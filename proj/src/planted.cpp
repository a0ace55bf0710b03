#include "sublearn/planted.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace sublearn {

namespace {
constexpr double kNormFloor = 1e-12;
}

PlantedTag planted_tag_from_string(const std::string& s) {
    if (s == "log") return PlantedTag::Log;
    if (s == "logdet") return PlantedTag::LogDet;
    if (s == "facility_location" || s == "fl") return PlantedTag::FacilityLocation;
    if (s == "gcut_mono") return PlantedTag::GcutMono;
    if (s == "log_sqrt") return PlantedTag::LogSqrt;
    if (s == "log_logdet") return PlantedTag::LogLogDet;
    if (s == "gcut_nonmono") return PlantedTag::GcutNonMono;
    if (s == "min_budget") return PlantedTag::MinBudget;
    throw std::invalid_argument("unknown planted function: " + s);
}

std::string to_string(PlantedTag t) {
    switch (t) {
        case PlantedTag::Log: return "log";
        case PlantedTag::LogDet: return "logdet";
        case PlantedTag::FacilityLocation: return "facility_location";
        case PlantedTag::GcutMono: return "gcut_mono";
        case PlantedTag::LogSqrt: return "log_sqrt";
        case PlantedTag::LogLogDet: return "log_logdet";
        case PlantedTag::GcutNonMono: return "gcut_nonmono";
        case PlantedTag::MinBudget: return "min_budget";
    }
    return "log";
}

PlantedFn PlantedFn::make(PlantedTag tag, const FeatureTable& table) {
    PlantedFn fn;
    fn.tag = tag;
    fn.lambda_gc = tag == PlantedTag::GcutNonMono ? 0.8 : 0.1;
    if (tag == PlantedTag::MinBudget) {
        const double total = table.z.sum();
        fn.budget_r = total / 3.0;
        fn.budget_b = total / 6.0;
        fn.budget_a = total / 2.0;
    }
    return fn;
}

namespace {

double mass(const FeatureTable& table, const ElementSet& s) {
    double acc = 0.0;
    for (int id : s) acc += table.z.row(id).sum();
    return acc;
}

double logdet_value(const FeatureTable& table, const ElementSet& s) {
    const int d = table.dim();
    Mat a = Mat::Identity(d, d);
    for (int id : s) a.noalias() += table.z.row(id).transpose() * table.z.row(id);
    Eigen::LLT<Mat> llt(a);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("log-det matrix not positive definite");
    return 2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
}

double facility_location_value(const FeatureTable& table, const ElementSet& s) {
    const int n = table.count();
    Vec best = Vec::Constant(n, -1.0);
    for (int id : s) {
        const Vec zi = table.z.row(id).transpose();
        const double ni = std::max(zi.norm(), kNormFloor);
        for (int v = 0; v < n; ++v) {
            const Vec zv = table.z.row(v).transpose();
            const double c = zi.dot(zv) / (ni * std::max(zv.norm(), kNormFloor));
            best[v] = std::max(best[v], c);
        }
    }
    return best.sum();
}

double gcut_value(const FeatureTable& table, const ElementSet& s,
                  double lambda_gc) {
    // sum_{u in V, v in S} z_u.z_v - lambda * sum_{u,v in S} z_u.z_v,
    // evaluated through the feature-sum identity
    const Vec zsum_v = table.z.colwise().sum().transpose();
    const Vec zsum_s = table.zsum(s);
    return zsum_v.dot(zsum_s) - lambda_gc * zsum_s.dot(zsum_s);
}

}  // namespace

double eval_planted(const PlantedFn& fn, const FeatureTable& table,
                    const ElementSet& raw) {
    ElementSet s = canonical_set(raw);
    table.check_ids(s);
    if (s.empty()) {
        // normalized-by-convention for scoring; log variants reject ∅
        switch (fn.tag) {
            case PlantedTag::Log:
            case PlantedTag::LogSqrt:
            case PlantedTag::LogLogDet:
                throw std::invalid_argument(
                    "log-based planted functions need a nonempty set");
            default: return 0.0;
        }
    }
    switch (fn.tag) {
        case PlantedTag::Log: return std::log(mass(table, s));
        case PlantedTag::LogDet: return logdet_value(table, s);
        case PlantedTag::FacilityLocation:
            return facility_location_value(table, s);
        case PlantedTag::GcutMono: return gcut_value(table, s, fn.lambda_gc);
        case PlantedTag::GcutNonMono: return gcut_value(table, s, fn.lambda_gc);
        case PlantedTag::LogSqrt: {
            const double m = mass(table, s);
            return std::log(m) * std::sqrt(m);
        }
        case PlantedTag::LogLogDet:
            return std::log(mass(table, s)) * logdet_value(table, s);
        case PlantedTag::MinBudget: {
            const double m = mass(table, s);
            return std::min({m, fn.budget_b + std::min(fn.budget_r, m),
                             fn.budget_a});
        }
    }
    throw std::logic_error("unreachable");
}

FeatureTable sample_features(int n, int d, std::uint64_t seed) {
    if (n < 1 || d < 1) throw std::invalid_argument("need n >= 1 and d >= 1");
    Rng rng = Rng(seed).substream("features");
    Mat z(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) z(i, j) = rng.uniform();
    return FeatureTable(std::move(z));
}

std::vector<int> SetValueDataset::fold_indices(int which) const {
    std::vector<int> idx;
    for (std::size_t i = 0; i < fold.size(); ++i)
        if (fold[i] == which) idx.push_back(int(i));
    return idx;
}

std::vector<ElementSet> SetValueDataset::fold_sets(int which) const {
    std::vector<ElementSet> sets;
    for (int i : fold_indices(which)) sets.push_back(instances[i].s);
    return sets;
}

Vec SetValueDataset::fold_targets(int which) const {
    auto idx = fold_indices(which);
    Vec y(Eigen::Index(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) y[Eigen::Index(i)] =
        instances[idx[i]].y;
    return y;
}

namespace {

// Incremental evaluation along a prefix chain; costs O(d) to O(nd) per added
// element instead of re-evaluating from scratch.
class PrefixEvaluator {
public:
    PrefixEvaluator(const PlantedFn& fn, const FeatureTable& table)
        : fn_(fn), table_(table) {
        const int d = table.dim();
        switch (fn.tag) {
            case PlantedTag::LogDet:
            case PlantedTag::LogLogDet:
                gram_ = Mat::Identity(d, d);
                break;
            case PlantedTag::FacilityLocation: {
                best_ = Vec::Constant(table.count(), -1.0);
                norms_ = table.z.rowwise().norm().cwiseMax(kNormFloor);
                break;
            }
            default: break;
        }
        zsum_v_ = table.z.colwise().sum().transpose();
        zsum_s_ = Vec::Zero(d);
    }

    double add(int id) {
        const Vec zi = table_.z.row(id).transpose();
        mass_ += zi.sum();
        zsum_s_ += zi;
        switch (fn_.tag) {
            case PlantedTag::Log: return std::log(mass_);
            case PlantedTag::LogSqrt:
                return std::log(mass_) * std::sqrt(mass_);
            case PlantedTag::MinBudget:
                return std::min({mass_, fn_.budget_b + std::min(fn_.budget_r, mass_),
                                 fn_.budget_a});
            case PlantedTag::GcutMono:
            case PlantedTag::GcutNonMono:
                return zsum_v_.dot(zsum_s_) -
                       fn_.lambda_gc * zsum_s_.dot(zsum_s_);
            case PlantedTag::LogDet:
            case PlantedTag::LogLogDet: {
                gram_.noalias() += zi * zi.transpose();
                Eigen::LLT<Mat> llt(gram_);
                const double ld =
                    2.0 * Mat(llt.matrixL()).diagonal().array().log().sum();
                return fn_.tag == PlantedTag::LogDet ? ld : std::log(mass_) * ld;
            }
            case PlantedTag::FacilityLocation: {
                const double ni = std::max(zi.norm(), kNormFloor);
                Vec cos = (table_.z * zi).cwiseQuotient(norms_ * ni);
                best_ = best_.cwiseMax(cos);
                return best_.sum();
            }
        }
        throw std::logic_error("unreachable");
    }

private:
    const PlantedFn& fn_;
    const FeatureTable& table_;
    double mass_ = 0.0;
    Vec zsum_s_, zsum_v_;
    Mat gram_;
    Vec best_, norms_;
};

}  // namespace

SetValueDataset gen_setvalue_dataset(const PlantedFn& fn,
                                     const FeatureTable& table,
                                     std::uint64_t seed) {
    const int n = table.count();
    if (n < 1) throw std::invalid_argument("empty table");
    Rng root(seed);

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = root.substream("prefix_shuffle");
    shuffle_rng.shuffle(order);

    SetValueDataset ds;
    ds.instances.resize(n);
    PrefixEvaluator eval(fn, table);
    ElementSet prefix;
    prefix.reserve(n);
    for (int j = 0; j < n; ++j) {
        prefix.push_back(order[j]);
        ds.instances[j].s = canonical_set(prefix);
        ds.instances[j].y = eval.add(order[j]);
    }

    // equal thirds, random assignment
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng fold_rng = root.substream("folds");
    fold_rng.shuffle(idx);
    ds.fold.assign(n, 0);
    for (int i = 0; i < n; ++i) ds.fold[idx[i]] = i % 3;

    double max_train = 0.0;
    for (int i = 0; i < n; ++i)
        if (ds.fold[i] == 0) max_train = std::max(max_train,
                                                  std::abs(ds.instances[i].y));
    ds.norm_const = max_train > 0 ? max_train : 1.0;
    for (auto& inst : ds.instances) inst.y /= ds.norm_const;
    return ds;
}

ElementSet greedy_maximize_planted(const PlantedFn& fn, const FeatureTable& table,
                                   const ElementSet& universe, int k) {
    ElementSet u = canonical_set(universe);
    if (k > int(u.size()))
        throw std::invalid_argument("subset size exceeds universe");
    ElementSet chosen;
    double current = 0.0;
    for (int step = 0; step < k; ++step) {
        int best_id = -1;
        double best_val = -std::numeric_limits<double>::infinity();
        for (int id : u) {
            if (std::find(chosen.begin(), chosen.end(), id) != chosen.end())
                continue;
            ElementSet cand = chosen;
            cand.push_back(id);
            const double v = eval_planted(fn, table, cand);
            if (v > best_val) {  // ascending id scan makes ties pick lowest id
                best_val = v;
                best_id = id;
            }
        }
        chosen.push_back(best_id);
        current = best_val;
    }
    (void)current;
    return canonical_set(chosen);
}

std::vector<UniverseSubsetInstance> gen_selection_dataset(
    const PlantedFn& fn, const FeatureTable& table, int universe_size,
    int subset_size, int count, std::uint64_t seed) {
    if (subset_size < 3)
        throw std::invalid_argument("selection subsets need |S*| >= 3");
    if (subset_size > universe_size || universe_size > table.count())
        throw std::invalid_argument("infeasible selection sizes");
    Rng root(seed);
    std::vector<UniverseSubsetInstance> out;
    out.reserve(std::size_t(count));
    std::vector<int> ids(table.count());
    std::iota(ids.begin(), ids.end(), 0);
    for (int i = 0; i < count; ++i) {
        Rng rng = root.substream("universe", std::uint64_t(i));
        std::vector<int> pool = ids;
        rng.shuffle(pool);
        ElementSet universe(pool.begin(), pool.begin() + universe_size);
        universe = canonical_set(universe);
        UniverseSubsetInstance inst;
        inst.universe = universe;
        inst.subset = greedy_maximize_planted(fn, table, universe, subset_size);
        out.push_back(std::move(inst));
    }
    return out;
}

// ---------------------------------------------------------------------------
// file formats

namespace {

void write_ids(std::ostream& out, const ElementSet& s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out << ',';
        out << s[i];
    }
}

ElementSet parse_ids(const std::string& text) {
    ElementSet ids;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ','))
        if (!cell.empty()) ids.push_back(std::stoi(cell));
    return ids;
}

}  // namespace

void write_setvalue_file(const SetValueDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << std::setprecision(17);
    for (const auto& inst : ds.instances) {
        write_ids(out, inst.s);
        out << '|' << inst.y << '\n';
    }
}

SetValueDataset read_setvalue_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    SetValueDataset ds;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto bar = line.find('|');
        if (bar == std::string::npos)
            throw std::runtime_error("malformed instance line in " + path);
        SetValueInstance inst;
        inst.s = canonical_set(parse_ids(line.substr(0, bar)));
        inst.y = std::stod(line.substr(bar + 1));
        if (inst.s.empty())
            throw std::runtime_error("empty set in " + path);
        ds.instances.push_back(std::move(inst));
    }
    ds.fold.assign(ds.instances.size(), 0);
    return ds;
}

void write_fold_file(const SetValueDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << std::setprecision(17);
    out << "# norm_const " << ds.norm_const << '\n';
    for (std::size_t i = 0; i < ds.fold.size(); ++i)
        out << i << ',' << ds.fold[i] << '\n';
}

void read_fold_file(SetValueDataset& ds, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.rfind("# norm_const", 0) == 0) {
            ds.norm_const = std::stod(line.substr(12));
            continue;
        }
        const auto comma = line.find(',');
        const std::size_t idx = std::stoul(line.substr(0, comma));
        if (idx >= ds.fold.size())
            throw std::runtime_error("fold index out of range in " + path);
        ds.fold[idx] = std::stoi(line.substr(comma + 1));
    }
}

void write_selection_file(const std::vector<UniverseSubsetInstance>& ds,
                          const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    for (const auto& inst : ds) {
        write_ids(out, inst.universe);
        out << '|';
        write_ids(out, inst.subset);
        out << '\n';
    }
}

std::vector<UniverseSubsetInstance> read_selection_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<UniverseSubsetInstance> ds;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto bar = line.find('|');
        if (bar == std::string::npos)
            throw std::runtime_error("malformed selection line in " + path);
        UniverseSubsetInstance inst;
        inst.universe = canonical_set(parse_ids(line.substr(0, bar)));
        inst.subset = canonical_set(parse_ids(line.substr(bar + 1)));
        for (int id : inst.subset)
            if (!std::binary_search(inst.universe.begin(), inst.universe.end(), id))
                throw std::runtime_error("subset element outside universe");
        ds.push_back(std::move(inst));
    }
    return ds;
}

}  // namespace sublearn
