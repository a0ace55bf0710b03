#include "sublearn/setfn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace sublearn {

namespace {
// penalty returned when a SubMix inner log leaves its domain
constexpr double kSubmixPenalty = 1e6;
constexpr double kEuler = 2.718281828459045;

double logit(double p) { return std::log(p / (1.0 - p)); }
}  // namespace

ElementSet canonical_set(ElementSet s) {
    std::sort(s.begin(), s.end());
    for (std::size_t i = 1; i < s.size(); ++i)
        if (s[i] == s[i - 1])
            throw std::invalid_argument("duplicate element id in set");
    return s;
}

FeatureTable::FeatureTable(Mat features) : z(std::move(features)) {
    if (!z.allFinite() || (z.array() < 0.0).any())
        throw std::invalid_argument(
            "feature table entries must be finite and non-negative");
}

void FeatureTable::check_ids(const ElementSet& s) const {
    for (int id : s)
        if (id < 0 || id >= count())
            throw std::invalid_argument("unknown element id " +
                                        std::to_string(id));
}

Vec FeatureTable::zsum(const ElementSet& s) const {
    check_ids(s);
    ElementSet sorted = canonical_set(s);
    Vec acc = Vec::Zero(dim());
    for (int id : sorted) acc += z.row(id).transpose();
    return acc;
}

Mat FeatureTable::zsum_matrix(const std::vector<ElementSet>& sets) const {
    Mat out(dim(), Eigen::Index(sets.size()));
    for (std::size_t j = 0; j < sets.size(); ++j) out.col(j) = zsum(sets[j]);
    return out;
}

FeatureTable read_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        if (vals.empty()) continue;
        rows.push_back(std::move(vals));
    }
    if (rows.empty()) throw std::runtime_error("empty feature file " + path);
    const std::size_t d = rows[0].size() - 1;  // leading column is the id
    Mat z(rows.size(), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != d + 1)
            throw std::runtime_error("ragged feature file " + path);
        const int id = int(rows[i][0]);
        if (id != int(i))
            throw std::runtime_error("feature ids must be dense and ordered");
        for (std::size_t j = 0; j < d; ++j) z(i, j) = rows[i][j + 1];
    }
    return FeatureTable(std::move(z));
}

void write_features_csv(const FeatureTable& table, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << std::setprecision(17);
    for (int i = 0; i < table.count(); ++i) {
        out << i;
        for (int j = 0; j < table.dim(); ++j) out << ',' << table.z(i, j);
        out << '\n';
    }
}

Var modular_value(ParamLeaves& leaves, const std::string& weight_name,
                  const FeatureTable& table, const ElementSet& s) {
    Vec zs = table.zsum(s);
    Mat col(zs.size(), 1);
    col.col(0) = zs;
    return matmul(leaves(weight_name), Var::constant(std::move(col)));
}

double modular_value_nograd(const Vec& w, const FeatureTable& table,
                            const ElementSet& s) {
    return w.dot(table.zsum(s));
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "monotone") return ModelKind::Monotone;
    if (s == "alpha") return ModelKind::Alpha;
    if (s == "nonmonotone") return ModelKind::NonMonotone;
    if (s == "submix") return ModelKind::SubMix;
    if (s == "fixed_dsf") return ModelKind::FixedDsf;
    throw std::invalid_argument("unknown model kind: " + s);
}

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Monotone: return "monotone";
        case ModelKind::Alpha: return "alpha";
        case ModelKind::NonMonotone: return "nonmonotone";
        case ModelKind::SubMix: return "submix";
        case ModelKind::FixedDsf: return "fixed_dsf";
    }
    return "monotone";
}

void SetFnModelConfig::validate() const {
    if (feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
    if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");
    if (!(lambda_init > 0.0) || !(lambda_init < 1.0))
        throw std::invalid_argument("lambda_init must lie in (0,1)");
    if (kind == ModelKind::Alpha) {
        if (!(alpha > 0.0) || alpha > 1.0)
            throw std::invalid_argument("alpha must lie in (0,1]");
        if (cardinality_k < 1)
            throw std::invalid_argument("cardinality_k must be >= 1");
    }
    integrand.validate();
    aux.validate();
    outer.validate();
    inner.validate();
}

json mat_to_json(const Mat& m) {
    json j;
    j["shape"] = {m.rows(), m.cols()};
    std::vector<double> flat(m.size());
    // row-major flattening
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            flat[std::size_t(r * m.cols() + c)] = m(r, c);
    j["data"] = std::move(flat);
    return j;
}

Mat mat_from_json(const json& j) {
    const auto shape = j.at("shape");
    const Eigen::Index rows = shape.at(0).get<Eigen::Index>();
    const Eigen::Index cols = shape.at(1).get<Eigen::Index>();
    const auto& data = j.at("data");
    if (Eigen::Index(data.size()) != rows * cols)
        throw std::invalid_argument("matrix payload size mismatch");
    Mat m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            m(r, c) = data.at(std::size_t(r * cols + c)).get<double>();
    return m;
}

json mlp_spec_to_json(const MlpSpec& spec) {
    return json{{"input_width", spec.input_width},
                {"hidden", spec.hidden},
                {"output_width", spec.output_width},
                {"hidden_act", to_string(spec.hidden_act)},
                {"output_act", to_string(spec.output_act)}};
}

MlpSpec mlp_spec_from_json(const json& j) {
    MlpSpec spec;
    spec.input_width = j.at("input_width").get<int>();
    spec.hidden = j.at("hidden").get<std::vector<int>>();
    spec.output_width = j.at("output_width").get<int>();
    spec.hidden_act = activation_from_string(j.at("hidden_act").get<std::string>());
    spec.output_act = activation_from_string(j.at("output_act").get<std::string>());
    return spec;
}

json SetFnModelConfig::to_json() const {
    return json{{"kind", sublearn::to_string(kind)},
                {"feature_dim", feature_dim},
                {"n_steps", n_steps},
                {"mode", sublearn::to_string(mode)},
                {"integrand", mlp_spec_to_json(integrand)},
                {"aux", mlp_spec_to_json(aux)},
                {"quadrature",
                 {{"outer_rule", sublearn::to_string(outer.rule)},
                  {"outer_nodes", outer.nodes},
                  {"inner_rule", sublearn::to_string(inner.rule)},
                  {"inner_nodes", inner.nodes},
                  {"b_max", inner.b_max}}},
                {"alpha", alpha},
                {"cardinality_k", cardinality_k},
                {"x_max", x_max},
                {"lambda_init", lambda_init},
                {"lambda_frozen", lambda_frozen},
                {"share_modular_weights", share_modular_weights},
                {"init_weight_scale", init_weight_scale}};
}

SetFnModelConfig SetFnModelConfig::from_json(const json& j) {
    SetFnModelConfig cfg;
    cfg.kind = model_kind_from_string(j.at("kind").get<std::string>());
    cfg.feature_dim = j.at("feature_dim").get<int>();
    cfg.n_steps = j.at("n_steps").get<int>();
    cfg.mode = shape_mode_from_string(j.at("mode").get<std::string>());
    cfg.integrand = mlp_spec_from_json(j.at("integrand"));
    cfg.aux = mlp_spec_from_json(j.at("aux"));
    const auto& q = j.at("quadrature");
    cfg.outer.rule = quad_rule_from_string(q.at("outer_rule").get<std::string>());
    cfg.outer.nodes = q.at("outer_nodes").get<int>();
    cfg.inner.rule = quad_rule_from_string(q.at("inner_rule").get<std::string>());
    cfg.inner.nodes = q.at("inner_nodes").get<int>();
    cfg.inner.b_max = q.at("b_max").get<double>();
    cfg.outer.b_max = cfg.inner.b_max;
    cfg.alpha = j.at("alpha").get<double>();
    cfg.cardinality_k = j.at("cardinality_k").get<int>();
    cfg.x_max = j.at("x_max").get<double>();
    cfg.lambda_init = j.at("lambda_init").get<double>();
    cfg.lambda_frozen = j.at("lambda_frozen").get<bool>();
    cfg.share_modular_weights = j.at("share_modular_weights").get<bool>();
    cfg.init_weight_scale = j.at("init_weight_scale").get<double>();
    return cfg;
}

std::string SetFnModel::modular_weight_name(int step) const {
    const int s = cfg_.share_modular_weights ? 0 : step;
    return "m" + std::to_string(s) + ".w";
}

SetFnModel SetFnModel::create(SetFnModelConfig cfg, std::uint64_t seed) {
    cfg.validate();
    SetFnModel model;
    model.cfg_ = cfg;
    Rng rng(seed);

    const int n_modular = [&] {
        switch (cfg.kind) {
            case ModelKind::NonMonotone:
            case ModelKind::SubMix: return 1;
            default: return cfg.n_steps + 1;
        }
    }();
    const int distinct = cfg.share_modular_weights ? 1 : n_modular;
    for (int n = 0; n < distinct; ++n)
        model.params_.add("m" + std::to_string(n) + ".w",
                          Mat::Ones(1, cfg.feature_dim), /*nonneg=*/true);

    const bool uses_lambda = cfg.kind == ModelKind::Monotone ||
                             cfg.kind == ModelKind::Alpha ||
                             cfg.kind == ModelKind::FixedDsf;
    if (uses_lambda && !cfg.lambda_frozen)
        model.params_.add("lambda.raw",
                          Mat::Constant(1, 1, logit(cfg.lambda_init)));

    ShapeFnConfig base;
    base.mode = cfg.mode;
    base.integrand = cfg.integrand;
    base.aux = cfg.aux;
    base.outer = cfg.outer;
    base.inner = cfg.inner;

    switch (cfg.kind) {
        case ModelKind::Monotone:
        case ModelKind::Alpha: {
            ShapeFnConfig phi_cfg = base;
            phi_cfg.kind = ShapeKind::MonotoneConcave;
            model.phi_.emplace(phi_cfg, "phi");
            model.phi_->init_params(model.params_, rng.substream("phi"),
                                    cfg.init_weight_scale);
            if (cfg.kind == ModelKind::Alpha) {
                ShapeFnConfig hat_cfg = base;
                hat_cfg.kind = ShapeKind::AlphaTilted;
                hat_cfg.kappa = kappa_for(cfg.alpha, cfg.cardinality_k);
                model.phihat_.emplace(hat_cfg, "phihat");
                model.phihat_->init_params(model.params_, rng.substream("phihat"),
                                           cfg.init_weight_scale);
            }
            break;
        }
        case ModelKind::NonMonotone: {
            ShapeFnConfig psi_cfg = base;
            psi_cfg.kind = ShapeKind::GeneralConcave;
            psi_cfg.x_max = cfg.x_max;
            model.psi_.emplace(psi_cfg, "psi");
            model.psi_->init_params(model.params_, rng.substream("psi"),
                                    cfg.init_weight_scale);
            break;
        }
        case ModelKind::SubMix:
            model.params_.add("mix.w1", Mat::Ones(1, 1));
            model.params_.add("mix.w2", Mat::Zero(1, 1));
            model.params_.add("mix.w3", Mat::Zero(1, 1));
            break;
        case ModelKind::FixedDsf:
            // theta = softplus(raw) + 1e-6 stays strictly positive;
            // raw chosen so theta starts at 1
            model.params_.add("dsf.raw",
                              Mat::Constant(1, 1, std::log(kEuler - 1.0)));
            break;
    }
    return model;
}

Var SetFnModel::lambda_var(ParamLeaves& leaves) const {
    if (cfg_.lambda_frozen) return Var::scalar(cfg_.lambda_init);
    return sigmoid(leaves("lambda.raw"));
}

double SetFnModel::lambda_value() const {
    if (cfg_.lambda_frozen) return cfg_.lambda_init;
    const double raw = params_.value("lambda.raw")(0, 0);
    return 1.0 / (1.0 + std::exp(-raw));
}

Var SetFnModel::msum_row(ParamLeaves& leaves, int step, const Var& zsums) const {
    return matmul(leaves(modular_weight_name(step)), zsums);
}

Var SetFnModel::submix_value(ParamLeaves& leaves, const Var& msum) const {
    const Eigen::Index m = msum.cols();
    std::vector<Var> cols_out;
    cols_out.reserve(std::size_t(m));
    Var w1 = leaves("mix.w1"), w2 = leaves("mix.w2"), w3 = leaves("mix.w3");
    for (Eigen::Index i = 0; i < m; ++i) {
        const double v = msum.value()(0, i);
        if (!(v > kEuler)) {  // log log log undefined at or below e
            ++flags_.submix_domain;
            cols_out.push_back(Var::scalar(kSubmixPenalty));
            continue;
        }
        Var x = col(msum, i);
        Var l1 = log(x);
        Var l2 = log(l1);
        Var l3 = log(l2);
        cols_out.push_back(w1 * l1 + w2 * l2 + w3 * l3);
    }
    return m == 1 ? cols_out[0] : hcat(cols_out);
}

Var SetFnModel::value_batch(ParamLeaves& leaves, const Var& zsums,
                            EvalTrace* trace) const {
    if (zsums.rows() != cfg_.feature_dim)
        throw std::invalid_argument("zsums must have feature_dim rows");

    switch (cfg_.kind) {
        case ModelKind::NonMonotone: {
            Var m = msum_row(leaves, 0, zsums);
            for (Eigen::Index i = 0; i < m.cols(); ++i)
                if (m.value()(0, i) > cfg_.x_max) ++flags_.psi_clamps;
            Var clamped = clamp_max(m, psi_->config().x_max);
            if (trace) trace->psi_input = clamped;
            return psi_->eval(leaves, clamped);
        }
        case ModelKind::SubMix:
            return submix_value(leaves, msum_row(leaves, 0, zsums));
        case ModelKind::Monotone:
        case ModelKind::Alpha:
        case ModelKind::FixedDsf: {
            Var lam = lambda_var(leaves);
            Var one_minus = rsub_const(1.0, lam);
            Var f;
            if (cfg_.kind == ModelKind::Alpha) {
                Var m0 = msum_row(leaves, 0, zsums);
                if (trace) trace->alpha_input = m0;
                f = phihat_->eval(leaves, m0);
            } else {
                f = msum_row(leaves, 0, zsums);
            }
            Var theta;  // FixedDsf offset, shared across steps
            if (cfg_.kind == ModelKind::FixedDsf)
                theta = add_const(softplus(leaves("dsf.raw")), 1e-6);
            for (int n = 1; n <= cfg_.n_steps; ++n) {
                Var g = lam * f + one_minus * msum_row(leaves, n, zsums);
                if (trace) trace->phi_inputs.push_back(g);
                if (cfg_.kind == ModelKind::FixedDsf)
                    f = log(g + theta) - log(theta);
                else
                    f = phi_->eval(leaves, g);
            }
            return f;
        }
    }
    throw std::logic_error("unreachable");
}

Var SetFnModel::value(ParamLeaves& leaves, const FeatureTable& table,
                      const ElementSet& s) const {
    if (s.empty()) return Var::scalar(0.0);  // every kind is normalized
    if (cfg_.kind == ModelKind::Alpha && int(s.size()) > cfg_.cardinality_k)
        ++flags_.cardinality_exceeded;
    Vec zs = table.zsum(s);
    Mat col(zs.size(), 1);
    col.col(0) = zs;
    return value_batch(leaves, Var::constant(std::move(col)));
}

Var SetFnModel::marginal_gain(ParamLeaves& leaves, const FeatureTable& table,
                              const ElementSet& s_without, int element) const {
    ElementSet s = canonical_set(s_without);
    if (std::binary_search(s.begin(), s.end(), element))
        throw std::invalid_argument("element already in set");
    ElementSet with = s;
    with.push_back(element);
    return value(leaves, table, with) - value(leaves, table, s);
}

Vec SetFnModel::values_nograd_zsums(const Mat& zsums) const {
    if (zsums.rows() != cfg_.feature_dim)
        throw std::invalid_argument("zsums must have feature_dim rows");
    const Eigen::Index m = zsums.cols();

    auto msum = [&](int step) -> Vec {
        return (params_.value(modular_weight_name(step)) * zsums)
            .row(0)
            .transpose();
    };

    switch (cfg_.kind) {
        case ModelKind::NonMonotone: {
            Vec mv = msum(0);
            for (Eigen::Index i = 0; i < m; ++i)
                if (mv[i] > cfg_.x_max) {
                    ++flags_.psi_clamps;
                    mv[i] = psi_->config().x_max;
                }
            return psi_->eval_nograd(params_, mv.cwiseMin(psi_->config().x_max));
        }
        case ModelKind::SubMix: {
            Vec mv = msum(0);
            const double w1 = params_.value("mix.w1")(0, 0);
            const double w2 = params_.value("mix.w2")(0, 0);
            const double w3 = params_.value("mix.w3")(0, 0);
            Vec out(m);
            for (Eigen::Index i = 0; i < m; ++i) {
                if (!(mv[i] > kEuler)) {
                    ++flags_.submix_domain;
                    out[i] = kSubmixPenalty;
                    continue;
                }
                const double l1 = std::log(mv[i]);
                const double l2 = std::log(l1);
                out[i] = w1 * l1 + w2 * l2 + w3 * std::log(l2);
            }
            return out;
        }
        case ModelKind::Monotone:
        case ModelKind::Alpha:
        case ModelKind::FixedDsf: {
            const double lam = lambda_value();
            Vec f;
            if (cfg_.kind == ModelKind::Alpha)
                f = phihat_->eval_nograd(params_, msum(0));
            else
                f = msum(0);
            double theta = 0.0;
            if (cfg_.kind == ModelKind::FixedDsf) {
                const double raw = params_.value("dsf.raw")(0, 0);
                theta = (raw > 30 ? raw : std::log1p(std::exp(raw))) + 1e-6;
            }
            for (int n = 1; n <= cfg_.n_steps; ++n) {
                Vec g = lam * f + (1.0 - lam) * msum(n);
                if (cfg_.kind == ModelKind::FixedDsf)
                    f = ((g.array() + theta).log() - std::log(theta)).matrix();
                else
                    f = phi_->eval_nograd(params_, g);
            }
            return f;
        }
    }
    throw std::logic_error("unreachable");
}

Vec SetFnModel::values_nograd(const FeatureTable& table,
                              const std::vector<ElementSet>& sets) const {
    // chunk across sets so quadrature slabs stay within memory
    const int block_cols = [&] {
        if (cfg_.kind == ModelKind::SubMix) return 1;
        if (cfg_.mode == ShapeMode::EndToEnd)
            return cfg_.outer.nodes * cfg_.inner.nodes;
        return cfg_.outer.nodes;
    }();
    const std::size_t chunk =
        std::max<std::size_t>(1, (1u << 21) / std::size_t(block_cols));
    Vec out(Eigen::Index(sets.size()));
    std::vector<ElementSet> slice;
    for (std::size_t base = 0; base < sets.size(); base += chunk) {
        const std::size_t len = std::min(chunk, sets.size() - base);
        slice.assign(sets.begin() + base, sets.begin() + base + len);
        Mat zs = table.zsum_matrix(slice);
        Vec vals = values_nograd_zsums(zs);
        for (std::size_t i = 0; i < len; ++i) {
            if (slice[i].empty())
                vals[Eigen::Index(i)] = 0.0;
            else if (cfg_.kind == ModelKind::Alpha &&
                     int(slice[i].size()) > cfg_.cardinality_k)
                ++flags_.cardinality_exceeded;
            out[Eigen::Index(base + i)] = vals[Eigen::Index(i)];
        }
    }
    return out;
}

double SetFnModel::value_nograd(const FeatureTable& table,
                                const ElementSet& s) const {
    return values_nograd(table, {s})[0];
}

double SetFnModel::marginal_gain_nograd(const FeatureTable& table,
                                        const ElementSet& s_without,
                                        int element) const {
    ElementSet s = canonical_set(s_without);
    if (std::binary_search(s.begin(), s.end(), element))
        throw std::invalid_argument("element already in set");
    ElementSet with = s;
    with.push_back(element);
    Vec v = values_nograd(table, {canonical_set(with), s});
    return v[0] - v[1];
}

Var SetFnModel::consistency_penalties(ParamLeaves& leaves,
                                      const EvalTrace& trace) const {
    if (cfg_.mode != ShapeMode::Decoupled)
        throw std::logic_error("consistency penalties require decoupled mode");
    Var total;
    for (const Var& g : trace.phi_inputs) {
        Var pen = phi_->consistency_penalty(leaves, g);
        total = total.valid() ? total + pen : pen;
    }
    if (cfg_.kind == ModelKind::Alpha && trace.alpha_input.valid()) {
        Var pen = phihat_->consistency_penalty(leaves, trace.alpha_input);
        total = total.valid() ? total + pen : pen;
    }
    if (cfg_.kind == ModelKind::NonMonotone && trace.psi_input.valid()) {
        Var pen = psi_->consistency_penalty(leaves, trace.psi_input);
        total = total.valid() ? total + pen : pen;
    }
    if (!total.valid())
        throw std::logic_error("no recursion inputs recorded in trace");
    return total;
}

SetFnModel::Limits SetFnModel::observed_limits(
    const FeatureTable& table, const std::vector<ElementSet>& sets) const {
    Limits limits{0.0, 0.0};
    Mat zsums = table.zsum_matrix(sets);
    auto msum = [&](int step) -> Vec {
        return (params_.value(modular_weight_name(step)) * zsums)
            .row(0)
            .transpose();
    };
    switch (cfg_.kind) {
        case ModelKind::NonMonotone: {
            Vec mv = msum(0);
            limits.x_max = std::max(mv.maxCoeff(), 1e-9);
            limits.b_max = limits.x_max;
            return limits;
        }
        case ModelKind::SubMix:
            limits.b_max = limits.x_max = std::max(msum(0).maxCoeff(), 1e-9);
            return limits;
        case ModelKind::Monotone:
        case ModelKind::Alpha:
        case ModelKind::FixedDsf: {
            const double lam = lambda_value();
            Vec f;
            double peak = 0.0;
            if (cfg_.kind == ModelKind::Alpha) {
                Vec m0 = msum(0);
                peak = std::max(peak, m0.maxCoeff());
                f = phihat_->eval_nograd(params_, m0);
            } else {
                f = msum(0);
            }
            for (int n = 1; n <= cfg_.n_steps; ++n) {
                Vec g = lam * f + (1.0 - lam) * msum(n);
                peak = std::max(peak, g.maxCoeff());
                if (cfg_.kind == ModelKind::FixedDsf) {
                    const double raw = params_.value("dsf.raw")(0, 0);
                    const double theta =
                        (raw > 30 ? raw : std::log1p(std::exp(raw))) + 1e-6;
                    f = ((g.array() + theta).log() - std::log(theta)).matrix();
                } else {
                    f = phi_->eval_nograd(params_, g);
                }
            }
            limits.b_max = std::max(peak, 1e-9);
            limits.x_max = limits.b_max;
            return limits;
        }
    }
    throw std::logic_error("unreachable");
}

void SetFnModel::set_limits(const Limits& limits) {
    cfg_.inner.b_max = limits.b_max;
    cfg_.outer.b_max = limits.b_max;
    if (phi_) phi_->set_b_max(limits.b_max);
    if (phihat_) phihat_->set_b_max(limits.b_max);
    if (psi_) {
        psi_->set_b_max(limits.b_max);
        psi_->set_x_max(limits.x_max);
        cfg_.x_max = limits.x_max;
    }
}

void SetFnModel::calibrate_limits(const FeatureTable& table,
                                  const std::vector<ElementSet>& sets,
                                  int rounds) {
    for (int r = 0; r < rounds; ++r) set_limits(observed_limits(table, sets));
}

json SetFnModel::checkpoint() const {
    json params;
    for (const auto& [name, entry] : params_.entries()) {
        json p = mat_to_json(entry.value);
        p["nonneg"] = entry.nonneg;
        params[name] = std::move(p);
    }
    return json{{"model_kind", to_string(cfg_.kind)},
                {"spec", cfg_.to_json()},
                {"params", std::move(params)}};
}

SetFnModel SetFnModel::from_checkpoint(const json& j) {
    SetFnModelConfig cfg = SetFnModelConfig::from_json(j.at("spec"));
    SetFnModel model = create(cfg, /*seed=*/0);
    // overwrite freshly initialized parameters with the stored payload
    for (const auto& [name, payload] : j.at("params").items()) {
        Mat value = mat_from_json(payload);
        Mat& dst = model.params_.mutable_value(name);
        if (dst.rows() != value.rows() || dst.cols() != value.cols())
            throw std::invalid_argument("checkpoint shape mismatch for " + name);
        dst = value;
    }
    return model;
}

}  // namespace sublearn
