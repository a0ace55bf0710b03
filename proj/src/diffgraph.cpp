#include "sublearn/diffgraph.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace sublearn {

namespace {

NodePtr make_node(Mat value, bool needs_grad,
                  std::vector<NodePtr> parents = {},
                  std::function<void(Node&)> backprop = nullptr) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->needs_grad = needs_grad;
    n->parents = std::move(parents);
    n->backprop = std::move(backprop);
    return n;
}

bool any_needs_grad(const std::vector<NodePtr>& ps) {
    for (const auto& p : ps)
        if (p->needs_grad) return true;
    return false;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " vs " +
                                    std::to_string(b.rows()) + "x" +
                                    std::to_string(b.cols()));
}

bool is_scalar(const Var& v) { return v.rows() == 1 && v.cols() == 1; }

double softplus_scalar(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
    if (x >= 0) {
        double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::Identity;
    if (s == "rectifier" || s == "relu") return Activation::Rectifier;
    if (s == "exp_linear" || s == "elu") return Activation::ExpLinear;
    if (s == "softplus") return Activation::Softplus;
    throw std::invalid_argument("unknown activation: " + s);
}

std::string to_string(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Rectifier: return "rectifier";
        case Activation::ExpLinear: return "exp_linear";
        case Activation::Softplus: return "softplus";
    }
    return "identity";
}

Var Var::constant(Mat v) { return Var(make_node(std::move(v), false)); }

Var Var::scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return Var(make_node(std::move(m), false));
}

double Var::scalar_value() const {
    if (n_->value.size() != 1)
        throw std::invalid_argument("scalar_value on non-scalar node");
    return n_->value(0, 0);
}

// ---------------------------------------------------------------------------
// elementwise arithmetic

Var operator+(const Var& a, const Var& b) {
    if (is_scalar(a) && !is_scalar(b)) return b + a;
    if (!is_scalar(a) && is_scalar(b)) {
        Mat v = a.value().array() + b.scalar_value();
        auto an = a.node(), bn = b.node();
        return Var(make_node(std::move(v), an->needs_grad || bn->needs_grad,
                             {an, bn}, [an, bn](Node& n) {
                                 if (an->needs_grad) an->ensure_grad() += n.grad;
                                 if (bn->needs_grad)
                                     bn->ensure_grad()(0, 0) += n.grad.sum();
                             }));
    }
    check_same_shape(a, b, "add");
    auto an = a.node(), bn = b.node();
    return Var(make_node(a.value() + b.value(), an->needs_grad || bn->needs_grad,
                         {an, bn}, [an, bn](Node& n) {
                             if (an->needs_grad) an->ensure_grad() += n.grad;
                             if (bn->needs_grad) bn->ensure_grad() += n.grad;
                         }));
}

Var operator-(const Var& a, const Var& b) { return a + (-b); }

Var operator-(const Var& a) {
    auto an = a.node();
    return Var(make_node(-a.value(), an->needs_grad, {an}, [an](Node& n) {
        if (an->needs_grad) an->ensure_grad() -= n.grad;
    }));
}

Var operator*(const Var& a, const Var& b) {
    if (is_scalar(a) && !is_scalar(b)) return b * a;
    if (!is_scalar(a) && is_scalar(b)) {
        double s = b.scalar_value();
        auto an = a.node(), bn = b.node();
        return Var(make_node(a.value() * s, an->needs_grad || bn->needs_grad,
                             {an, bn}, [an, bn, s](Node& n) {
                                 if (an->needs_grad) an->ensure_grad() += s * n.grad;
                                 if (bn->needs_grad)
                                     bn->ensure_grad()(0, 0) +=
                                         (n.grad.array() * an->value.array()).sum();
                             }));
    }
    check_same_shape(a, b, "mul");
    auto an = a.node(), bn = b.node();
    return Var(make_node(a.value().cwiseProduct(b.value()),
                         an->needs_grad || bn->needs_grad, {an, bn},
                         [an, bn](Node& n) {
                             if (an->needs_grad)
                                 an->ensure_grad() += n.grad.cwiseProduct(bn->value);
                             if (bn->needs_grad)
                                 bn->ensure_grad() += n.grad.cwiseProduct(an->value);
                         }));
}

Var add_const(const Var& a, double c) {
    auto an = a.node();
    return Var(make_node(a.value().array() + c, an->needs_grad, {an},
                         [an](Node& n) {
                             if (an->needs_grad) an->ensure_grad() += n.grad;
                         }));
}

Var mul_const(const Var& a, double c) {
    auto an = a.node();
    return Var(make_node(a.value() * c, an->needs_grad, {an}, [an, c](Node& n) {
        if (an->needs_grad) an->ensure_grad() += c * n.grad;
    }));
}

Var rsub_const(double c, const Var& a) {
    auto an = a.node();
    return Var(make_node((c - a.value().array()).matrix(), an->needs_grad, {an},
                         [an](Node& n) {
                             if (an->needs_grad) an->ensure_grad() -= n.grad;
                         }));
}

// ---------------------------------------------------------------------------
// linear algebra

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimension mismatch");
    auto an = a.node(), bn = b.node();
    return Var(make_node(a.value() * b.value(), an->needs_grad || bn->needs_grad,
                         {an, bn}, [an, bn](Node& n) {
                             if (an->needs_grad)
                                 an->ensure_grad().noalias() +=
                                     n.grad * bn->value.transpose();
                             if (bn->needs_grad)
                                 bn->ensure_grad().noalias() +=
                                     an->value.transpose() * n.grad;
                         }));
}

Var transpose(const Var& a) {
    auto an = a.node();
    return Var(make_node(a.value().transpose(), an->needs_grad, {an},
                         [an](Node& n) {
                             if (an->needs_grad)
                                 an->ensure_grad() += n.grad.transpose();
                         }));
}

Var add_colwise(const Var& m, const Var& bias) {
    if (bias.cols() != 1 || bias.rows() != m.rows())
        throw std::invalid_argument("add_colwise: bias must be (rows x 1)");
    auto mn = m.node(), bn = bias.node();
    Mat v = m.value();
    v.colwise() += Eigen::VectorXd(bias.value().col(0));
    return Var(make_node(std::move(v), mn->needs_grad || bn->needs_grad,
                         {mn, bn}, [mn, bn](Node& n) {
                             if (mn->needs_grad) mn->ensure_grad() += n.grad;
                             if (bn->needs_grad)
                                 bn->ensure_grad() += n.grad.rowwise().sum();
                         }));
}

// ---------------------------------------------------------------------------
// nonlinearities

Var activation(const Var& a, Activation act) {
    switch (act) {
        case Activation::Identity: return a;
        case Activation::Rectifier: return relu(a);
        case Activation::Softplus: return softplus(a);
        case Activation::ExpLinear: {
            auto an = a.node();
            Mat v = a.value().unaryExpr(
                [](double x) { return x > 0 ? x : std::expm1(x); });
            return Var(make_node(std::move(v), an->needs_grad, {an},
                                 [an](Node& n) {
                                     if (!an->needs_grad) return;
                                     an->ensure_grad().array() +=
                                         n.grad.array() *
                                         an->value.array().unaryExpr([](double x) {
                                             return x > 0 ? 1.0 : std::exp(x);
                                         });
                                 }));
        }
    }
    throw std::invalid_argument("unknown activation");
}

Var relu(const Var& a) {
    auto an = a.node();
    return Var(make_node(a.value().cwiseMax(0.0), an->needs_grad, {an},
                         [an](Node& n) {
                             if (!an->needs_grad) return;
                             an->ensure_grad().array() +=
                                 n.grad.array() *
                                 (an->value.array() > 0.0).cast<double>();
                         }));
}

Var softplus(const Var& a) {
    auto an = a.node();
    Mat v = a.value().unaryExpr(&softplus_scalar);
    return Var(make_node(std::move(v), an->needs_grad, {an}, [an](Node& n) {
        if (!an->needs_grad) return;
        an->ensure_grad().array() +=
            n.grad.array() * an->value.array().unaryExpr(&sigmoid_scalar);
    }));
}

Var exp(const Var& a) {
    auto an = a.node();
    Mat v = a.value().array().exp();
    auto vn = make_node(std::move(v), an->needs_grad, {an}, nullptr);
    vn->backprop = [an, vp = vn.get()](Node& n) {
        if (an->needs_grad)
            an->ensure_grad().array() += n.grad.array() * vp->value.array();
    };
    return Var(vn);
}

Var log(const Var& a) {
    auto an = a.node();
    return Var(make_node(a.value().array().log().matrix(), an->needs_grad, {an},
                         [an](Node& n) {
                             if (an->needs_grad)
                                 an->ensure_grad().array() +=
                                     n.grad.array() / an->value.array();
                         }));
}

Var sigmoid(const Var& a) {
    auto an = a.node();
    Mat v = a.value().unaryExpr(&sigmoid_scalar);
    auto vn = make_node(std::move(v), an->needs_grad, {an}, nullptr);
    vn->backprop = [an, vp = vn.get()](Node& n) {
        if (an->needs_grad)
            an->ensure_grad().array() += n.grad.array() * vp->value.array() *
                                         (1.0 - vp->value.array());
    };
    return Var(vn);
}

Var square(const Var& a) { return a * a; }

Var clamp_max(const Var& a, double hi) {
    auto an = a.node();
    return Var(make_node(a.value().cwiseMin(hi), an->needs_grad, {an},
                         [an, hi](Node& n) {
                             if (!an->needs_grad) return;
                             an->ensure_grad().array() +=
                                 n.grad.array() *
                                 (an->value.array() < hi).cast<double>();
                         }));
}

Var cwise_mul_const(const Var& a, const Mat& c) {
    if (a.rows() != c.rows() || a.cols() != c.cols())
        throw std::invalid_argument("cwise_mul_const: shape mismatch");
    auto an = a.node();
    return Var(make_node(a.value().cwiseProduct(c), an->needs_grad, {an},
                         [an, c](Node& n) {
                             if (an->needs_grad)
                                 an->ensure_grad() += n.grad.cwiseProduct(c);
                         }));
}

// ---------------------------------------------------------------------------
// reductions

Var sum(const Var& a) {
    auto an = a.node();
    Mat v(1, 1);
    v(0, 0) = a.value().sum();
    return Var(make_node(std::move(v), an->needs_grad, {an}, [an](Node& n) {
        if (an->needs_grad) an->ensure_grad().array() += n.grad(0, 0);
    }));
}

Var mean(const Var& a) { return mul_const(sum(a), 1.0 / double(a.value().size())); }

Var weighted_sum(const Var& a, const Vec& w) {
    if (a.value().size() != w.size())
        throw std::invalid_argument("weighted_sum: size mismatch");
    auto an = a.node();
    const bool rowvec = a.rows() == 1;
    Mat v(1, 1);
    if (rowvec)
        v(0, 0) = (a.value().row(0).transpose().array() * w.array()).sum();
    else
        v(0, 0) = (a.value().col(0).array() * w.array()).sum();
    return Var(make_node(std::move(v), an->needs_grad, {an},
                         [an, w, rowvec](Node& n) {
                             if (!an->needs_grad) return;
                             double g = n.grad(0, 0);
                             if (rowvec)
                                 an->ensure_grad().row(0) += g * w.transpose();
                             else
                                 an->ensure_grad().col(0) += g * w;
                         }));
}

Var dot(const Var& a, const Var& b) {
    if (a.value().size() != b.value().size())
        throw std::invalid_argument("dot: size mismatch");
    auto an = a.node(), bn = b.node();
    Eigen::Map<const Vec> av(a.value().data(), a.value().size());
    Eigen::Map<const Vec> bv(b.value().data(), b.value().size());
    Mat v(1, 1);
    v(0, 0) = av.dot(bv);
    return Var(make_node(std::move(v), an->needs_grad || bn->needs_grad,
                         {an, bn}, [an, bn](Node& n) {
                             double g = n.grad(0, 0);
                             if (an->needs_grad) {
                                 Mat& agm = an->ensure_grad();
                                 Eigen::Map<Vec> ag(agm.data(), agm.size());
                                 Eigen::Map<const Vec> bv2(bn->value.data(),
                                                           bn->value.size());
                                 ag += g * bv2;
                             }
                             if (bn->needs_grad) {
                                 Mat& bgm = bn->ensure_grad();
                                 Eigen::Map<Vec> bg(bgm.data(), bgm.size());
                                 Eigen::Map<const Vec> av2(an->value.data(),
                                                           an->value.size());
                                 bg += g * av2;
                             }
                         }));
}

Var logsumexp_row(const Var& a) {
    if (a.rows() != 1) throw std::invalid_argument("logsumexp_row: expects 1xK");
    auto an = a.node();
    const double m = a.value().maxCoeff();
    const double s = (a.value().array() - m).exp().sum();
    Mat v(1, 1);
    v(0, 0) = m + std::log(s);
    // softmax weights captured by value for the backward pass
    Eigen::RowVectorXd soft = ((a.value().array() - m).exp() / s).matrix();
    return Var(make_node(std::move(v), an->needs_grad, {an},
                         [an, soft](Node& n) {
                             if (an->needs_grad)
                                 an->ensure_grad().row(0) += n.grad(0, 0) * soft;
                         }));
}

Var col(const Var& m, Eigen::Index j) {
    if (j < 0 || j >= m.cols()) throw std::invalid_argument("col: out of range");
    auto mn = m.node();
    return Var(make_node(m.value().col(j), mn->needs_grad, {mn},
                         [mn, j](Node& n) {
                             if (mn->needs_grad)
                                 mn->ensure_grad().col(j) += n.grad.col(0);
                         }));
}

Var row(const Var& m, Eigen::Index i) {
    if (i < 0 || i >= m.rows()) throw std::invalid_argument("row: out of range");
    auto mn = m.node();
    return Var(make_node(m.value().row(i), mn->needs_grad, {mn},
                         [mn, i](Node& n) {
                             if (mn->needs_grad)
                                 mn->ensure_grad().row(i) += n.grad.row(0);
                         }));
}

Var middle_cols(const Var& m, Eigen::Index start, Eigen::Index len) {
    if (start < 0 || len < 1 || start + len > m.cols())
        throw std::invalid_argument("middle_cols: range out of bounds");
    auto mn = m.node();
    return Var(make_node(m.value().middleCols(start, len), mn->needs_grad, {mn},
                         [mn, start, len](Node& n) {
                             if (mn->needs_grad)
                                 mn->ensure_grad().middleCols(start, len) +=
                                     n.grad;
                         }));
}

Var hcat(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("hcat: empty");
    Eigen::Index r = parts[0].rows(), c = 0;
    for (const auto& p : parts) {
        if (p.rows() != r) throw std::invalid_argument("hcat: row mismatch");
        c += p.cols();
    }
    Mat v(r, c);
    std::vector<NodePtr> ps;
    std::vector<Eigen::Index> offs;
    Eigen::Index o = 0;
    for (const auto& p : parts) {
        v.middleCols(o, p.cols()) = p.value();
        ps.push_back(p.node());
        offs.push_back(o);
        o += p.cols();
    }
    bool ng = any_needs_grad(ps);
    return Var(make_node(std::move(v), ng, ps, [ps, offs](Node& n) {
        for (std::size_t i = 0; i < ps.size(); ++i) {
            if (!ps[i]->needs_grad) continue;
            ps[i]->ensure_grad() +=
                n.grad.middleCols(offs[i], ps[i]->value.cols());
        }
    }));
}

Var normalize_rows(const Var& m) {
    auto mn = m.node();
    Vec s = m.value().rowwise().sum();
    Mat v = m.value().array().colwise() / s.array();
    auto vn = make_node(std::move(v), mn->needs_grad, {mn}, nullptr);
    vn->backprop = [mn, s, vp = vn.get()](Node& n) {
        if (!mn->needs_grad) return;
        // d/da_ik of (a_ij / s_i): delta_jk/s_i - a_ij/s_i^2
        Vec dotp = (n.grad.array() * vp->value.array()).rowwise().sum();
        mn->ensure_grad().array() +=
            ((n.grad.array().colwise() - dotp.array()).colwise() / s.array());
    };
    return Var(vn);
}

Var normalize_cols(const Var& m) {
    auto mn = m.node();
    Eigen::RowVectorXd s = m.value().colwise().sum();
    Mat v = m.value().array().rowwise() / s.array();
    auto vn = make_node(std::move(v), mn->needs_grad, {mn}, nullptr);
    vn->backprop = [mn, s, vp = vn.get()](Node& n) {
        if (!mn->needs_grad) return;
        Eigen::RowVectorXd dotp =
            (n.grad.array() * vp->value.array()).colwise().sum();
        mn->ensure_grad().array() +=
            ((n.grad.array().rowwise() - dotp.array()).rowwise() / s.array());
    };
    return Var(vn);
}

// ---------------------------------------------------------------------------
// backward

void backward(const Var& root) {
    if (!root.valid() || root.value().size() != 1)
        throw std::invalid_argument("backward: root must be scalar");
    // iterative post-order DFS; each node enters `order` exactly once
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->needs_grad && seen.insert(p).second)
                stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root.node()->ensure_grad()(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && n->has_grad()) n->backprop(*n);
    }
}

// ---------------------------------------------------------------------------
// ParamStore / leaves / optimizer

void ParamStore::add(const std::string& name, Mat init, bool nonneg) {
    auto [it, inserted] = entries_.emplace(name, Entry{std::move(init), nonneg});
    if (!inserted)
        throw std::invalid_argument("parameter already exists: " + name);
}

bool ParamStore::has(const std::string& name) const {
    return entries_.count(name) != 0;
}

const Mat& ParamStore::value(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw std::invalid_argument("missing parameter: " + name);
    return it->second.value;
}

Mat& ParamStore::mutable_value(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw std::invalid_argument("missing parameter: " + name);
    return it->second.value;
}

bool ParamStore::nonneg(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end())
        throw std::invalid_argument("missing parameter: " + name);
    return it->second.nonneg;
}

bool GradMap::all_finite() const {
    for (const auto& [name, g] : grads)
        if (!g.allFinite()) return false;
    return true;
}

Var ParamLeaves::operator()(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    auto node = make_node(store_->value(name), true);
    node->param = name;
    Var v(node);
    cache_.emplace(name, v);
    return v;
}

GradMap ParamLeaves::grads() const {
    GradMap out;
    for (const auto& [name, entry] : store_->entries())
        out.grads.emplace(name, Mat::Zero(entry.value.rows(), entry.value.cols()));
    for (const auto& [name, var] : cache_) {
        if (var.node()->has_grad()) out.grads[name] = var.node()->grad;
    }
    return out;
}

bool AdamOptimizer::step(ParamStore& store, const GradMap& grads) {
    if (!grads.all_finite()) return false;
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (const auto& [name, g0] : grads.grads) {
        Mat& theta = store.mutable_value(name);
        if (theta.rows() != g0.rows() || theta.cols() != g0.cols())
            throw std::invalid_argument("gradient shape mismatch for " + name);
        Mat g = g0;
        if (cfg_.weight_decay != 0.0) g += cfg_.weight_decay * theta;
        auto mit = m_.emplace(name, Mat::Zero(g.rows(), g.cols())).first;
        auto vit = v_.emplace(name, Mat::Zero(g.rows(), g.cols())).first;
        mit->second = cfg_.beta1 * mit->second + (1.0 - cfg_.beta1) * g;
        vit->second = cfg_.beta2 * vit->second.array().matrix() +
                      (1.0 - cfg_.beta2) * g.cwiseProduct(g);
        Mat mhat = mit->second / bc1;
        Mat vhat = vit->second / bc2;
        theta.array() -=
            cfg_.lr * mhat.array() / (vhat.array().sqrt() + cfg_.eps);
        if (store.nonneg(name)) theta = theta.cwiseMax(0.0);
    }
    return true;
}

std::map<std::string, std::pair<Mat, Mat>> AdamOptimizer::state() const {
    std::map<std::string, std::pair<Mat, Mat>> st;
    for (const auto& [name, m] : m_) st[name] = {m, v_.at(name)};
    return st;
}

void AdamOptimizer::restore(std::int64_t t,
                            std::map<std::string, std::pair<Mat, Mat>> st) {
    t_ = t;
    m_.clear();
    v_.clear();
    for (auto& [name, mv] : st) {
        m_[name] = std::move(mv.first);
        v_[name] = std::move(mv.second);
    }
}

bool sgd_adam_step(ParamStore& store, const GradMap& grads, AdamOptimizer& opt) {
    return opt.step(store, grads);
}

// ---------------------------------------------------------------------------
// MLP

void MlpSpec::validate() const {
    if (input_width < 1 || output_width < 1)
        throw std::invalid_argument("MlpSpec: widths must be >= 1");
    for (int h : hidden)
        if (h < 1) throw std::invalid_argument("MlpSpec: widths must be >= 1");
}

std::vector<std::pair<int, int>> MlpSpec::layer_dims() const {
    std::vector<std::pair<int, int>> dims;
    int in = input_width;
    for (int h : hidden) {
        dims.emplace_back(h, in);
        in = h;
    }
    dims.emplace_back(output_width, in);
    return dims;
}

void init_mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec,
              Rng& rng, double weight_scale) {
    spec.validate();
    auto dims = spec.layer_dims();
    for (std::size_t l = 0; l < dims.size(); ++l) {
        auto [out, in] = dims[l];
        Mat w(out, in);
        const double scale = weight_scale * std::sqrt(2.0 / double(in));
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                w(i, j) = scale * rng.normal();
        store.add(prefix + ".w" + std::to_string(l), std::move(w));
        store.add(prefix + ".b" + std::to_string(l), Mat::Zero(out, 1));
    }
}

Var forward_mlp(const MlpSpec& spec, ParamLeaves& leaves,
                const std::string& prefix, const Var& x) {
    spec.validate();
    if (x.rows() != spec.input_width)
        throw std::invalid_argument("forward_mlp: input width mismatch");
    auto dims = spec.layer_dims();
    Var h = x;
    for (std::size_t l = 0; l < dims.size(); ++l) {
        Var w = leaves(prefix + ".w" + std::to_string(l));
        Var b = leaves(prefix + ".b" + std::to_string(l));
        if (w.cols() != h.rows())
            throw std::invalid_argument("forward_mlp: layer width mismatch at " +
                                        prefix + ".w" + std::to_string(l));
        h = add_colwise(matmul(w, h), b);
        h = activation(h, l + 1 == dims.size() ? spec.output_act
                                               : spec.hidden_act);
    }
    return h;
}

namespace {

void apply_activation_inplace(Mat& m, Activation act) {
    switch (act) {
        case Activation::Identity: return;
        case Activation::Rectifier: m = m.cwiseMax(0.0); return;
        case Activation::Softplus: m = m.unaryExpr(&softplus_scalar); return;
        case Activation::ExpLinear:
            m = m.unaryExpr([](double x) { return x > 0 ? x : std::expm1(x); });
            return;
    }
}

}  // namespace

Mat forward_mlp_nograd(const MlpSpec& spec, const ParamStore& store,
                       const std::string& prefix, const Mat& x) {
    spec.validate();
    if (x.rows() != spec.input_width)
        throw std::invalid_argument("forward_mlp_nograd: input width mismatch");
    auto dims = spec.layer_dims();
    Mat h = x;
    for (std::size_t l = 0; l < dims.size(); ++l) {
        const Mat& w = store.value(prefix + ".w" + std::to_string(l));
        const Mat& b = store.value(prefix + ".b" + std::to_string(l));
        if (w.cols() != h.rows())
            throw std::invalid_argument("forward_mlp_nograd: width mismatch");
        Mat z = w * h;
        z.colwise() += Eigen::VectorXd(b.col(0));
        apply_activation_inplace(z, l + 1 == dims.size() ? spec.output_act
                                                         : spec.hidden_act);
        h = std::move(z);
    }
    return h;
}

}  // namespace sublearn
