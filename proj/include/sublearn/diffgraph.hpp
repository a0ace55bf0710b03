#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "sublearn/rng.hpp"

namespace sublearn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

enum class Activation { Identity, Rectifier, ExpLinear, Softplus };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);

// ---------------------------------------------------------------------------
// Reverse-mode graph over dense matrices (scalars are 1x1).

struct Node {
    Mat value;
    Mat grad;  // allocated lazily, same shape as value
    bool needs_grad = false;
    std::string param;  // nonempty for parameter leaves
    std::vector<std::shared_ptr<Node>> parents;
    // pulls this->grad and accumulates into parents' grads
    std::function<void(Node&)> backprop;

    Mat& ensure_grad() {
        if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
        return grad;
    }
    bool has_grad() const { return grad.size() != 0; }
};

using NodePtr = std::shared_ptr<Node>;

class Var {
public:
    Var() = default;
    explicit Var(NodePtr n) : n_(std::move(n)) {}

    static Var constant(Mat v);
    static Var scalar(double v);

    const Mat& value() const { return n_->value; }
    double scalar_value() const;
    Eigen::Index rows() const { return n_->value.rows(); }
    Eigen::Index cols() const { return n_->value.cols(); }
    bool needs_grad() const { return n_ && n_->needs_grad; }
    bool valid() const { return n_ != nullptr; }
    const NodePtr& node() const { return n_; }

private:
    NodePtr n_;
};

// elementwise; one operand may be a 1x1 scalar, which broadcasts
Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);
Var operator-(const Var& a);

Var add_const(const Var& a, double c);
Var mul_const(const Var& a, double c);
Var rsub_const(double c, const Var& a);  // c - a

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add_colwise(const Var& m, const Var& bias);  // bias is (rows x 1)
Var activation(const Var& a, Activation act);
Var relu(const Var& a);
Var softplus(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sigmoid(const Var& a);
Var square(const Var& a);
Var clamp_max(const Var& a, double hi);
Var cwise_mul_const(const Var& a, const Mat& c);

Var sum(const Var& a);                            // -> 1x1
Var mean(const Var& a);                           // -> 1x1
Var weighted_sum(const Var& a, const Vec& w);     // row/col vector -> 1x1
Var dot(const Var& a, const Var& b);              // vectors -> 1x1
Var logsumexp_row(const Var& a);                  // 1xK -> 1x1, max-shifted
Var col(const Var& m, Eigen::Index j);
Var row(const Var& m, Eigen::Index i);
Var middle_cols(const Var& m, Eigen::Index start, Eigen::Index len);
Var hcat(const std::vector<Var>& parts);
Var normalize_rows(const Var& m);
Var normalize_cols(const Var& m);

// Backward pass from a scalar root: reverse topological order, each node
// visited exactly once; d(root)/d(root) seeds at 1.
void backward(const Var& root);

// ---------------------------------------------------------------------------
// Parameters

class ParamStore {
public:
    struct Entry {
        Mat value;
        bool nonneg = false;
    };

    void add(const std::string& name, Mat init, bool nonneg = false);
    bool has(const std::string& name) const;
    const Mat& value(const std::string& name) const;
    Mat& mutable_value(const std::string& name);
    bool nonneg(const std::string& name) const;
    const std::map<std::string, Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

private:
    std::map<std::string, Entry> entries_;  // ordered: deterministic iteration
};

struct GradMap {
    std::map<std::string, Mat> grads;

    const Mat& at(const std::string& name) const { return grads.at(name); }
    bool all_finite() const;
};

// Creates (and caches) leaf nodes for one graph; after backward(), grads()
// returns the gradient of the root w.r.t. every parameter in the store,
// with zeros for parameters the graph never reached.
class ParamLeaves {
public:
    explicit ParamLeaves(const ParamStore& store) : store_(&store) {}

    Var operator()(const std::string& name);
    GradMap grads() const;
    const ParamStore& store() const { return *store_; }

private:
    const ParamStore* store_;
    std::map<std::string, Var> cache_;
};

// ---------------------------------------------------------------------------
// Optimizer: adaptive moments with L2 weight decay and a non-negativity
// projection applied after every step.

struct AdamConfig {
    double lr = 2e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
};

class AdamOptimizer {
public:
    explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

    // applies one update; returns false (store untouched) if any gradient
    // is non-finite
    bool step(ParamStore& store, const GradMap& grads);

    const AdamConfig& config() const { return cfg_; }
    std::int64_t steps_taken() const { return t_; }

    // state round-trip so training runs can be resumed exactly
    std::map<std::string, std::pair<Mat, Mat>> state() const;
    void restore(std::int64_t t, std::map<std::string, std::pair<Mat, Mat>> st);

private:
    AdamConfig cfg_;
    std::int64_t t_ = 0;
    std::map<std::string, Mat> m_;
    std::map<std::string, Mat> v_;
};

// convenience wrapper matching the one-shot update contract
bool sgd_adam_step(ParamStore& store, const GradMap& grads, AdamOptimizer& opt);

// ---------------------------------------------------------------------------
// Fully connected network builder

struct MlpSpec {
    int input_width = 1;
    std::vector<int> hidden = {50, 50, 50};
    int output_width = 1;
    Activation hidden_act = Activation::Rectifier;
    Activation output_act = Activation::Identity;

    void validate() const;
    std::vector<std::pair<int, int>> layer_dims() const;  // (out,in) per layer
};

void init_mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec,
              Rng& rng, double weight_scale = 1.0);

// x has spec.input_width rows; any number of columns (batched inputs)
Var forward_mlp(const MlpSpec& spec, ParamLeaves& leaves,
                const std::string& prefix, const Var& x);

// value-only path used by audits, greedy selection and metric evaluation;
// streams layer by layer without retaining intermediates
Mat forward_mlp_nograd(const MlpSpec& spec, const ParamStore& store,
                       const std::string& prefix, const Mat& x);

}  // namespace sublearn
