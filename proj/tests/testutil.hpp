#pragma once

#include <functional>
#include <string>

#include "sublearn/diffgraph.hpp"

namespace sublearn::test {

// Central finite-difference gradient oracle. `loss` must rebuild its graph
// from the store on every call so the perturbed forward passes stay
// independent of the gradients under test.
struct GradCheckResult {
    bool pass = true;
    std::string worst_param;
    double worst_abs_err = 0.0;
    double worst_rel_err = 0.0;
};

inline GradCheckResult check_gradients(
    ParamStore& store, const std::function<double()>& loss_value,
    const GradMap& analytic, double h = 1e-4, double rel_tol = 1e-3,
    double abs_floor = 1e-6) {
    GradCheckResult result;
    for (const auto& [name, grad] : analytic.grads) {
        Mat& theta = store.mutable_value(name);
        for (Eigen::Index r = 0; r < theta.rows(); ++r) {
            for (Eigen::Index c = 0; c < theta.cols(); ++c) {
                const double keep = theta(r, c);
                theta(r, c) = keep + h;
                const double up = loss_value();
                theta(r, c) = keep - h;
                const double down = loss_value();
                theta(r, c) = keep;
                const double fd = (up - down) / (2.0 * h);
                const double ad = grad(r, c);
                const double abs_err = std::abs(fd - ad);
                const double scale = std::max(std::abs(fd), std::abs(ad));
                const double rel_err = scale > 0 ? abs_err / scale : 0.0;
                if (abs_err > abs_floor && rel_err > rel_tol) {
                    result.pass = false;
                    if (abs_err > result.worst_abs_err) {
                        result.worst_param = name;
                        result.worst_abs_err = abs_err;
                        result.worst_rel_err = rel_err;
                    }
                }
            }
        }
    }
    return result;
}

}  // namespace sublearn::test
