#pragma once

#include <functional>
#include <optional>

#include <Eigen/Dense>

namespace sharpen {

struct BallOptions {
    std::size_t max_iters = 500;
    /// Stop once the projected-gradient step length falls below this.
    double tolerance = 1e-9;
    /// Initial step for gradient iterations.
    double step = 1.0;
    bool throw_on_stall = false;
    /// The radius applies to each of this many equal contiguous blocks.
    std::size_t blocks = 1;
};

struct BallResult {
    Eigen::VectorXd x;
    double value = 0.0;
    double gradient_norm = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Value and gradient at a point; fills `grad` when non-null.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd* grad)>;
/// Optional Hessian for Newton steps.
using Hessian = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

Eigen::VectorXd project_ball(Eigen::VectorXd x, double radius, std::size_t blocks = 1);

/// Minimizes over {||x|| <= radius}. With a Hessian, takes regularized Newton
/// steps (shifted to positive definite) and falls back to projected gradient
/// steps with Armijo backtracking.
BallResult minimize_in_ball(const Objective& f, Eigen::VectorXd x0, double radius, const BallOptions& opts = {},
                            const Hessian& hess = {});

} // namespace sharpen

#include "sharpen/softmax.hpp"

namespace sharpen {

Eigen::VectorXd flatten(const Params& theta);
Params unflatten(const Eigen::VectorXd& v, std::size_t layers);

} // namespace sharpen
