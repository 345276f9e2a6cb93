#include "sharpen/optimize.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "sharpen/errors.hpp"

namespace sharpen {

Eigen::VectorXd project_ball(Eigen::VectorXd x, double radius, std::size_t blocks) {
    const auto len = x.size() / static_cast<Eigen::Index>(blocks);
    for (std::size_t b = 0; b < blocks; ++b) {
        auto seg = x.segment(static_cast<Eigen::Index>(b) * len, len);
        const double n = seg.norm();
        if (n > radius && n > 0.0) {
            seg *= radius / n;
        }
    }
    return x;
}

namespace {

// ||x - P(x - g)||, the usual stationarity measure for a ball constraint.
double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g, double radius, std::size_t blocks) {
    return (x - project_ball(x - g, radius, blocks)).norm();
}

} // namespace

BallResult minimize_in_ball(const Objective& f, Eigen::VectorXd x0, double radius, const BallOptions& opts,
                            const Hessian& hess) {
    BallResult res;
    res.x = project_ball(std::move(x0), radius, opts.blocks);
    Eigen::VectorXd g(res.x.size());
    res.value = f(res.x, &g);
    double step = opts.step;

    for (res.iterations = 0; res.iterations < opts.max_iters; ++res.iterations) {
        res.gradient_norm = projected_gradient_norm(res.x, g, radius, opts.blocks);
        const double scale = 1.0 + res.x.norm();
        if (res.gradient_norm <= opts.tolerance * scale) {
            res.converged = true;
            break;
        }

        bool moved = false;
        if (hess) {
            Eigen::MatrixXd h = hess(res.x);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(h);
            const double lo = eig.eigenvalues().minCoeff();
            const double hi = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
            const double shift = lo < 1e-10 * hi ? 1e-10 * hi - lo : 0.0;
            const Eigen::VectorXd dir =
                -(eig.eigenvectors() *
                  ((eig.eigenvectors().transpose() * g).array() / (eig.eigenvalues().array() + shift)).matrix());
            double t = 1.0;
            for (int k = 0; k < 30; ++k, t *= 0.5) {
                Eigen::VectorXd cand = project_ball(res.x + t * dir, radius, opts.blocks);
                Eigen::VectorXd cg(cand.size());
                const double v = f(cand, &cg);
                if (std::isfinite(v) && v <= res.value + 1e-4 * g.dot(cand - res.x)) {
                    moved = (cand - res.x).norm() > 0.0;
                    res.x = std::move(cand);
                    res.value = v;
                    g = std::move(cg);
                    break;
                }
            }
        }
        if (!moved) {
            for (int k = 0; k < 60; ++k, step *= 0.5) {
                Eigen::VectorXd cand = project_ball(res.x - step * g, radius, opts.blocks);
                Eigen::VectorXd cg(cand.size());
                const double v = f(cand, &cg);
                if (std::isfinite(v) && v <= res.value + 1e-4 * g.dot(cand - res.x)) {
                    moved = (cand - res.x).norm() > 0.0;
                    res.x = std::move(cand);
                    res.value = v;
                    g = std::move(cg);
                    step *= 2.0;
                    break;
                }
            }
        }
        if (!moved) {
            res.gradient_norm = projected_gradient_norm(res.x, g, radius, opts.blocks);
            res.converged = res.gradient_norm <= std::sqrt(opts.tolerance) * (1.0 + res.x.norm());
            break;
        }
    }
    if (!res.converged) {
        res.gradient_norm = projected_gradient_norm(res.x, g, radius, opts.blocks);
        res.converged = res.gradient_norm <= opts.tolerance * (1.0 + res.x.norm());
    }
    if (!res.converged && opts.throw_on_stall) {
        throw ConvergenceError("ball-constrained minimization did not converge after " +
                                   std::to_string(res.iterations) + " iterations",
                               res.gradient_norm);
    }
    return res;
}

} // namespace sharpen

namespace sharpen {

Eigen::VectorXd flatten(const Params& theta) {
    std::size_t total = 0;
    for (const auto& layer : theta) {
        total += layer.size();
    }
    Eigen::VectorXd v(static_cast<Eigen::Index>(total));
    Eigen::Index k = 0;
    for (const auto& layer : theta) {
        for (double t : layer) {
            v[k++] = t;
        }
    }
    return v;
}

Params unflatten(const Eigen::VectorXd& v, std::size_t layers) {
    const auto d = static_cast<std::size_t>(v.size()) / layers;
    Params theta(layers, std::vector<double>(d));
    for (std::size_t h = 0; h < layers; ++h) {
        for (std::size_t k = 0; k < d; ++k) {
            theta[h][k] = v[static_cast<Eigen::Index>(h * d + k)];
        }
    }
    return theta;
}

} // namespace sharpen
