#ifndef DHN_OPTIM_HPP
#define DHN_OPTIM_HPP

#include <functional>

#include <Eigen/Dense>

namespace dhn {

struct LbfgsOptions {
    int max_iterations = 300;
    int history = 10;
    double tolerance = 1e-9;      // on the projected gradient max-norm
    double f_tolerance = 0.0;     // optional early stop on relative f change
    int max_line_steps = 40;
};

struct LbfgsResult {
    Eigen::VectorXd x;
    double f = 0.0;
    Eigen::VectorXd gradient;
    double projected_gradient_norm = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

/// Box-constrained quasi-Newton minimizer: L-BFGS directions with gradient
/// projection onto the box and Armijo backtracking along the projection arc.
LbfgsResult projected_lbfgs(const std::function<double(const Eigen::VectorXd&)>& value,
                            const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                            const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                            const Eigen::VectorXd& x0, const LbfgsOptions& opts = {});

/// max-norm of x - clamp(x - g): the first-order optimality measure for
/// box-constrained problems.
double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper);

} // namespace dhn

#endif
