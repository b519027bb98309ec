#include "dhn/optim.hpp"

#include <cmath>
#include <deque>

namespace dhn {

namespace {
Eigen::VectorXd clamp(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                      const Eigen::VectorXd& hi) {
    return x.cwiseMax(lo).cwiseMin(hi);
}
} // namespace

double projected_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper) {
    return (x - clamp(x - g, lower, upper)).cwiseAbs().maxCoeff();
}

LbfgsResult projected_lbfgs(const std::function<double(const Eigen::VectorXd&)>& value,
                            const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& grad,
                            const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                            const Eigen::VectorXd& x0, const LbfgsOptions& opts) {
    const int n = static_cast<int>(x0.size());
    LbfgsResult res;
    res.x = clamp(x0, lower, upper);
    res.f = value(res.x);
    res.gradient = grad(res.x);
    res.evaluations = 1;

    std::deque<Eigen::VectorXd> s_hist, y_hist;
    std::deque<double> rho_hist;

    for (int it = 0; it < opts.max_iterations; ++it) {
        res.iterations = it;
        res.projected_gradient_norm =
            projected_gradient_norm(res.x, res.gradient, lower, upper);
        if (res.projected_gradient_norm <= opts.tolerance) {
            res.converged = true;
            return res;
        }

        // Two-loop recursion on the stored pairs.
        Eigen::VectorXd d = -res.gradient;
        if (!s_hist.empty()) {
            std::vector<double> alpha(s_hist.size());
            for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
                alpha[i] = rho_hist[i] * s_hist[i].dot(d);
                d -= alpha[i] * y_hist[i];
            }
            const double gamma =
                s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
            d *= gamma;
            for (size_t i = 0; i < s_hist.size(); ++i) {
                const double beta = rho_hist[i] * y_hist[i].dot(d);
                d += (alpha[i] - beta) * s_hist[i];
            }
        }
        if (d.dot(res.gradient) >= 0.0) d = -res.gradient;

        // Armijo backtracking along the projection arc.
        double step = s_hist.empty() ? 1.0 / std::max(1.0, res.gradient.norm()) : 1.0;
        bool moved = false;
        Eigen::VectorXd x_new;
        double f_new = res.f;
        for (int ls = 0; ls < opts.max_line_steps; ++ls) {
            x_new = clamp(res.x + step * d, lower, upper);
            const Eigen::VectorXd dx = x_new - res.x;
            const double dxn = dx.cwiseAbs().maxCoeff();
            if (dxn <= 1e-18 * std::max(1.0, res.x.cwiseAbs().maxCoeff())) break;
            f_new = value(x_new);
            res.evaluations++;
            const double slope = res.gradient.dot(dx);
            if (f_new <= res.f + 1e-4 * std::min(slope, 0.0) &&
                (slope < 0.0 || f_new < res.f)) {
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) {
            // no acceptable step along d; done if the projected gradient agrees
            res.converged = res.projected_gradient_norm <= 10.0 * opts.tolerance;
            return res;
        }

        const Eigen::VectorXd g_new = grad(x_new);
        const Eigen::VectorXd s = x_new - res.x;
        const Eigen::VectorXd y = g_new - res.gradient;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opts.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        const double f_change = std::abs(res.f - f_new);
        res.x = x_new;
        res.f = f_new;
        res.gradient = g_new;
        if (opts.f_tolerance > 0.0 &&
            f_change <= opts.f_tolerance * std::max(1.0, std::abs(res.f))) {
            res.projected_gradient_norm =
                projected_gradient_norm(res.x, res.gradient, lower, upper);
            res.converged = res.projected_gradient_norm <= opts.tolerance * 100.0;
            return res;
        }
    }
    res.projected_gradient_norm = projected_gradient_norm(res.x, res.gradient, lower, upper);
    return res;
}

} // namespace dhn
