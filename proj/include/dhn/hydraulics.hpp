#ifndef DHN_HYDRAULICS_HPP
#define DHN_HYDRAULICS_HPP

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "dhn/network.hpp"

namespace dhn {

struct HydraulicState {
    Eigen::VectorXd edge_flow_kg_s;   // per edge, >= 0
    Eigen::VectorXd node_pressure_pa; // per node, terminal pinned to 0
    double supply_flow_kg_s = 0.0;
};

/// Warm-start handle for repeated solves on the same graph (opaque: loop
/// flows plus the supply flow of the previous solution).
struct HydraulicWarmStart {
    Eigen::VectorXd loop_flow;
    double supply_flow = 0.0;
};

/// Steady network flow solver on the loop-flow (cotree) basis. Mass
/// conservation holds exactly by construction; Newton iterates on the loop
/// pressure residuals with damped steps. Flow directions are fixed by edge
/// orientation; a converged solution with a materially negative edge flow is
/// reported as NonConvergence.
class HydraulicSolver {
public:
    explicit HydraulicSolver(const NetworkGraph& g);

    HydraulicState solve_given_supply(const Eigen::VectorXd& zeta,
                                      double supply_kg_s,
                                      HydraulicWarmStart* warm = nullptr) const;

    /// Root head fixed (terminal at 0); the implied supply flow is reported
    /// in the returned state.
    HydraulicState solve_given_head(const Eigen::VectorXd& zeta,
                                    double head_pa,
                                    HydraulicWarmStart* warm = nullptr) const;

    const NetworkGraph& graph() const { return *g_; }
    int loop_count() const { return static_cast<int>(cotree_.size()); }

private:
    Eigen::VectorXd edge_flows(const Eigen::VectorXd& q, double m0) const;
    HydraulicState finish(const Eigen::VectorXd& zeta, const Eigen::VectorXd& q,
                          double m0) const;
    void newton(const Eigen::VectorXd& zeta, bool head_mode, double target,
                Eigen::VectorXd& q, double& m0) const;
    Eigen::VectorXd default_loop_flows(double m0) const;

    const NetworkGraph* g_;
    std::vector<int> tree_edges_;     // spanning tree (root/terminal identified)
    std::vector<int> cotree_;         // one fundamental loop per cotree edge
    Eigen::MatrixXd loops_;           // edges x loops, signed loop incidence
    Eigen::VectorXd through_;         // signed root->terminal path pattern
    Eigen::MatrixXd split_fit_;       // least-squares map for the uniform-split init
};

HydraulicState solve_flow_given_supply(const NetworkGraph& g, const Eigen::VectorXd& zeta,
                                       double supply_kg_s);
HydraulicState solve_flow_given_head_drop(const NetworkGraph& g, const Eigen::VectorXd& zeta,
                                          double head_pa);

struct HydraulicResiduals {
    double mass_kg_s = 0.0;     // max-norm of conservation residual
    double pressure_pa = 0.0;   // max-norm of dP(e) - zeta(e) mdot(e)^2 vs incidence
};

HydraulicResiduals residuals(const NetworkGraph& g, const Eigen::VectorXd& zeta,
                             const HydraulicState& state);

} // namespace dhn

#endif
