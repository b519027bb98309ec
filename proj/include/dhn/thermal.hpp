#ifndef DHN_THERMAL_HPP
#define DHN_THERMAL_HPP

#include <vector>

#include <Eigen/Dense>

#include "dhn/hydraulics.hpp"
#include "dhn/network.hpp"

namespace dhn {

/// Well-mixed pipe coefficients of the scalar temperature law
/// dT/dt = c1*mdot*T_in + c2*T_amb - (c1*mdot + c2)*T.
struct PipeCoefficients {
    double c1; // 1/(rho V), per kg
    double c2; // h As/(rho cp V), per s
};

PipeCoefficients pipe_coefficients(const PipeAttributes& attr, const FluidProperties& fluid);

struct BoundaryConditions {
    double supply_temp_c = 80.0;     // T_0 at the plant outlet
    double return_set_temp_c = 40.0; // user-edge outlet temperature
    double ambient_temp_c = -16.0;
};

/// Temperatures of the non-user edges (E \ E_U), ordered by edge index.
struct ThermalState {
    Eigen::VectorXd temp_c;
    double time_s = 0.0;
};

/// Assembled linear temperature dynamics dT/dt = A T + B [T0, TsetR, Tamb].
/// Rows follow the non-user edge order of the graph; every row of [A B]
/// sums to zero, so a uniform field is an equilibrium.
struct ThermalSystem {
    Eigen::MatrixXd A;
    Eigen::MatrixXd B; // 3 columns: supply, return-set, ambient
    std::vector<int> state_edges;   // non-user edge indices, row order
    std::vector<int> state_index;   // per graph edge: row index or -1
};

ThermalSystem assemble_system(const NetworkGraph& g, const HydraulicState& hyd,
                              const FluidProperties& fluid);

/// One backward-Euler interval with internal sub-stepping chosen so the local
/// error stays within `tol_c` (default 1e-4 degC). Flows (hence A) are held
/// constant over the interval.
ThermalState integrate(const ThermalState& state, const Eigen::MatrixXd& A,
                       const Eigen::MatrixXd& B, const Eigen::Vector3d& u,
                       double dt_s, double tol_c = 1e-4);

/// Heat delivered to each user edge (ordering of g.user_edges()):
/// Qp = mdot_user * cp * (T_inlet_mix - T_setR).
Eigen::VectorXd delivered_heat_w(const NetworkGraph& g, const HydraulicState& hyd,
                                 const ThermalState& thermal, const BoundaryConditions& bcs);

/// Flow-weighted mixing temperature entering node v (plant injection counts
/// at T0, user-edge outlets at TsetR). Falls back to `fallback_c` when no
/// flow enters the node.
double node_mix_temp_c(const NetworkGraph& g, const HydraulicState& hyd,
                       const ThermalState& thermal, const BoundaryConditions& bcs,
                       int v, double fallback_c);

/// Integrated enthalpy bookkeeping over a simulated interval, all in joules.
struct EnergyFluxes {
    double plant_in = 0.0;     // mdot0 cp T0 dt
    double return_out = 0.0;   // enthalpy leaving at the terminal
    double user_extracted = 0.0;
    double ambient_loss = 0.0;
    double stored = 0.0;       // rho cp V dT summed over state edges
};

/// Advance the network temperature field over `dt_s` at fixed flows using the
/// same backward-Euler discretization as `integrate`, evaluated edge-by-edge
/// in topological order, and accumulate the energy ledger. Also reports the
/// per-user delivered-heat integral divided by dt (mean power).
ThermalState simulate_interval(const NetworkGraph& g, const HydraulicState& hyd,
                               const ThermalState& state, const BoundaryConditions& bcs,
                               double dt_s, double tol_c = 1e-4,
                               EnergyFluxes* fluxes = nullptr,
                               Eigen::VectorXd* mean_user_heat_w = nullptr);

/// Initial field: feed edges at T0, everything else at TsetR.
ThermalState initial_state(const NetworkGraph& g, const BoundaryConditions& bcs);

} // namespace dhn

#endif
