#include "dhn/thermal.hpp"

#include <cmath>
#include <deque>

namespace dhn {

PipeCoefficients pipe_coefficients(const PipeAttributes& attr, const FluidProperties& fluid) {
    const double v = attr.volume_m3();
    if (v <= 0.0) throw SpecError("pipe volume must be positive");
    PipeCoefficients c;
    c.c1 = 1.0 / (fluid.density_kg_m3 * v);
    c.c2 = attr.heat_transfer_w_per_m2k * attr.surface_area_m2() /
           (fluid.density_kg_m3 * fluid.specific_heat_j_per_kgk * v);
    return c;
}

namespace {

// Mixing fractions of flow entering node v: (edge index or -1 for
// plant/user boundary source, source column, weight).
struct InflowShare {
    int state_row;  // contributing non-user edge row, or -1
    int b_column;   // 0 = supply, 1 = return-set, -1 = none
    double fraction;
};

double total_inflow(const NetworkGraph& g, const HydraulicState& hyd, int v) {
    double s = 0.0;
    for (int e : g.in_edges(v)) s += hyd.edge_flow_kg_s(e);
    if (v == g.root()) s += hyd.supply_flow_kg_s;
    return s;
}

std::vector<InflowShare> inflow_shares(const NetworkGraph& g, const HydraulicState& hyd,
                                       const std::vector<int>& state_index, int v) {
    std::vector<InflowShare> shares;
    const double total = total_inflow(g, hyd, v);
    if (total <= 0.0) return shares;
    for (int e : g.in_edges(v)) {
        const double f = hyd.edge_flow_kg_s(e) / total;
        if (f <= 0.0) continue;
        if (g.edge(e).kind == EdgeKind::User)
            shares.push_back({-1, 1, f});
        else
            shares.push_back({state_index[e], -1, f});
    }
    if (v == g.root() && hyd.supply_flow_kg_s > 0.0)
        shares.push_back({-1, 0, hyd.supply_flow_kg_s / total});
    return shares;
}

} // namespace

ThermalSystem assemble_system(const NetworkGraph& g, const HydraulicState& hyd,
                              const FluidProperties& fluid) {
    Eigen::VectorXd inj = Eigen::VectorXd::Zero(g.node_count());
    inj(g.root()) = hyd.supply_flow_kg_s;
    inj(g.terminal()) = -hyd.supply_flow_kg_s;
    const double mass_res =
        (g.incidence() * hyd.edge_flow_kg_s - inj).cwiseAbs().maxCoeff();
    if (mass_res > 1e-6 * std::max(1.0, hyd.supply_flow_kg_s))
        throw InconsistentFlow("hydraulic state violates conservation by " +
                               std::to_string(mass_res) + " kg/s");

    ThermalSystem sys;
    sys.state_index.assign(g.edge_count(), -1);
    for (int e = 0; e < g.edge_count(); ++e) {
        if (g.edge(e).kind == EdgeKind::User) continue;
        sys.state_index[e] = static_cast<int>(sys.state_edges.size());
        sys.state_edges.push_back(e);
    }
    const int n = static_cast<int>(sys.state_edges.size());
    sys.A = Eigen::MatrixXd::Zero(n, n);
    sys.B = Eigen::MatrixXd::Zero(n, 3);
    for (int row = 0; row < n; ++row) {
        const int e = sys.state_edges[row];
        const Edge& ed = g.edge(e);
        const PipeCoefficients c = pipe_coefficients(ed.pipe, fluid);
        const double adv = c.c1 * hyd.edge_flow_kg_s(e);
        sys.A(row, row) = -(adv + c.c2);
        sys.B(row, 2) = c.c2;
        if (adv > 0.0) {
            for (const InflowShare& s : inflow_shares(g, hyd, sys.state_index, ed.tail)) {
                if (s.state_row >= 0)
                    sys.A(row, s.state_row) += adv * s.fraction;
                else
                    sys.B(row, s.b_column) += adv * s.fraction;
            }
        }
    }
    return sys;
}

namespace {

int substep_count(const Eigen::VectorXd& rate, const Eigen::VectorXd& tdot, double dt_s,
                  double tol_c) {
    double worst = 0.0;
    for (int i = 0; i < rate.size(); ++i)
        worst = std::max(worst, rate(i) * std::abs(tdot(i)));
    const double n = 1.3 * dt_s * std::sqrt(worst / (2.0 * tol_c));
    return std::min(500000, std::max(1, static_cast<int>(std::ceil(n))));
}

} // namespace

ThermalState integrate(const ThermalState& state, const Eigen::MatrixXd& A,
                       const Eigen::MatrixXd& B, const Eigen::Vector3d& u,
                       double dt_s, double tol_c) {
    if (dt_s <= 0.0) throw SpecError("integration interval must be positive");
    const int n = static_cast<int>(A.rows());
    ThermalState out = state;
    if (n == 0) {
        out.time_s += dt_s;
        return out;
    }
    const Eigen::VectorXd bu = B * u;
    const Eigen::VectorXd tdot0 = A * state.temp_c + bu;
    const Eigen::VectorXd rate = -A.diagonal();
    const int steps = substep_count(rate, tdot0, dt_s, tol_c);
    const double h = dt_s / steps;
    const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(n, n) - h * A;
    const Eigen::PartialPivLU<Eigen::MatrixXd> lu(M);
    Eigen::VectorXd t = state.temp_c;
    Eigen::VectorXd rhs(n);
    for (int s = 0; s < steps; ++s) {
        rhs = t + h * bu;
        t = lu.solve(rhs);
    }
    out.temp_c = t;
    out.time_s += dt_s;
    return out;
}

double node_mix_temp_c(const NetworkGraph& g, const HydraulicState& hyd,
                       const ThermalState& thermal, const BoundaryConditions& bcs,
                       int v, double fallback_c) {
    double flow = 0.0;
    double enth = 0.0;
    int state_row = 0;
    std::vector<int> rows(g.edge_count(), -1);
    for (int e = 0; e < g.edge_count(); ++e)
        if (g.edge(e).kind != EdgeKind::User) rows[e] = state_row++;
    for (int e : g.in_edges(v)) {
        const double m = hyd.edge_flow_kg_s(e);
        if (m <= 0.0) continue;
        const double t =
            g.edge(e).kind == EdgeKind::User ? bcs.return_set_temp_c : thermal.temp_c(rows[e]);
        flow += m;
        enth += m * t;
    }
    if (v == g.root() && hyd.supply_flow_kg_s > 0.0) {
        flow += hyd.supply_flow_kg_s;
        enth += hyd.supply_flow_kg_s * bcs.supply_temp_c;
    }
    if (flow <= 0.0) return fallback_c;
    return enth / flow;
}

Eigen::VectorXd delivered_heat_w(const NetworkGraph& g, const HydraulicState& hyd,
                                 const ThermalState& thermal, const BoundaryConditions& bcs) {
    const auto& users = g.user_edges();
    Eigen::VectorXd q(static_cast<int>(users.size()));
    const double cp = g.fluid().specific_heat_j_per_kgk;
    for (size_t i = 0; i < users.size(); ++i) {
        const int e = users[i];
        const double m = hyd.edge_flow_kg_s(e);
        const double tin =
            node_mix_temp_c(g, hyd, thermal, bcs, g.edge(e).tail, bcs.return_set_temp_c);
        q(static_cast<int>(i)) = m * cp * (tin - bcs.return_set_temp_c);
    }
    return q;
}

ThermalState initial_state(const NetworkGraph& g, const BoundaryConditions& bcs) {
    ThermalState st;
    int n = 0;
    for (int e = 0; e < g.edge_count(); ++e)
        if (g.edge(e).kind != EdgeKind::User) ++n;
    st.temp_c.resize(n);
    int row = 0;
    for (int e = 0; e < g.edge_count(); ++e) {
        if (g.edge(e).kind == EdgeKind::User) continue;
        st.temp_c(row++) =
            g.edge(e).kind == EdgeKind::Feed ? bcs.supply_temp_c : bcs.return_set_temp_c;
    }
    return st;
}

ThermalState simulate_interval(const NetworkGraph& g, const HydraulicState& hyd,
                               const ThermalState& state, const BoundaryConditions& bcs,
                               double dt_s, double tol_c, EnergyFluxes* fluxes,
                               Eigen::VectorXd* mean_user_heat_w) {
    if (dt_s <= 0.0) throw SpecError("interval must be positive");
    const ThermalSystem sys = assemble_system(g, hyd, g.fluid());
    const int n = static_cast<int>(sys.state_edges.size());
    const Eigen::Vector3d u(bcs.supply_temp_c, bcs.return_set_temp_c, bcs.ambient_temp_c);

    // Topological order over state edges: an edge depends on the edges that
    // flow into its tail node. The network is loop-free by construction.
    std::vector<int> indeg(n, 0);
    std::vector<std::vector<int>> dependents(n);
    for (int row = 0; row < n; ++row) {
        for (int col = 0; col < n; ++col) {
            if (col != row && sys.A(row, col) != 0.0) {
                indeg[row]++;
                dependents[col].push_back(row);
            }
        }
    }
    std::deque<int> ready;
    for (int row = 0; row < n; ++row)
        if (indeg[row] == 0) ready.push_back(row);
    std::vector<int> order;
    order.reserve(n);
    while (!ready.empty()) {
        const int row = ready.front();
        ready.pop_front();
        order.push_back(row);
        for (int d : dependents[row])
            if (--indeg[d] == 0) ready.push_back(d);
    }
    if (static_cast<int>(order.size()) != n)
        throw InconsistentFlow("temperature dependency graph is cyclic");

    const Eigen::VectorXd bu = sys.B * u;
    const Eigen::VectorXd tdot0 = sys.A * state.temp_c + bu;
    const Eigen::VectorXd rate = -sys.A.diagonal();
    const int steps = substep_count(rate, tdot0, dt_s, tol_c);
    const double h = dt_s / steps;

    const double cp = g.fluid().specific_heat_j_per_kgk;
    const double rho = g.fluid().density_kg_m3;
    const auto& users = g.user_edges();
    Eigen::VectorXd user_heat = Eigen::VectorXd::Zero(static_cast<int>(users.size()));
    EnergyFluxes fx;

    // Fixed-flow mixing structure, prepared once: per user, the enthalpy
    // shares entering its tail node; likewise for the terminal outflow.
    struct Share {
        int row;      // state row, or -1 for a boundary source
        int boundary; // 0 supply, 1 return-set when row < 0
        double flow;
    };
    auto shares_at = [&](int v) {
        std::vector<Share> out;
        for (int e : g.in_edges(v)) {
            const double m = hyd.edge_flow_kg_s(e);
            if (m <= 0.0) continue;
            if (g.edge(e).kind == EdgeKind::User)
                out.push_back({-1, 1, m});
            else
                out.push_back({sys.state_index[e], 0, m});
        }
        if (v == g.root() && hyd.supply_flow_kg_s > 0.0)
            out.push_back({-1, 0, hyd.supply_flow_kg_s});
        return out;
    };
    std::vector<std::vector<Share>> user_shares;
    std::vector<double> user_inflow;
    for (int e : users) {
        user_shares.push_back(shares_at(g.edge(e).tail));
        double tot = 0.0;
        for (const Share& s : user_shares.back()) tot += s.flow;
        user_inflow.push_back(tot);
    }
    const std::vector<Share> term_shares = shares_at(g.terminal());
    std::vector<double> loss_coef(n);
    for (int row = 0; row < n; ++row) {
        const Edge& ed = g.edge(sys.state_edges[row]);
        loss_coef[row] = ed.pipe.heat_transfer_w_per_m2k * ed.pipe.surface_area_m2();
    }
    auto mix_of = [&](const std::vector<Share>& shares, double total,
                      const Eigen::VectorXd& field) {
        if (total <= 0.0) return bcs.return_set_temp_c;
        double enth = 0.0;
        for (const Share& s : shares) {
            const double te = s.row >= 0
                                  ? field(s.row)
                                  : (s.boundary == 0 ? bcs.supply_temp_c
                                                     : bcs.return_set_temp_c);
            enth += s.flow * te;
        }
        return enth / total;
    };

    std::vector<std::vector<std::pair<int, double>>> offdiag(n);
    for (int row = 0; row < n; ++row)
        for (int col = 0; col < n; ++col)
            if (col != row && sys.A(row, col) != 0.0)
                offdiag[row].push_back({col, sys.A(row, col)});

    Eigen::VectorXd t = state.temp_c;
    Eigen::VectorXd tn(n);
    for (int s = 0; s < steps; ++s) {
        for (int row : order) {
            double acc = t(row) + h * bu(row);
            for (const auto& [col, a] : offdiag[row]) acc += h * a * tn(col);
            tn(row) = acc / (1.0 - h * sys.A(row, row));
        }
        // Energy ledger evaluated at the end-of-substep field (the backward
        // Euler flux convention, so the discrete balance closes exactly).
        fx.plant_in += hyd.supply_flow_kg_s * cp * bcs.supply_temp_c * h;
        for (const Share& sh : term_shares) {
            const double te = sh.row >= 0 ? tn(sh.row)
                                          : (sh.boundary == 0 ? bcs.supply_temp_c
                                                              : bcs.return_set_temp_c);
            fx.return_out += sh.flow * cp * te * h;
        }
        for (int row = 0; row < n; ++row)
            fx.ambient_loss += loss_coef[row] * (tn(row) - bcs.ambient_temp_c) * h;
        for (size_t i = 0; i < users.size(); ++i) {
            const double m = hyd.edge_flow_kg_s(users[i]);
            const double tin = mix_of(user_shares[i], user_inflow[i], tn);
            user_heat(static_cast<int>(i)) += m * cp * (tin - bcs.return_set_temp_c) * h;
        }
        t.swap(tn);
    }

    for (int row = 0; row < n; ++row) {
        const int e = sys.state_edges[row];
        fx.stored += rho * cp * g.edge(e).pipe.volume_m3() * (t(row) - state.temp_c(row));
    }
    fx.user_extracted = user_heat.sum();
    if (fluxes) *fluxes = fx;
    if (mean_user_heat_w) *mean_user_heat_w = user_heat / dt_s;

    ThermalState out;
    out.temp_c = t;
    out.time_s = state.time_s + dt_s;
    return out;
}

} // namespace dhn
