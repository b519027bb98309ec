#include "dhn/hydraulics.hpp"

#include <cmath>
#include <deque>

namespace dhn {

namespace {
inline double signed_drop(double zeta, double m) { return zeta * m * std::abs(m); }
} // namespace

HydraulicSolver::HydraulicSolver(const NetworkGraph& g) : g_(&g) {
    const int nv = g.node_count();
    const int ne = g.edge_count();
    // BFS spanning tree over the undirected edge set, with root and terminal
    // identified so a root->terminal path always exists in the tree.
    std::vector<int> parent_edge(nv, -1);
    std::vector<int> parent_node(nv, -1);
    std::vector<char> seen(nv, 0);
    std::vector<char> in_tree(ne, 0);
    std::deque<int> queue{g.root()};
    seen[g.root()] = 1;
    while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        for (int e : g.out_edges(v)) {
            const int w = g.edge(e).head;
            if (!seen[w]) {
                seen[w] = 1;
                parent_edge[w] = e;
                parent_node[w] = v;
                in_tree[e] = 1;
                tree_edges_.push_back(e);
                queue.push_back(w);
            }
        }
        for (int e : g.in_edges(v)) {
            const int w = g.edge(e).tail;
            if (!seen[w]) {
                seen[w] = 1;
                parent_edge[w] = e;
                parent_node[w] = v;
                in_tree[e] = 1;
                tree_edges_.push_back(e);
                queue.push_back(w);
            }
        }
    }
    for (int e = 0; e < ne; ++e)
        if (!in_tree[e]) cotree_.push_back(e);

    // Signed tree path from node a to node b: +1 along edge orientation.
    auto tree_path = [&](int a, int b) {
        Eigen::VectorXd p = Eigen::VectorXd::Zero(ne);
        // walk both nodes up to the root, recording signed steps
        auto walk = [&](int v, double s) {
            while (v != g.root() && parent_edge[v] >= 0) {
                const int e = parent_edge[v];
                const double dir = (g.edge(e).head == v) ? 1.0 : -1.0;
                p(e) += s * dir;
                v = parent_node[v];
            }
        };
        walk(b, 1.0);
        walk(a, -1.0);
        return p;
    };

    through_ = tree_path(g.root(), g.terminal());
    loops_ = Eigen::MatrixXd::Zero(ne, static_cast<int>(cotree_.size()));
    for (size_t c = 0; c < cotree_.size(); ++c) {
        const int e = cotree_[c];
        Eigen::VectorXd p = tree_path(g.edge(e).head, g.edge(e).tail);
        p(e) += 1.0;
        loops_.col(static_cast<int>(c)) = p;
    }

    // Uniform-split initialization: distribute a unit supply equally over the
    // outgoing edges of every node in topological order, then fit loop flows
    // to that pattern by least squares (exact when the pattern is feasible).
    if (!cotree_.empty()) {
        Eigen::VectorXd target = Eigen::VectorXd::Zero(ne);
        std::vector<double> inflow(nv, 0.0);
        inflow[g.root()] = 1.0;
        // Kahn-style pass over the DAG defined by edge orientation.
        std::vector<int> indeg(nv, 0);
        for (int e = 0; e < ne; ++e) indeg[g.edge(e).head]++;
        std::deque<int> topo{g.root()};
        while (!topo.empty()) {
            const int v = topo.front();
            topo.pop_front();
            const auto& outs = g.out_edges(v);
            if (!outs.empty()) {
                const double share = inflow[v] / static_cast<double>(outs.size());
                for (int e : outs) {
                    target(e) = share;
                    inflow[g.edge(e).head] += share;
                    if (--indeg[g.edge(e).head] == 0) topo.push_back(g.edge(e).head);
                }
            }
        }
        split_fit_ = (loops_.transpose() * loops_)
                         .ldlt()
                         .solve(loops_.transpose())
                         .eval();
        // q0(per unit supply) cached as split_fit_ * (target - through_)
        split_fit_ = (split_fit_ * (target - through_)).eval();
    } else {
        split_fit_ = Eigen::MatrixXd::Zero(0, 1);
    }
}

Eigen::VectorXd HydraulicSolver::default_loop_flows(double m0) const {
    if (cotree_.empty()) return Eigen::VectorXd::Zero(0);
    return m0 * split_fit_.col(0);
}

Eigen::VectorXd HydraulicSolver::edge_flows(const Eigen::VectorXd& q, double m0) const {
    Eigen::VectorXd m = m0 * through_;
    if (q.size() > 0) m += loops_ * q;
    return m;
}

void HydraulicSolver::newton(const Eigen::VectorXd& zeta, bool head_mode, double target,
                             Eigen::VectorXd& q, double& m0) const {
    const int nl = loop_count();
    const int n = nl + (head_mode ? 1 : 0);
    if (n == 0) {
        if (head_mode) return;
        return;
    }
    const double pressure_scale = std::max(
        1e-12, zeta.maxCoeff() * std::max(1.0, m0 * m0));

    auto residual = [&](const Eigen::VectorXd& qq, double mm, Eigen::VectorXd& r) {
        const Eigen::VectorXd m = edge_flows(qq, mm);
        for (int c = 0; c < nl; ++c) {
            double s = 0.0;
            for (int e = 0; e < m.size(); ++e) {
                const double l = loops_(e, c);
                if (l != 0.0) s += l * signed_drop(zeta(e), m(e));
            }
            r(c) = s;
        }
        if (head_mode) {
            double s = 0.0;
            for (int e = 0; e < m.size(); ++e) {
                const double t = through_(e);
                if (t != 0.0) s += t * signed_drop(zeta(e), m(e));
            }
            r(nl) = s - target;
        }
    };

    Eigen::VectorXd r(n), r_try(n);
    residual(q, m0, r);
    const int max_iter = 50;
    for (int it = 0; it < max_iter; ++it) {
        const double rnorm = r.cwiseAbs().maxCoeff();
        if (rnorm <= 1e-12 * pressure_scale) return;
        const Eigen::VectorXd m = edge_flows(q, m0);
        Eigen::VectorXd w = (2.0 * zeta.array() * m.array().abs()).matrix();
        // Regularize dead edges so the Jacobian stays invertible near m = 0.
        const double w_floor = 1e-10 * std::max(1.0, zeta.maxCoeff());
        for (int e = 0; e < w.size(); ++e) w(e) = std::max(w(e), w_floor);
        Eigen::MatrixXd J(n, n);
        J.topLeftCorner(nl, nl) = loops_.transpose() * w.asDiagonal() * loops_;
        if (head_mode) {
            const Eigen::VectorXd jt = loops_.transpose() * (w.asDiagonal() * through_);
            J.topRightCorner(nl, 1) = jt;
            J.bottomLeftCorner(1, nl) = jt.transpose();
            J(nl, nl) = through_.dot(w.asDiagonal() * through_);
        }
        const Eigen::VectorXd step = J.partialPivLu().solve(-r);
        double alpha = 1.0;
        bool accepted = false;
        for (int ls = 0; ls < 30; ++ls) {
            Eigen::VectorXd q_try = q + alpha * step.head(nl);
            double m_try = m0 + (head_mode ? alpha * step(nl) : 0.0);
            if (head_mode && m_try <= 0.0) {
                alpha *= 0.5;
                continue;
            }
            residual(q_try, m_try, r_try);
            if (r_try.cwiseAbs().maxCoeff() < rnorm * (1.0 - 1e-4 * alpha) ||
                r_try.cwiseAbs().maxCoeff() <= 1e-12 * pressure_scale) {
                q = q_try;
                m0 = m_try;
                r = r_try;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted)
            throw NonConvergence("hydraulic Newton stalled (residual " +
                                 std::to_string(r.cwiseAbs().maxCoeff()) + " Pa)");
    }
    throw NonConvergence("hydraulic Newton exceeded iteration cap");
}

HydraulicState HydraulicSolver::finish(const Eigen::VectorXd& zeta,
                                       const Eigen::VectorXd& q, double m0) const {
    const NetworkGraph& g = *g_;
    HydraulicState st;
    st.edge_flow_kg_s = edge_flows(q, m0);
    st.supply_flow_kg_s = m0;
    const double flow_scale = std::max(1e-12, std::abs(m0));
    for (int e = 0; e < st.edge_flow_kg_s.size(); ++e) {
        if (st.edge_flow_kg_s(e) < -1e-9 * flow_scale)
            throw NonConvergence("converged flow reverses on edge '" + g.edge(e).name + "'");
        if (st.edge_flow_kg_s(e) < 0.0) st.edge_flow_kg_s(e) = 0.0;
    }
    // Node pressures by tree traversal from the terminal (reference 0).
    st.node_pressure_pa = Eigen::VectorXd::Constant(g.node_count(), std::nan(""));
    st.node_pressure_pa(g.terminal()) = 0.0;
    // Repeatedly sweep tree edges until all nodes are assigned (tree is
    // connected with root/terminal identified; root may only be reachable
    // through the through-path, whose drop we add explicitly).
    bool progress = true;
    while (progress) {
        progress = false;
        for (int e : tree_edges_) {
            const int t = g_->edge(e).tail;
            const int h = g_->edge(e).head;
            const double dp = signed_drop(zeta(e), st.edge_flow_kg_s(e));
            if (std::isnan(st.node_pressure_pa(t)) && !std::isnan(st.node_pressure_pa(h))) {
                st.node_pressure_pa(t) = st.node_pressure_pa(h) + dp;
                progress = true;
            } else if (!std::isnan(st.node_pressure_pa(t)) && std::isnan(st.node_pressure_pa(h))) {
                st.node_pressure_pa(h) = st.node_pressure_pa(t) - dp;
                progress = true;
            }
        }
        if (std::isnan(st.node_pressure_pa(g.root()))) {
            double head = 0.0;
            for (int e = 0; e < st.edge_flow_kg_s.size(); ++e)
                if (through_(e) != 0.0)
                    head += through_(e) * signed_drop(zeta(e), st.edge_flow_kg_s(e));
            st.node_pressure_pa(g.root()) = head;
            progress = true;
        }
    }
    return st;
}

HydraulicState HydraulicSolver::solve_given_supply(const Eigen::VectorXd& zeta,
                                                   double supply_kg_s,
                                                   HydraulicWarmStart* warm) const {
    if (supply_kg_s <= 0.0) throw SpecError("supply flow must be positive");
    if (zeta.size() != g_->edge_count()) throw SpecError("zeta size mismatch");
    for (int e = 0; e < zeta.size(); ++e)
        if (zeta(e) <= 0.0) throw SpecError("loss coefficients must be positive");
    Eigen::VectorXd q;
    double m0 = supply_kg_s;
    if (warm && warm->loop_flow.size() == loop_count() && warm->supply_flow > 0.0)
        q = warm->loop_flow * (supply_kg_s / warm->supply_flow);
    else
        q = default_loop_flows(supply_kg_s);
    newton(zeta, false, supply_kg_s, q, m0);
    if (warm) {
        warm->loop_flow = q;
        warm->supply_flow = m0;
    }
    return finish(zeta, q, m0);
}

HydraulicState HydraulicSolver::solve_given_head(const Eigen::VectorXd& zeta,
                                                 double head_pa,
                                                 HydraulicWarmStart* warm) const {
    if (head_pa <= 0.0) throw SpecError("head drop must be positive");
    if (zeta.size() != g_->edge_count()) throw SpecError("zeta size mismatch");
    for (int e = 0; e < zeta.size(); ++e)
        if (zeta(e) <= 0.0) throw SpecError("loss coefficients must be positive");
    double m0;
    Eigen::VectorXd q;
    if (warm && warm->loop_flow.size() == loop_count() && warm->supply_flow > 0.0) {
        q = warm->loop_flow;
        m0 = warm->supply_flow;
    } else {
        // Resistance estimate along the through path for the starting flow.
        double zsum = 0.0;
        for (int e = 0; e < zeta.size(); ++e)
            if (through_(e) != 0.0) zsum += zeta(e);
        m0 = std::sqrt(head_pa / std::max(zsum, 1e-12));
        q = default_loop_flows(m0);
    }
    newton(zeta, true, head_pa, q, m0);
    if (warm) {
        warm->loop_flow = q;
        warm->supply_flow = m0;
    }
    return finish(zeta, q, m0);
}

HydraulicState solve_flow_given_supply(const NetworkGraph& g, const Eigen::VectorXd& zeta,
                                       double supply_kg_s) {
    return HydraulicSolver(g).solve_given_supply(zeta, supply_kg_s);
}

HydraulicState solve_flow_given_head_drop(const NetworkGraph& g, const Eigen::VectorXd& zeta,
                                          double head_pa) {
    return HydraulicSolver(g).solve_given_head(zeta, head_pa);
}

HydraulicResiduals residuals(const NetworkGraph& g, const Eigen::VectorXd& zeta,
                             const HydraulicState& state) {
    HydraulicResiduals res;
    Eigen::VectorXd inj = Eigen::VectorXd::Zero(g.node_count());
    inj(g.root()) = state.supply_flow_kg_s;
    inj(g.terminal()) = -state.supply_flow_kg_s;
    const Eigen::VectorXd mass = g.incidence() * state.edge_flow_kg_s - inj;
    res.mass_kg_s = mass.cwiseAbs().maxCoeff();
    const Eigen::VectorXd dp_nodes = g.incidence().transpose() * state.node_pressure_pa;
    for (int e = 0; e < g.edge_count(); ++e) {
        const double dp_edge = signed_drop(zeta(e), state.edge_flow_kg_s(e));
        res.pressure_pa = std::max(res.pressure_pa, std::abs(dp_edge - dp_nodes(e)));
    }
    return res;
}

} // namespace dhn
