#include "dhn/coordinator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <numeric>

namespace dhn {

namespace {

struct Workspace {
    const ReducedGraph* r = nullptr;
    std::vector<int> user_edges;  // reduced edge ids with a cost table
    std::vector<int> pass_edges;  // reduced edge ids of pass-through subsystems
    Eigen::MatrixXd a;            // nodes x (pass flows + total supply)
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
    Eigen::MatrixXd au;           // nodes x user edges (conservation columns)
    // spanning tree of the reduced graph for the canonical pressure assignment
    std::vector<int> tree_parent_edge; // per node, -1 at the terminal root
    std::vector<int> bfs_order;

    explicit Workspace(const SelectionProblem& p) : r(p.reduced) {
        for (size_t e = 0; e < r->edges.size(); ++e) {
            if (r->edges[e].pass_through)
                pass_edges.push_back(static_cast<int>(e));
            else
                user_edges.push_back(static_cast<int>(e));
        }
        if (user_edges.size() != p.tables.size())
            throw SpecError("one cost table per user-bearing subsystem required");
        const int nn = static_cast<int>(r->node_full_ids.size());
        const int np = static_cast<int>(pass_edges.size());
        a.resize(nn, np + 1);
        for (int j = 0; j < np; ++j) a.col(j) = r->incidence.col(pass_edges[j]);
        a.col(np).setZero();
        a(r->root, np) = -1.0;      // injection enters the balance as -m0 at root
        a(r->terminal, np) = 1.0;
        qr.compute(a);
        au.resize(nn, static_cast<int>(user_edges.size()));
        for (size_t j = 0; j < user_edges.size(); ++j)
            au.col(static_cast<int>(j)) = r->incidence.col(user_edges[j]);

        // undirected BFS tree from the terminal for pressure propagation
        tree_parent_edge.assign(nn, -1);
        std::vector<char> seen(nn, 0);
        std::deque<int> q{r->terminal};
        seen[r->terminal] = 1;
        bfs_order.push_back(r->terminal);
        while (!q.empty()) {
            const int v = q.front();
            q.pop_front();
            for (size_t e = 0; e < r->edges.size(); ++e) {
                const auto& ed = r->edges[e];
                int other = -1;
                if (ed.tail == v) other = ed.head;
                if (ed.head == v) other = ed.tail;
                if (other < 0 || seen[other]) continue;
                seen[other] = 1;
                tree_parent_edge[other] = static_cast<int>(e);
                bfs_order.push_back(other);
                q.push_back(other);
            }
        }
        for (int v = 0; v < nn; ++v)
            if (!seen[v]) throw SpecError("reduced graph is disconnected");
    }

    // Flows implied by a choice of user-subsystem flows; returns residual.
    void conservation(const Eigen::VectorXd& user_flow, Eigen::VectorXd& pass_flow,
                      double& supply, double& mass_residual) const {
        const Eigen::VectorXd rhs = -(au * user_flow);
        const Eigen::VectorXd y = qr.solve(rhs);
        const int np = static_cast<int>(pass_edges.size());
        pass_flow = y.head(np);
        supply = y(np);
        mass_residual = (a * y - rhs).cwiseAbs().maxCoeff();
    }

    // Canonical pressure assignment: propagate along the BFS tree from the
    // terminal (P=0), then report the worst mismatch over all edges.
    double pressure_residual(const Eigen::VectorXd& drop_per_edge) const {
        const int nn = static_cast<int>(r->node_full_ids.size());
        Eigen::VectorXd pv(nn);
        pv(r->terminal) = 0.0;
        for (size_t i = 1; i < bfs_order.size(); ++i) {
            const int v = bfs_order[i];
            const auto& ed = r->edges[tree_parent_edge[v]];
            const double d = drop_per_edge(tree_parent_edge[v]);
            if (ed.tail == v)
                pv(v) = pv(ed.head) + d;
            else
                pv(v) = pv(ed.tail) - d;
        }
        double worst = 0.0;
        for (size_t e = 0; e < r->edges.size(); ++e) {
            const auto& ed = r->edges[e];
            worst = std::max(worst,
                             std::abs(drop_per_edge(static_cast<int>(e)) -
                                      (pv(ed.tail) - pv(ed.head))));
        }
        return worst;
    }

    SelectionResiduals evaluate(const SelectionProblem& p, const std::vector<int>& idx) const {
        const int nu = static_cast<int>(user_edges.size());
        Eigen::VectorXd user_flow(nu), user_drop(nu);
        for (int j = 0; j < nu; ++j) {
            const CostTableEntry& e = p.tables[j]->entries.at(idx[j]);
            user_flow(j) = e.mdot0_kg_s;
            user_drop(j) = e.dp_tot_pa;
        }
        SelectionResiduals res;
        Eigen::VectorXd pass_flow;
        conservation(user_flow, pass_flow, res.total_supply_kg_s, res.mass_kg_s);
        const double flow_scale = std::max(1.0, std::abs(res.total_supply_kg_s));
        Eigen::VectorXd drops(static_cast<int>(r->edges.size()));
        for (int j = 0; j < nu; ++j) drops(user_edges[j]) = user_drop(j);
        for (size_t j = 0; j < pass_edges.size(); ++j) {
            const double f = pass_flow(static_cast<int>(j));
            if (f < -1e-9 * flow_scale) res.flow_reversal = true;
            drops(pass_edges[j]) = r->edges[pass_edges[j]].zeta_eq * f * std::abs(f);
        }
        res.pressure_pa = pressure_residual(drops);
        return res;
    }
};

} // namespace

SelectionResiduals feasibility_check(const SelectionProblem& p, const std::vector<int>& idx) {
    Workspace ws(p);
    if (idx.size() != ws.user_edges.size())
        throw SpecError("index vector size mismatch");
    return ws.evaluate(p, idx);
}

double default_epsilon_pa(const CandidateSet& candidates) {
    const auto& v = candidates.pressures_pa;
    if (v.size() < 2) return std::max(0.02 * v.at(0), 1e-3);
    double gap = 0.0;
    for (size_t i = 1; i < v.size(); ++i) gap = std::max(gap, v[i] - v[i - 1]);
    return 0.55 * gap;
}

Selection select_optimal(const SelectionProblem& p) {
    Workspace ws(p);
    const int nu = static_cast<int>(ws.user_edges.size());

    // feasible candidate indices per subsystem
    std::vector<std::vector<int>> feas(nu);
    double combos = 1.0;
    for (int j = 0; j < nu; ++j) {
        for (size_t i = 0; i < p.tables[j]->entries.size(); ++i)
            if (p.tables[j]->entries[i].feasible) feas[j].push_back(static_cast<int>(i));
        if (feas[j].empty())
            throw NoFeasibleSelection("subsystem " + std::to_string(j) +
                                      " has no feasible cost-table entry");
        combos *= static_cast<double>(feas[j].size());
    }

    const double mass_tol = 1e-9;
    std::vector<int> best;
    double best_cost = std::numeric_limits<double>::infinity();
    SelectionResiduals best_res;

    auto consider = [&](const std::vector<int>& idx, double cost) {
        const SelectionResiduals res = ws.evaluate(p, idx);
        if (res.flow_reversal) return;
        if (res.mass_kg_s > mass_tol * std::max(1.0, std::abs(res.total_supply_kg_s))) return;
        if (res.pressure_pa >= p.epsilon_pa) return;
        if (cost < best_cost || (cost == best_cost && (best.empty() || idx < best))) {
            best = idx;
            best_cost = cost;
            best_res = res;
        }
    };

    if (combos <= 1e5) {
        // plain lexicographic enumeration
        std::vector<int> pos(nu, 0), idx(nu);
        while (true) {
            double cost = 0.0;
            for (int j = 0; j < nu; ++j) {
                idx[j] = feas[j][pos[j]];
                cost += p.tables[j]->entries[idx[j]].cost_kg;
            }
            consider(idx, cost);
            int j = nu - 1;
            while (j >= 0 && ++pos[j] == static_cast<int>(feas[j].size())) pos[j--] = 0;
            if (j < 0) break;
        }
    } else {
        // branch and bound: candidates sorted by cost, suffix minima as bound
        std::vector<std::vector<int>> sorted = feas;
        for (int j = 0; j < nu; ++j)
            std::sort(sorted[j].begin(), sorted[j].end(), [&](int a, int b) {
                const double ca = p.tables[j]->entries[a].cost_kg;
                const double cb = p.tables[j]->entries[b].cost_kg;
                if (ca != cb) return ca < cb;
                return a < b;
            });
        std::vector<double> suffix_min(nu + 1, 0.0);
        for (int j = nu - 1; j >= 0; --j)
            suffix_min[j] = suffix_min[j + 1] +
                            p.tables[j]->entries[sorted[j][0]].cost_kg;
        std::vector<int> idx(nu, -1);
        std::function<void(int, double)> dfs = [&](int j, double cost) {
            if (j == nu) {
                consider(idx, cost);
                return;
            }
            for (int cand : sorted[j]) {
                const double c = cost + p.tables[j]->entries[cand].cost_kg;
                if (c + suffix_min[j + 1] > best_cost) break; // sorted: no better below
                idx[j] = cand;
                dfs(j + 1, c);
            }
            idx[j] = -1;
        };
        dfs(0, 0.0);
    }

    if (best.empty())
        throw NoFeasibleSelection("no index combination satisfies the epsilon balance");
    Selection sel;
    sel.indices = best;
    sel.total_cost_kg = best_cost;
    sel.total_supply_kg_s = best_res.total_supply_kg_s;
    sel.pressure_residual_pa = best_res.pressure_pa;
    sel.mass_residual_kg_s = best_res.mass_kg_s;
    return sel;
}

} // namespace dhn
