#ifndef DHN_TESTS_COORD_SUPPORT_HPP
#define DHN_TESTS_COORD_SUPPORT_HPP

#include <cmath>
#include <optional>
#include <vector>

#include "dhn/coordinator.hpp"
#include "support.hpp"

namespace dhn::test {

/// Synthetic coordination instance: a trunk chain with one user-bearing
/// subsystem per segment (feed connector down, return connector back), plus
/// cost tables built around a consistent ground-truth operating point so a
/// feasible combination exists by construction.
struct CoordInstance {
    ReducedGraph reduced;
    std::vector<CostTable> tables;
    SelectionProblem problem() {
        SelectionProblem p;
        p.reduced = &reduced;
        for (const CostTable& t : tables) p.tables.push_back(&t);
        return p;
    }
};

inline CoordInstance make_coord_instance(TestRng& rng, int subsystems, int candidates,
                                         double epsilon_pa) {
    CoordInstance inst;
    ReducedGraph& r = inst.reduced;
    // nodes: f0..fS (feed trunk), rS..r0 (return trunk); term = r0, root = f0
    const int s_count = subsystems;
    for (int i = 0; i <= s_count; ++i) {
        r.node_full_ids.push_back(i);
        r.node_names.push_back("f" + std::to_string(i));
    }
    for (int i = 0; i <= s_count; ++i) {
        r.node_full_ids.push_back(100 + i);
        r.node_names.push_back("r" + std::to_string(i));
    }
    const auto fnode = [&](int i) { return i; };
    const auto rnode = [&](int i) { return s_count + 1 + i; };
    r.root = fnode(0);
    r.terminal = rnode(0);

    // ground truth: per-subsystem flows and connector resistances
    std::vector<double> m_true(s_count);
    std::vector<double> zeta_feed(s_count), zeta_ret(s_count);
    for (int j = 0; j < s_count; ++j) {
        m_true[j] = rng.uniform(0.5, 3.0);
        zeta_feed[j] = rng.uniform(0.02, 0.3);
        zeta_ret[j] = rng.uniform(0.02, 0.3);
    }
    // reduced edges: user subsystems first (matching recursive_partition's
    // convention), then the connectors
    for (int j = 0; j < s_count; ++j) {
        ReducedEdge e;
        e.tail = fnode(j + 1);
        e.head = rnode(j + 1);
        e.subsystem = j;
        e.pass_through = false;
        r.edges.push_back(e);
    }
    for (int j = 0; j < s_count; ++j) {
        ReducedEdge feed;
        feed.tail = fnode(j);
        feed.head = fnode(j + 1);
        feed.subsystem = s_count + 2 * j;
        feed.pass_through = true;
        feed.zeta_eq = zeta_feed[j];
        r.edges.push_back(feed);
        ReducedEdge ret;
        ret.tail = rnode(j + 1);
        ret.head = rnode(j);
        ret.subsystem = s_count + 2 * j + 1;
        ret.pass_through = true;
        ret.zeta_eq = zeta_ret[j];
        r.edges.push_back(ret);
    }
    const int nn = static_cast<int>(r.node_full_ids.size());
    r.incidence = Eigen::MatrixXd::Zero(nn, static_cast<int>(r.edges.size()));
    for (size_t e = 0; e < r.edges.size(); ++e) {
        r.incidence(r.edges[e].tail, static_cast<int>(e)) = 1.0;
        r.incidence(r.edges[e].head, static_cast<int>(e)) = -1.0;
    }

    // implied trunk pressures at the ground truth
    std::vector<double> carried(s_count); // feed connector j flow
    for (int j = s_count - 1; j >= 0; --j)
        carried[j] = m_true[j] + (j + 1 < s_count ? carried[j + 1] : 0.0);
    std::vector<double> pf(s_count + 1), pr(s_count + 1);
    pr[0] = 0.0;
    // walk outward: return trunk pressures rise toward the far end
    for (int j = 0; j < s_count; ++j)
        pr[j + 1] = pr[j] + zeta_ret[j] * carried[j] * carried[j];
    std::vector<double> dp_true(s_count);
    // feed pressures: chosen so every subsystem's span is positive
    pf[s_count] = pr[s_count] + rng.uniform(5.0, 40.0);
    for (int j = s_count - 1; j >= 0; --j)
        pf[j] = pf[j + 1] + zeta_feed[j] * carried[j] * carried[j];
    for (int j = 0; j < s_count; ++j) dp_true[j] = pf[j + 1] - pr[j + 1];

    // tables: a grid around the truth; the entry at the truth index carries
    // exactly the consistent (dp, mdot) pair
    for (int j = 0; j < s_count; ++j) {
        CostTable t;
        t.subsystem = j;
        const int truth_at = rng.integer(0, candidates - 1);
        for (int i = 0; i < candidates; ++i) {
            CostTableEntry e;
            const double scale = std::pow(1.25, i - truth_at);
            e.dp_tot_pa = dp_true[j] * scale;
            e.mdot0_kg_s = m_true[j] * std::sqrt(scale) * rng.uniform(0.97, 1.03);
            if (i == truth_at) {
                e.dp_tot_pa = dp_true[j];
                e.mdot0_kg_s = m_true[j];
            }
            e.feasible = rng.uniform() < 0.85 || i == truth_at;
            e.cost_kg = rng.uniform(10.0, 500.0);
            t.entries.push_back(e);
        }
        inst.tables.push_back(std::move(t));
    }
    (void)epsilon_pa;
    return inst;
}

/// Brute-force oracle: plain lexicographic enumeration with its own
/// evaluation path (dense least squares for conservation, BFS-tree pressure
/// propagation written independently of the implementation).
inline std::optional<Selection> brute_force_select(const SelectionProblem& p) {
    const ReducedGraph& r = *p.reduced;
    std::vector<int> user_edges, pass_edges;
    for (size_t e = 0; e < r.edges.size(); ++e)
        (r.edges[e].pass_through ? pass_edges : user_edges).push_back(static_cast<int>(e));
    const int nu = static_cast<int>(user_edges.size());
    const int np = static_cast<int>(pass_edges.size());
    const int nn = static_cast<int>(r.node_full_ids.size());

    std::vector<std::vector<int>> feas(nu);
    for (int j = 0; j < nu; ++j)
        for (size_t i = 0; i < p.tables[j]->entries.size(); ++i)
            if (p.tables[j]->entries[i].feasible) feas[j].push_back(static_cast<int>(i));
    for (int j = 0; j < nu; ++j)
        if (feas[j].empty()) return std::nullopt;

    // undirected BFS spanning tree from the terminal, matching the canonical
    // pressure assignment of the contract
    std::vector<int> parent_edge(nn, -1), order;
    {
        std::vector<char> seen(nn, 0);
        std::vector<int> queue{r.terminal};
        seen[r.terminal] = 1;
        order.push_back(r.terminal);
        for (size_t h = 0; h < queue.size(); ++h) {
            const int v = queue[h];
            for (size_t e = 0; e < r.edges.size(); ++e) {
                const int other = r.edges[e].tail == v
                                      ? r.edges[e].head
                                      : (r.edges[e].head == v ? r.edges[e].tail : -1);
                if (other < 0 || seen[other]) continue;
                seen[other] = 1;
                parent_edge[other] = static_cast<int>(e);
                order.push_back(other);
                queue.push_back(other);
            }
        }
    }

    std::optional<Selection> best;
    std::vector<int> pos(nu, 0), idx(nu);
    while (true) {
        double cost = 0.0;
        for (int j = 0; j < nu; ++j) {
            idx[j] = feas[j][pos[j]];
            cost += p.tables[j]->entries[idx[j]].cost_kg;
        }
        // conservation solve: unknowns pass flows + total supply
        Eigen::MatrixXd a(nn, np + 1);
        for (int j = 0; j < np; ++j) a.col(j) = r.incidence.col(pass_edges[j]);
        a.col(np).setZero();
        a(r.root, np) = -1.0;
        a(r.terminal, np) = 1.0;
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nn);
        for (int j = 0; j < nu; ++j)
            rhs -= r.incidence.col(user_edges[j]) * p.tables[j]->entries[idx[j]].mdot0_kg_s;
        const Eigen::VectorXd y =
            (a.transpose() * a).ldlt().solve(a.transpose() * rhs);
        const double mass = (a * y - rhs).cwiseAbs().maxCoeff();
        bool ok = mass <= 1e-9 * std::max(1.0, std::abs(y(np)));
        for (int j = 0; j < np && ok; ++j)
            if (y(j) < -1e-9 * std::max(1.0, std::abs(y(np)))) ok = false;
        if (ok) {
            Eigen::VectorXd drops(static_cast<int>(r.edges.size()));
            for (int j = 0; j < nu; ++j)
                drops(user_edges[j]) = p.tables[j]->entries[idx[j]].dp_tot_pa;
            for (int j = 0; j < np; ++j)
                drops(pass_edges[j]) = r.edges[pass_edges[j]].zeta_eq * y(j) * std::abs(y(j));
            Eigen::VectorXd pv(nn);
            pv(r.terminal) = 0.0;
            for (size_t h = 1; h < order.size(); ++h) {
                const int v = order[h];
                const ReducedEdge& ed = r.edges[parent_edge[v]];
                pv(v) = ed.tail == v ? pv(ed.head) + drops(parent_edge[v])
                                     : pv(ed.tail) - drops(parent_edge[v]);
            }
            double worst = 0.0;
            for (size_t e = 0; e < r.edges.size(); ++e)
                worst = std::max(worst,
                                 std::abs(drops(static_cast<int>(e)) -
                                          (pv(r.edges[e].tail) - pv(r.edges[e].head))));
            if (worst >= p.epsilon_pa) ok = false;
            if (ok && (!best || cost < best->total_cost_kg)) {
                Selection s;
                s.indices = idx;
                s.total_cost_kg = cost;
                s.total_supply_kg_s = y(np);
                s.pressure_residual_pa = worst;
                s.mass_residual_kg_s = mass;
                best = s;
            }
        }
        int j = nu - 1;
        while (j >= 0 && ++pos[j] == static_cast<int>(feas[j].size())) pos[j--] = 0;
        if (j < 0) break;
    }
    return best;
}

} // namespace dhn::test

#endif
