#include "dhn/partition.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <set>

#include <json.hpp>

namespace dhn {

Eigen::MatrixXd undirected_weighted_adjacency(const NetworkGraph& g) {
    const int n = g.node_count();
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (int e = 0; e < g.edge_count(); ++e) {
        const Edge& ed = g.edge(e);
        const double weight =
            1.0 / (g.fluid().density_kg_m3 * ed.pipe.volume_m3());
        w(ed.tail, ed.head) += weight;
        w(ed.head, ed.tail) += weight;
    }
    return w;
}

Eigen::MatrixXd normalized_laplacian(const Eigen::MatrixXd& w) {
    const int n = static_cast<int>(w.rows());
    Eigen::VectorXd d = w.rowwise().sum();
    for (int i = 0; i < n; ++i)
        if (d(i) <= 0.0) throw IsolatedNode("node " + std::to_string(i) + " has zero degree");
    const Eigen::VectorXd dm = d.cwiseSqrt().cwiseInverse();
    return Eigen::MatrixXd::Identity(n, n) - (dm.asDiagonal() * w * dm.asDiagonal());
}

EigenPairs smallest_eigenpairs(const Eigen::MatrixXd& laplacian, int count) {
    const int n = static_cast<int>(laplacian.rows());
    count = std::min(count, n);
    EigenPairs out;
    if (n < 64) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(laplacian);
        if (es.info() != Eigen::Success)
            throw EigensolverFailure("dense eigensolver failed");
        out.values = es.eigenvalues().head(count);
        out.vectors = es.eigenvectors().leftCols(count);
        return out;
    }
    // Shift-and-invert inverse iteration, deflating converged vectors.
    out.values.resize(count);
    out.vectors.resize(n, count);
    const double shift = -1e-6; // keeps L - shift I positive definite
    const Eigen::MatrixXd m =
        laplacian - shift * Eigen::MatrixXd::Identity(n, n);
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
    if (ldlt.info() != Eigen::Success)
        throw EigensolverFailure("factorization failed in inverse iteration");
    Eigen::MatrixXd basis(n, 0);
    for (int k = 0; k < count; ++k) {
        Eigen::VectorXd x(n);
        for (int i = 0; i < n; ++i) x(i) = std::cos(static_cast<double>((k + 1) * i));
        auto deflate = [&](Eigen::VectorXd& v) {
            if (basis.cols() > 0) v -= basis * (basis.transpose() * v);
        };
        deflate(x);
        x.normalize();
        double lambda = 0.0;
        bool converged = false;
        for (int it = 0; it < 500; ++it) {
            Eigen::VectorXd y = ldlt.solve(x);
            deflate(y);
            const double norm = y.norm();
            if (norm <= 0.0) throw EigensolverFailure("inverse iteration collapsed");
            y /= norm;
            const double r = y.dot(laplacian * y);
            if (std::abs(r - lambda) < 1e-13 * std::max(1.0, std::abs(r)) && it > 2) {
                lambda = r;
                x = y;
                converged = true;
                break;
            }
            lambda = r;
            x = y;
        }
        if (!converged &&
            (laplacian * x - lambda * x).norm() > 1e-8 * std::max(1.0, lambda))
            throw EigensolverFailure("inverse iteration stalled at pair " + std::to_string(k));
        out.values(k) = lambda;
        out.vectors.col(k) = x;
        basis.conservativeResize(n, basis.cols() + 1);
        basis.col(basis.cols() - 1) = x;
    }
    return out;
}

double ncut_value(const Eigen::MatrixXd& w, const std::vector<int>& side_a,
                  const std::vector<int>& side_b) {
    const int n = static_cast<int>(w.rows());
    std::vector<char> in_a(n, 0), seen(n, 0);
    for (int i : side_a) {
        in_a[i] = 1;
        seen[i] = 1;
    }
    for (int i : side_b) {
        if (seen[i]) throw SpecError("bipartition sides overlap");
        seen[i] = 1;
    }
    for (int i = 0; i < n; ++i)
        if (!seen[i]) throw SpecError("bipartition does not cover all nodes");
    double cut = 0.0, vol_a = 0.0, vol_b = 0.0;
    for (int i = 0; i < n; ++i) {
        const double row = w.row(i).sum();
        if (in_a[i])
            vol_a += row;
        else
            vol_b += row;
        for (int j = 0; j < n; ++j)
            if (in_a[i] && !in_a[j]) cut += w(i, j);
    }
    if (vol_a <= 0.0 || vol_b <= 0.0) return std::numeric_limits<double>::infinity();
    return cut * (1.0 / vol_a + 1.0 / vol_b);
}

namespace {

struct SideSplit {
    std::vector<char> in_a;
    double value = std::numeric_limits<double>::infinity();
};

double ncut_of_mask(const Eigen::MatrixXd& w, const std::vector<char>& in_a) {
    const int n = static_cast<int>(w.rows());
    double cut = 0.0, vol_a = 0.0, vol_b = 0.0;
    for (int i = 0; i < n; ++i) {
        const double row = w.row(i).sum();
        if (in_a[i])
            vol_a += row;
        else
            vol_b += row;
        if (in_a[i])
            for (int j = 0; j < n; ++j)
                if (!in_a[j]) cut += w(i, j);
    }
    if (vol_a <= 0.0 || vol_b <= 0.0) return std::numeric_limits<double>::infinity();
    return cut * (1.0 / vol_a + 1.0 / vol_b);
}

// Sweep every threshold split of the given ordering and keep the best.
SideSplit sweep(const Eigen::MatrixXd& w, const Eigen::VectorXd& score) {
    const int n = static_cast<int>(w.rows());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (score(a) != score(b)) return score(a) < score(b);
        return a < b;
    });
    SideSplit best;
    std::vector<char> in_a(n, 0);
    for (int cut = 1; cut < n; ++cut) {
        in_a.assign(n, 0);
        for (int i = 0; i < cut; ++i) in_a[order[i]] = 1;
        const double v = ncut_of_mask(w, in_a);
        if (v < best.value - 1e-15) {
            best.value = v;
            best.in_a = in_a;
        }
    }
    return best;
}

// One Kernighan-Lin pass: greedy sequence of single-node moves (each node at
// most once), keeping the best prefix.
SideSplit kl_pass(const Eigen::MatrixXd& w, SideSplit s) {
    const int n = static_cast<int>(w.rows());
    SideSplit best = s;
    std::vector<char> cur = s.in_a;
    std::vector<char> moved(n, 0);
    auto side_count = [&](const std::vector<char>& m, char v) {
        int c = 0;
        for (char x : m) c += (x == v);
        return c;
    };
    for (int round = 0; round < n; ++round) {
        int cand = -1;
        double cand_val = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            if (moved[i]) continue;
            if (cur[i] && side_count(cur, 1) <= 1) continue;
            if (!cur[i] && side_count(cur, 0) <= 1) continue;
            cur[i] = !cur[i];
            const double v = ncut_of_mask(w, cur);
            cur[i] = !cur[i];
            if (v < cand_val - 1e-15) {
                cand_val = v;
                cand = i;
            }
        }
        if (cand < 0) break;
        cur[cand] = !cur[cand];
        moved[cand] = 1;
        if (cand_val < best.value - 1e-15) {
            best.value = cand_val;
            best.in_a = cur;
        }
    }
    return best;
}

} // namespace

std::pair<std::vector<int>, std::vector<int>> fiedler_bipartition(const Eigen::MatrixXd& w) {
    const int n = static_cast<int>(w.rows());
    if (n < 2) throw SpecError("cannot bipartition fewer than 2 nodes");
    const Eigen::MatrixXd lap = normalized_laplacian(w);
    const EigenPairs pairs = smallest_eigenpairs(lap, std::min(3, n));
    const Eigen::VectorXd deg = w.rowwise().sum();
    const Eigen::VectorXd dinv_sqrt = deg.cwiseSqrt().cwiseInverse();

    std::vector<Eigen::VectorXd> orderings;
    for (int k = 1; k < pairs.vectors.cols(); ++k) {
        Eigen::VectorXd v = pairs.vectors.col(k);
        for (int i = 0; i < n; ++i) {
            if (std::abs(v(i)) > 1e-12) {
                if (v(i) < 0.0) v = -v;
                break;
            }
        }
        orderings.push_back(v);
        orderings.push_back(v.cwiseProduct(dinv_sqrt));
    }

    SideSplit best;
    for (const auto& score : orderings) {
        SideSplit s = sweep(w, score);
        for (int i = 0; i < 3; ++i) {
            SideSplit refined = kl_pass(w, s);
            if (refined.value < s.value - 1e-15)
                s = refined;
            else
                break;
        }
        if (s.value < best.value - 1e-15) best = s;
    }
    if (best.in_a.empty()) throw EigensolverFailure("no valid bipartition found");

    std::vector<int> a, b;
    const bool node0_in_a = best.in_a[0];
    for (int i = 0; i < n; ++i) {
        if (best.in_a[i] == node0_in_a)
            a.push_back(i);
        else
            b.push_back(i);
    }
    return {a, b};
}

// ---------------------------------------------------------------------------
// Recursive partition of the network
// ---------------------------------------------------------------------------

namespace {

struct Contracted {
    std::vector<int> super_of_node;       // full node -> supernode id
    std::vector<std::vector<int>> members; // supernode -> full nodes
    Eigen::MatrixXd w;                    // supernode adjacency
    std::vector<std::vector<int>> users;  // supernode -> user edge ids
};

Contracted contract_junctions(const NetworkGraph& g) {
    const int nv = g.node_count();
    std::vector<int> parent(nv);
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int v) {
        while (parent[v] != v) {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        return v;
    };
    auto unite = [&](int a, int b) { parent[std::max(find(a), find(b))] = std::min(find(a), find(b)); };
    for (int e = 0; e < g.edge_count(); ++e) {
        const Edge& ed = g.edge(e);
        if (ed.kind == EdgeKind::User || ed.kind == EdgeKind::Bypass) unite(ed.tail, ed.head);
    }
    Contracted c;
    c.super_of_node.assign(nv, -1);
    std::vector<int> id_of_root(nv, -1);
    for (int v = 0; v < nv; ++v) {
        const int r = find(v);
        if (id_of_root[r] < 0) {
            id_of_root[r] = static_cast<int>(c.members.size());
            c.members.emplace_back();
        }
        c.super_of_node[v] = id_of_root[r];
        c.members[id_of_root[r]].push_back(v);
    }
    const int ns = static_cast<int>(c.members.size());
    c.w = Eigen::MatrixXd::Zero(ns, ns);
    c.users.resize(ns);
    for (int e = 0; e < g.edge_count(); ++e) {
        const Edge& ed = g.edge(e);
        const int a = c.super_of_node[ed.tail];
        const int b = c.super_of_node[ed.head];
        if (ed.kind == EdgeKind::User) {
            c.users[a].push_back(e);
            continue;
        }
        if (a == b) continue;
        const double weight = 1.0 / (g.fluid().density_kg_m3 * ed.pipe.volume_m3());
        c.w(a, b) += weight;
        c.w(b, a) += weight;
    }
    return c;
}

int group_user_count(const Contracted& c, const std::vector<int>& nodes) {
    int users = 0;
    for (int s : nodes) users += static_cast<int>(c.users[s].size());
    return users;
}

// Split one supernode group in two with the spectral bipartition. The user
// assignment is then projected onto a contiguous segment of the feed-tree
// traversal order, choosing the boundary with the fewest disagreements
// against the spectral sides among those whose two sides both form valid
// single-entry regions. Trunk nodes follow their nearest junction.
std::pair<std::vector<int>, std::vector<int>> split_group(
    const Contracted& c, const std::vector<int>& nodes,
    const std::vector<int>& user_rank_of_super,
    const std::function<bool(unsigned long long)>& group_valid,
    const std::function<unsigned long long(int)>& super_user_mask) {
    const int n = static_cast<int>(nodes.size());
    Eigen::MatrixXd w(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) w(i, j) = c.w(nodes[i], nodes[j]);
    auto [la, lb] = fiedler_bipartition(w);
    std::vector<char> in_a_local(n, 0);
    for (int i : la) in_a_local[i] = 1;

    // junction supernodes of this group, in feed-tree traversal order
    std::vector<int> junctions; // local indices
    for (int i = 0; i < n; ++i)
        if (!c.users[nodes[i]].empty()) junctions.push_back(i);
    std::sort(junctions.begin(), junctions.end(), [&](int x, int y) {
        return user_rank_of_super[nodes[x]] < user_rank_of_super[nodes[y]];
    });
    const int nj = static_cast<int>(junctions.size());
    if (nj < 2) throw InfeasiblePartition("group has too few users to split");

    // candidate boundaries ranked by disagreement with the spectral sides
    struct Boundary {
        int disagree;
        int k;
        bool a_first;
    };
    std::vector<Boundary> candidates;
    for (int k = 1; k < nj; ++k) {
        for (const bool a_first : {true, false}) {
            int disagree = 0;
            for (int i = 0; i < nj; ++i) {
                const bool want_a = (i < k) == a_first;
                if (static_cast<bool>(in_a_local[junctions[i]]) != want_a) disagree++;
            }
            candidates.push_back({disagree, k, a_first});
        }
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Boundary& x, const Boundary& y) {
                         if (x.disagree != y.disagree) return x.disagree < y.disagree;
                         if (x.k != y.k) return x.k < y.k;
                         return x.a_first && !y.a_first;
                     });
    int best_k = -1;
    bool best_a_first = true;
    for (const Boundary& cand : candidates) {
        unsigned long long mask_a = 0, mask_b = 0;
        for (int i = 0; i < nj; ++i) {
            const unsigned long long m = super_user_mask(nodes[junctions[i]]);
            if ((i < cand.k) == cand.a_first)
                mask_a |= m;
            else
                mask_b |= m;
        }
        if (group_valid(mask_a) && group_valid(mask_b)) {
            best_k = cand.k;
            best_a_first = cand.a_first;
            break;
        }
    }
    if (best_k < 0)
        throw InfeasiblePartition("no contiguous user boundary yields valid subsystems");

    std::vector<char> junction_in_a(n, 0);
    for (int i = 0; i < nj; ++i)
        junction_in_a[junctions[i]] = ((i < best_k) == best_a_first) ? 1 : 0;

    // non-junction nodes follow the nearest junction (multi-source BFS on the
    // induced subgraph; ties resolve to the earliest-queued source)
    std::vector<int> side(n, -1);
    std::deque<int> queue;
    for (int i : junctions) {
        side[i] = junction_in_a[i];
        queue.push_back(i);
    }
    while (!queue.empty()) {
        const int i = queue.front();
        queue.pop_front();
        for (int j = 0; j < n; ++j) {
            if (side[j] < 0 && w(i, j) > 0.0) {
                side[j] = side[i];
                queue.push_back(j);
            }
        }
    }
    std::vector<int> a, b;
    for (int i = 0; i < n; ++i) {
        if (side[i] < 0) side[i] = in_a_local[i] ? 1 : 0; // unreachable stragglers
        (side[i] == 1 ? a : b).push_back(nodes[i]);
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a.empty() || b.empty()) throw InfeasiblePartition("bipartition emptied one side");
    return {a, b};
}

} // namespace

Partition recursive_partition(const NetworkGraph& g, int n_g) {
    const int total_users = static_cast<int>(g.user_edges().size());
    if (n_g < 1) throw InfeasiblePartition("n_g must be at least 1");
    if (n_g > std::max(total_users, 1))
        throw InfeasiblePartition("n_g exceeds the number of users");

    if (total_users > 63)
        throw InfeasiblePartition("partitioning supports at most 63 users");
    const Contracted c = contract_junctions(g);

    // Per-edge served-user bitmask: user u's bit is set when the edge lies on
    // the root->u feed path or the u->terminal return path. Bypass edges
    // inherit their paired user's mask.
    const auto& users = g.user_edges();
    const int nv = g.node_count();
    const int ne = g.edge_count();
    std::vector<int> user_index(ne, -1);
    for (size_t i = 0; i < users.size(); ++i) user_index[users[i]] = static_cast<int>(i);
    std::vector<std::vector<char>> reach(nv, std::vector<char>(nv, 0));
    for (int v = 0; v < nv; ++v) {
        std::vector<int> stack{v};
        reach[v][v] = 1;
        while (!stack.empty()) {
            const int x = stack.back();
            stack.pop_back();
            for (int e : g.out_edges(x)) {
                const int h = g.edge(e).head;
                if (!reach[v][h]) {
                    reach[v][h] = 1;
                    stack.push_back(h);
                }
            }
        }
    }
    std::vector<unsigned long long> served(ne, 0);
    for (int e = 0; e < ne; ++e) {
        const Edge& ed = g.edge(e);
        if (ed.kind == EdgeKind::User) {
            served[e] = 1ull << user_index[e];
            continue;
        }
        if (ed.kind == EdgeKind::Bypass) continue;
        for (size_t i = 0; i < users.size(); ++i) {
            const int u = users[i];
            const bool feeds = reach[ed.head][g.edge(u).tail];
            const bool drains = reach[g.edge(u).head][ed.tail];
            if (feeds || drains) served[e] |= 1ull << i;
        }
    }
    for (int u : users) served[g.bypass_of_user(u)] = served[u];
    for (int e = 0; e < ne; ++e)
        if (served[e] == 0)
            throw InfeasiblePartition("edge '" + g.edge(e).name + "' serves no user");

    // A candidate user group is usable when its exclusively-served edges form
    // one weakly connected region with a single entry and a single exit.
    auto group_valid = [&](unsigned long long mask) {
        if (mask == 0) return false;
        std::vector<int> region;
        for (int e = 0; e < ne; ++e)
            if ((served[e] & ~mask) == 0) region.push_back(e);
        if (region.empty()) return false;
        std::vector<int> indeg(nv, 0), outdeg(nv, 0), comp(nv, -1);
        for (int e : region) {
            outdeg[g.edge(e).tail]++;
            indeg[g.edge(e).head]++;
        }
        int entries = 0, exits = 0;
        for (int v = 0; v < nv; ++v) {
            if (outdeg[v] > 0 && indeg[v] == 0) entries++;
            if (indeg[v] > 0 && outdeg[v] == 0) exits++;
        }
        if (entries != 1 || exits != 1) return false;
        // weak connectivity of the region
        std::vector<std::vector<int>> touch(nv);
        for (size_t i = 0; i < region.size(); ++i) {
            touch[g.edge(region[i]).tail].push_back(static_cast<int>(i));
            touch[g.edge(region[i]).head].push_back(static_cast<int>(i));
        }
        std::vector<char> seen(region.size(), 0);
        std::vector<int> stack{0};
        seen[0] = 1;
        size_t visited = 1;
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            for (int v : {g.edge(region[i]).tail, g.edge(region[i]).head}) {
                for (int j : touch[v]) {
                    if (!seen[j]) {
                        seen[j] = 1;
                        visited++;
                        stack.push_back(j);
                    }
                }
            }
        }
        return visited == region.size();
    };
    auto super_user_mask = [&](int super) {
        unsigned long long m = 0;
        for (int ue : c.users[super]) m |= 1ull << user_index[ue];
        return m;
    };

    // feed-tree traversal rank of each junction supernode: the projection of
    // spectral splits onto contiguous user segments keys off this order
    std::vector<int> user_rank(c.members.size(), std::numeric_limits<int>::max());
    {
        int rank = 0;
        std::vector<char> visited(g.node_count(), 0);
        std::function<void(int)> dfs = [&](int v) {
            visited[v] = 1;
            for (int e : g.out_edges(v)) {
                if (g.edge(e).kind == EdgeKind::User) {
                    const int s = c.super_of_node[g.edge(e).tail];
                    if (user_rank[s] == std::numeric_limits<int>::max()) user_rank[s] = rank++;
                }
                const int h = g.edge(e).head;
                if (!visited[h]) dfs(h);
            }
        };
        dfs(g.root());
    }

    std::vector<std::vector<int>> groups{[&] {
        std::vector<int> all(c.members.size());
        std::iota(all.begin(), all.end(), 0);
        return all;
    }()};

    auto user_groups = [&] {
        std::vector<size_t> idx;
        for (size_t i = 0; i < groups.size(); ++i)
            if (group_user_count(c, groups[i]) > 0) idx.push_back(i);
        return idx;
    };

    while (static_cast<int>(user_groups().size()) < n_g) {
        // split the user-bearing group with the most users (ties: lowest node id)
        const auto ug = user_groups();
        size_t pick = ug[0];
        for (size_t i : ug) {
            const int ua = group_user_count(c, groups[i]);
            const int ub = group_user_count(c, groups[pick]);
            if (ua > ub || (ua == ub && groups[i][0] < groups[pick][0])) pick = i;
        }
        if (group_user_count(c, groups[pick]) < 2)
            throw InfeasiblePartition("cannot split a single-user subsystem further");
        if (groups[pick].size() < 2)
            throw InfeasiblePartition("group too small to split");
        auto [a, b] = split_group(c, groups[pick], user_rank, group_valid, super_user_mask);
        groups[pick] = std::move(a);
        groups.push_back(std::move(b));
    }

    // Map each user edge to its final group; order groups deterministically.
    std::vector<std::vector<int>> final_user_groups;
    for (const auto& grp : groups)
        if (group_user_count(c, grp) > 0) final_user_groups.push_back(grp);
    std::sort(final_user_groups.begin(), final_user_groups.end(),
              [](const auto& x, const auto& y) { return x[0] < y[0]; });

    const int n_groups = static_cast<int>(final_user_groups.size());
    std::vector<unsigned long long> group_mask(n_groups, 0);
    for (int gi = 0; gi < n_groups; ++gi)
        for (int sn : final_user_groups[gi]) group_mask[gi] |= super_user_mask(sn);

    // edges exclusively serving one group belong to it; shared edges become
    // pass-through connectors
    std::vector<int> owner(ne, -1);
    for (int e = 0; e < ne; ++e)
        for (int gi = 0; gi < n_groups; ++gi)
            if ((served[e] & ~group_mask[gi]) == 0) owner[e] = gi;

    // Connector chains: maximal directed runs of shared edges, split at any
    // node where the chain branches.
    std::vector<int> chain_of_edge(ne, -1);
    int chain_count = 0;
    {
        std::vector<std::vector<int>> conn_out(nv), conn_in(nv);
        std::vector<char> touches_subsystem(nv, 0);
        for (int e = 0; e < ne; ++e) {
            if (owner[e] >= 0) {
                touches_subsystem[g.edge(e).tail] = 1;
                touches_subsystem[g.edge(e).head] = 1;
                continue;
            }
            conn_out[g.edge(e).tail].push_back(e);
            conn_in[g.edge(e).head].push_back(e);
        }
        // A chain may only run through nodes that carry nothing but the chain
        // itself; attachment points of subsystems must stay reduced-graph nodes.
        auto chain_interior = [&](int v) {
            return conn_out[v].size() == 1 && conn_in[v].size() == 1 &&
                   !touches_subsystem[v];
        };
        for (int e = 0; e < ne; ++e) {
            if (owner[e] >= 0 || chain_of_edge[e] >= 0) continue;
            // walk to the chain start
            int cur = e;
            while (chain_interior(g.edge(cur).tail) && conn_in[g.edge(cur).tail][0] != cur &&
                   chain_of_edge[conn_in[g.edge(cur).tail][0]] < 0)
                cur = conn_in[g.edge(cur).tail][0];
            const int chain = chain_count++;
            while (true) {
                chain_of_edge[cur] = chain;
                const int h = g.edge(cur).head;
                if (!chain_interior(h)) break;
                const int nxt = conn_out[h][0];
                if (chain_of_edge[nxt] >= 0) break;
                cur = nxt;
            }
        }
    }

    Partition p;
    p.user_subsystem_count = n_groups;
    p.assignment.assign(ne, -1);
    const int subsystem_total = n_groups + chain_count;
    std::vector<std::vector<int>> sub_edges(subsystem_total);
    for (int e = 0; e < ne; ++e) {
        const int s = owner[e] >= 0 ? owner[e] : n_groups + chain_of_edge[e];
        p.assignment[e] = s;
        sub_edges[s].push_back(e);
    }

    for (int e = 0; e < ne; ++e) {
        const Edge& ed = g.edge(e);
        if (c.super_of_node[ed.tail] != c.super_of_node[ed.head]) {
            // between different final groups? record spectral cut edges
            int gt = -1, gh = -1;
            for (size_t gi = 0; gi < final_user_groups.size(); ++gi) {
                const auto& grp = final_user_groups[gi];
                if (std::binary_search(grp.begin(), grp.end(), c.super_of_node[ed.tail]))
                    gt = static_cast<int>(gi);
                if (std::binary_search(grp.begin(), grp.end(), c.super_of_node[ed.head]))
                    gh = static_cast<int>(gi);
            }
            if (gt != gh) p.cut_edges.push_back(e);
        }
    }

    // Materialize each subsystem as a standalone NetworkGraph.
    for (int s = 0; s < subsystem_total; ++s) {
        if (sub_edges[s].empty()) throw InfeasiblePartition("empty subsystem");
        std::vector<int> nodes;
        for (int e : sub_edges[s]) {
            nodes.push_back(g.edge(e).tail);
            nodes.push_back(g.edge(e).head);
        }
        std::sort(nodes.begin(), nodes.end());
        nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
        std::vector<int> local_of_full(nv, -1);
        std::vector<std::string> names;
        for (size_t i = 0; i < nodes.size(); ++i) {
            local_of_full[nodes[i]] = static_cast<int>(i);
            names.push_back(g.node_name(nodes[i]));
        }
        // entry: no incoming subsystem edge; exit: no outgoing subsystem edge
        std::vector<int> in_deg(nodes.size(), 0), out_deg(nodes.size(), 0);
        std::vector<Edge> edges;
        for (int e : sub_edges[s]) {
            Edge ed = g.edge(e);
            ed.tail = local_of_full[ed.tail];
            ed.head = local_of_full[ed.head];
            out_deg[ed.tail]++;
            in_deg[ed.head]++;
            edges.push_back(std::move(ed));
        }
        int entry = -1, exit = -1;
        for (size_t i = 0; i < nodes.size(); ++i) {
            if (in_deg[i] == 0 && out_deg[i] > 0) {
                if (entry >= 0) throw InfeasiblePartition("subsystem has several entry nodes");
                entry = static_cast<int>(i);
            }
            if (out_deg[i] == 0 && in_deg[i] > 0) {
                if (exit >= 0) throw InfeasiblePartition("subsystem has several exit nodes");
                exit = static_cast<int>(i);
            }
        }
        if (entry < 0 || exit < 0)
            throw InfeasiblePartition("subsystem lacks a root or terminal");

        Subsystem sub{NetworkGraph(names, edges, entry, exit, g.fluid()),
                      sub_edges[s],
                      nodes,
                      s >= n_groups,
                      nodes[entry],
                      nodes[exit],
                      {}};
        for (int e : sub_edges[s])
            if (g.edge(e).kind == EdgeKind::User) sub.user_edges_full.push_back(e);
        p.subsystems.push_back(std::move(sub));
    }
    return p;
}

ReducedGraph reduce_graph(const NetworkGraph& g, const Partition& p) {
    ReducedGraph r;
    auto node_id = [&](int full) {
        for (size_t i = 0; i < r.node_full_ids.size(); ++i)
            if (r.node_full_ids[i] == full) return static_cast<int>(i);
        r.node_full_ids.push_back(full);
        r.node_names.push_back(g.node_name(full));
        return static_cast<int>(r.node_full_ids.size() - 1);
    };
    for (size_t s = 0; s < p.subsystems.size(); ++s) {
        const Subsystem& sub = p.subsystems[s];
        ReducedEdge e;
        e.tail = node_id(sub.local_root_full);
        e.head = node_id(sub.local_term_full);
        e.subsystem = static_cast<int>(s);
        e.pass_through = sub.pass_through;
        if (sub.pass_through) {
            double z = 0.0;
            for (int fe : sub.edge_map) z += g.edge(fe).zeta;
            e.zeta_eq = z;
        }
        r.edges.push_back(e);
    }
    r.root = node_id(g.root());
    r.terminal = node_id(g.terminal());
    const int nn = static_cast<int>(r.node_full_ids.size());
    r.incidence = Eigen::MatrixXd::Zero(nn, static_cast<int>(r.edges.size()));
    for (size_t e = 0; e < r.edges.size(); ++e) {
        r.incidence(r.edges[e].tail, static_cast<int>(e)) = 1.0;
        r.incidence(r.edges[e].head, static_cast<int>(e)) = -1.0;
    }
    return r;
}

std::string partition_to_json_text(const NetworkGraph& g, const Partition& p,
                                   const ReducedGraph& r) {
    nlohmann::json j;
    j["format"] = 1;
    nlohmann::json assignment;
    for (int e = 0; e < g.edge_count(); ++e)
        assignment[g.edge(e).name] = p.assignment[e];
    j["assignment"] = assignment;
    nlohmann::json subs = nlohmann::json::array();
    for (size_t s = 0; s < p.subsystems.size(); ++s) {
        const Subsystem& sub = p.subsystems[s];
        nlohmann::json js;
        js["id"] = s;
        js["pass_through"] = sub.pass_through;
        js["root"] = g.node_name(sub.local_root_full);
        js["terminal"] = g.node_name(sub.local_term_full);
        nlohmann::json users = nlohmann::json::array();
        for (int ue : sub.user_edges_full) users.push_back(g.edge(ue).building);
        js["users"] = users;
        subs.push_back(js);
    }
    j["subsystems"] = subs;
    nlohmann::json cut = nlohmann::json::array();
    for (int e : p.cut_edges) cut.push_back(g.edge(e).name);
    j["cut_edges"] = cut;
    nlohmann::json red;
    red["nodes"] = r.node_names;
    nlohmann::json redges = nlohmann::json::array();
    for (const ReducedEdge& e : r.edges) {
        nlohmann::json je;
        je["tail"] = r.node_names[e.tail];
        je["head"] = r.node_names[e.head];
        je["subsystem"] = e.subsystem;
        je["pass_through"] = e.pass_through;
        if (e.pass_through) je["zeta_eq"] = e.zeta_eq;
        redges.push_back(je);
    }
    red["edges"] = redges;
    j["reduced"] = red;
    return j.dump(2) + "\n";
}

void write_partition_file(const std::string& path, const NetworkGraph& g, const Partition& p,
                          const ReducedGraph& r) {
    std::ofstream out(path);
    if (!out) throw SpecError("cannot write partition file '" + path + "'");
    out << partition_to_json_text(g, p, r);
}

} // namespace dhn
