#include <algorithm>
#include <cmath>
#include <numeric>

#include <doctest.h>

#include "dhn/hydraulics.hpp"
#include "dhn/partition.hpp"
#include "support.hpp"

using namespace dhn;
using namespace dhn::test;

namespace {

// Independent eigensolver oracle: cyclic Jacobi rotations on a symmetric
// matrix. Deliberately separate from the implementation's Eigen/inverse
// iteration paths.
Eigen::VectorXd jacobi_eigenvalues(Eigen::MatrixXd a) {
    const int n = static_cast<int>(a.rows());
    for (int sweep = 0; sweep < 200; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-26) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    Eigen::VectorXd ev = a.diagonal();
    std::sort(ev.data(), ev.data() + n);
    return ev;
}

Eigen::MatrixXd path_graph(int n) {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) w(i, i + 1) = w(i + 1, i) = 1.0;
    return w;
}

Eigen::MatrixXd barbell_graph() {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(6, 6);
    auto link = [&](int i, int j) { w(i, j) = w(j, i) = 1.0; };
    link(0, 1);
    link(1, 2);
    link(0, 2);
    link(3, 4);
    link(4, 5);
    link(3, 5);
    link(2, 3);
    return w;
}

double exhaustive_min_ncut(const Eigen::MatrixXd& w) {
    const int n = static_cast<int>(w.rows());
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 1; mask < (1u << (n - 1)); ++mask) {
        std::vector<int> a, b;
        for (int i = 0; i < n; ++i)
            ((mask >> i) & 1u ? a : b).push_back(i);
        if (a.empty() || b.empty()) continue;
        best = std::min(best, ncut_value(w, a, b));
    }
    return best;
}

// Three well-separated branches off a long trunk, two users each.
NetworkGraph three_branch_net() {
    std::vector<std::string> nodes{"root", "term"};
    std::vector<Edge> edges;
    auto add_node = [&](const std::string& n) {
        nodes.push_back(n);
        return static_cast<int>(nodes.size() - 1);
    };
    int feed_at = 0, return_at = 1, made = 0;
    for (int b = 1; b <= 3; ++b) {
        const int tf = add_node("tf" + std::to_string(b));
        const int tr = add_node("tr" + std::to_string(b));
        edges.push_back(edge("f" + std::to_string(b), feed_at, tf, EdgeKind::Feed,
                             pipe(95.0, 0.35)));
        edges.push_back(edge("r" + std::to_string(b), tr, return_at, EdgeKind::Return,
                             pipe(95.0, 0.35)));
        int jf = tf, jr = tr;
        for (int u = 0; u < 2; ++u) {
            ++made;
            const std::string tag = std::to_string(made);
            const int nf = add_node("jf" + tag);
            const int nr = add_node("jr" + tag);
            edges.push_back(edge("bf" + tag, jf, nf, EdgeKind::Feed, pipe(12.0, 0.2)));
            edges.push_back(edge("br" + tag, nr, jr, EdgeKind::Return, pipe(12.0, 0.2)));
            edges.push_back(
                edge("u" + tag, nf, nr, EdgeKind::User, pipe(2.0, 0.05), "B-" + tag));
            edges.push_back(edge("b" + tag, nf, nr, EdgeKind::Bypass, pipe(3.0, 0.03)));
            jf = nf;
            jr = nr;
        }
        feed_at = tf;
        return_at = tr;
    }
    return NetworkGraph(nodes, edges, 0, 1, FluidProperties{});
}

} // namespace

TEST_SUITE("partition") {

TEST_CASE("undirected weighted adjacency") {
    NetworkGraph g({"root", "a", "term"},
                   {edge("e0", 0, 1, EdgeKind::Feed, pipe(10, 0.2)),
                    edge("e1", 1, 2, EdgeKind::Feed, pipe(40, 0.2))},
                   0, 2, FluidProperties{});
    const Eigen::MatrixXd w = undirected_weighted_adjacency(g);
    CHECK(w == w.transpose());
    CHECK(w(0, 1) == doctest::Approx(1.0 / (971.0 * g.edge(0).pipe.volume_m3())));
    // the larger pipe couples more weakly
    CHECK(w(1, 2) < w(0, 1));
    CHECK(w(0, 2) == 0.0);
}

TEST_CASE("normalized Laplacian of a single edge") {
    Eigen::MatrixXd w(2, 2);
    w << 0, 1, 1, 0;
    const Eigen::MatrixXd lap = normalized_laplacian(w);
    const EigenPairs p = smallest_eigenpairs(lap, 2);
    CHECK(p.values(0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(p.values(1) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("kernel vector is D^(1/2) 1") {
    Eigen::MatrixXd w = barbell_graph();
    const Eigen::MatrixXd lap = normalized_laplacian(w);
    const Eigen::VectorXd d = w.rowwise().sum();
    const Eigen::VectorXd kernel = d.cwiseSqrt().normalized();
    CHECK((lap * kernel).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("isolated nodes are rejected") {
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(3, 3);
    w(0, 1) = w(1, 0) = 1.0;
    CHECK_THROWS_AS(normalized_laplacian(w), IsolatedNode);
}

TEST_CASE("four-node path eigenvalues match the Jacobi oracle") {
    const Eigen::MatrixXd lap = normalized_laplacian(path_graph(4));
    const EigenPairs p = smallest_eigenpairs(lap, 4);
    const Eigen::VectorXd oracle = jacobi_eigenvalues(lap);
    for (int i = 0; i < 4; ++i)
        CHECK(p.values(i) == doctest::Approx(oracle(i)).epsilon(1e-8));
}

TEST_CASE("inverse-iteration path agrees with the Jacobi oracle") {
    // 70 nodes exceeds the dense cutoff and exercises the deflated solver
    const int n = 70;
    const Eigen::MatrixXd lap = normalized_laplacian(path_graph(n));
    const EigenPairs p = smallest_eigenpairs(lap, 3);
    const Eigen::VectorXd oracle = jacobi_eigenvalues(lap);
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(p.values(i) - oracle(i)) <= 1e-9);
    for (int i = 0; i < 3; ++i)
        CHECK((lap * p.vectors.col(i) - p.values(i) * p.vectors.col(i)).norm() <= 1e-6);
}

TEST_CASE("ncut values") {
    SUBCASE("no cut edges gives zero") {
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(4, 4);
        w(0, 1) = w(1, 0) = 1.0;
        w(2, 3) = w(3, 2) = 1.0;
        CHECK(ncut_value(w, {0, 1}, {2, 3}) == 0.0);
    }
    SUBCASE("single edge split costs 2") {
        Eigen::MatrixXd w(2, 2);
        w << 0, 1, 1, 0;
        CHECK(ncut_value(w, {0}, {1}) == doctest::Approx(2.0));
    }
    SUBCASE("middle cut of a path beats an end cut") {
        const Eigen::MatrixXd w = path_graph(4);
        CHECK(ncut_value(w, {0, 1}, {2, 3}) < ncut_value(w, {0}, {1, 2, 3}));
    }
    SUBCASE("symmetric in its arguments") {
        const Eigen::MatrixXd w = path_graph(4);
        CHECK(ncut_value(w, {0, 1}, {2, 3}) == ncut_value(w, {2, 3}, {0, 1}));
    }
    SUBCASE("overlapping sides are rejected") {
        const Eigen::MatrixXd w = path_graph(3);
        CHECK_THROWS_AS(ncut_value(w, {0, 1}, {1, 2}), SpecError);
    }
}

TEST_CASE("fiedler bipartition of the canonical graphs") {
    SUBCASE("4-node path splits in the middle") {
        auto [a, b] = fiedler_bipartition(path_graph(4));
        CHECK(a == std::vector<int>{0, 1});
        CHECK(b == std::vector<int>{2, 3});
    }
    SUBCASE("barbell separates the triangles") {
        auto [a, b] = fiedler_bipartition(barbell_graph());
        CHECK(a == std::vector<int>{0, 1, 2});
        CHECK(b == std::vector<int>{3, 4, 5});
    }
    SUBCASE("deterministic on a symmetric graph") {
        const Eigen::MatrixXd w = path_graph(6);
        auto r1 = fiedler_bipartition(w);
        auto r2 = fiedler_bipartition(w);
        CHECK(r1 == r2);
        CHECK(std::find(r1.first.begin(), r1.first.end(), 0) != r1.first.end());
    }
}

TEST_CASE("bipartition quality against the exhaustive oracle") {
    std::vector<Eigen::MatrixXd> graphs;
    for (int n = 2; n <= 9; ++n) graphs.push_back(path_graph(n));
    graphs.push_back(barbell_graph());
    Eigen::MatrixXd star = Eigen::MatrixXd::Zero(6, 6);
    for (int i = 1; i < 6; ++i) star(0, i) = star(i, 0) = 1.0;
    graphs.push_back(star);
    TestRng rng(5150);
    for (int t = 0; t < 15; ++t) {
        const int n = rng.integer(4, 10);
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
        bool connected = false;
        while (!connected) {
            w.setZero();
            for (int i = 0; i < n; ++i)
                for (int j = i + 1; j < n; ++j)
                    if (rng.uniform() < 0.45) w(i, j) = w(j, i) = rng.uniform(0.5, 2.0);
            Eigen::MatrixXd reach = w + Eigen::MatrixXd::Identity(n, n);
            for (int k = 0; k < n; ++k) reach = (reach * reach).eval();
            connected = (reach.array() > 0.0).all();
        }
        graphs.push_back(w);
    }
    for (const auto& w : graphs) {
        auto [a, b] = fiedler_bipartition(w);
        const double got = ncut_value(w, a, b);
        const double best = exhaustive_min_ncut(w);
        CHECK(got <= 1.10 * best + 1e-12);
    }
}

TEST_CASE("identity partition") {
    NetworkGraph g = three_branch_net();
    const Partition p = recursive_partition(g, 1);
    CHECK(p.user_subsystem_count == 1);
    CHECK(p.subsystems.size() == 1);
    CHECK(p.subsystems[0].graph.edge_count() == g.edge_count());
    const ReducedGraph r = reduce_graph(g, p);
    CHECK(r.node_full_ids.size() == 2);
    CHECK(r.edges.size() == 1);
}

TEST_CASE("three branches split cleanly into three subsystems") {
    NetworkGraph g = three_branch_net();
    const Partition p = recursive_partition(g, 3);
    CHECK(p.user_subsystem_count == 3);
    // every edge appears in exactly one subsystem
    std::vector<int> seen(g.edge_count(), 0);
    for (const Subsystem& s : p.subsystems)
        for (int e : s.edge_map) seen[e]++;
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    for (int s = 0; s < 3; ++s) {
        CHECK(p.subsystems[s].user_edges_full.size() == 2);
        CHECK_FALSE(p.subsystems[s].pass_through);
    }
    // connectors only contain trunk pipes (the longest segments)
    for (size_t s = 3; s < p.subsystems.size(); ++s) {
        CHECK(p.subsystems[s].pass_through);
        for (int e : p.subsystems[s].edge_map)
            CHECK(g.edge(e).pipe.length_m == doctest::Approx(95.0));
    }
    // each user subsystem is hydraulically closed: a head solve succeeds
    for (int s = 0; s < 3; ++s) {
        const NetworkGraph& sub = p.subsystems[s].graph;
        const HydraulicState st = solve_flow_given_head_drop(sub, sub.nominal_zeta(), 25.0);
        CHECK(st.supply_flow_kg_s > 0.0);
        const HydraulicResiduals res = residuals(sub, sub.nominal_zeta(), st);
        CHECK(res.mass_kg_s <= 1e-9 * st.supply_flow_kg_s);
    }
}

TEST_CASE("random networks partition into valid subsystems") {
    for (uint64_t seed : {4u, 9u, 23u}) {
        TestRng rng(seed);
        NetworkGraph g = random_dhn(rng, 6);
        const Partition p = recursive_partition(g, 2);
        CHECK(p.user_subsystem_count == 2);
        std::vector<int> seen(g.edge_count(), 0);
        int users = 0;
        for (const Subsystem& s : p.subsystems) {
            for (int e : s.edge_map) seen[e]++;
            users += static_cast<int>(s.user_edges_full.size());
        }
        CHECK(users == 6);
        CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
        for (const Subsystem& s : p.subsystems) {
            if (s.pass_through) continue;
            const HydraulicState st =
                solve_flow_given_head_drop(s.graph, s.graph.nominal_zeta(), 10.0);
            CHECK(st.supply_flow_kg_s > 0.0);
        }
    }
}

TEST_CASE("partition preconditions") {
    NetworkGraph g = three_branch_net();
    CHECK_THROWS_AS(recursive_partition(g, 0), InfeasiblePartition);
    CHECK_THROWS_AS(recursive_partition(g, 7), InfeasiblePartition);
}

TEST_CASE("reduced graph structure") {
    NetworkGraph g = three_branch_net();
    const Partition p = recursive_partition(g, 3);
    const ReducedGraph r = reduce_graph(g, p);
    CHECK(r.edges.size() == p.subsystems.size());
    CHECK(r.incidence.colwise().sum().cwiseAbs().maxCoeff() == 0.0);
    int user_edges = 0, pass_edges = 0;
    for (const ReducedEdge& e : r.edges) {
        if (e.pass_through) {
            pass_edges++;
            CHECK(e.zeta_eq > 0.0);
        } else {
            user_edges++;
        }
    }
    CHECK(user_edges == 3);
    CHECK(pass_edges >= 1);
}

TEST_CASE("partition export is stable JSON") {
    NetworkGraph g = three_branch_net();
    const Partition p = recursive_partition(g, 3);
    const ReducedGraph r = reduce_graph(g, p);
    const std::string j1 = partition_to_json_text(g, p, r);
    const std::string j2 = partition_to_json_text(g, p, r);
    CHECK(j1 == j2);
    CHECK(j1.find("\"assignment\"") != std::string::npos);
    CHECK(j1.find("\"reduced\"") != std::string::npos);
}

} // TEST_SUITE
