#include <doctest.h>

#include "dhn/network.hpp"
#include "support.hpp"

using namespace dhn;
using namespace dhn::test;

TEST_SUITE("network") {

TEST_CASE("loss coefficient follows the Darcy form") {
    // lambda=0.01, L=10 m, D=0.2 m, rho=971:
    // zeta = 0.01*10 / (0.2 * 2 * 971 * (pi*0.01)^2), evaluated independently
    PipeAttributes attr = pipe(10.0, 0.2, 0.01);
    FluidProperties fluid;
    CHECK(loss_coefficient(attr, fluid) == doctest::Approx(0.26086813502146694).epsilon(1e-12));

    SUBCASE("doubling length doubles zeta") {
        PipeAttributes twice = pipe(20.0, 0.2, 0.01);
        CHECK(loss_coefficient(twice, fluid) ==
              doctest::Approx(2.0 * loss_coefficient(attr, fluid)).epsilon(1e-12));
    }
    SUBCASE("nonpositive friction factor is rejected") {
        PipeAttributes bad = pipe(10.0, 0.2, 0.0);
        CHECK_THROWS_AS(loss_coefficient(bad, fluid), SpecError);
    }
}

TEST_CASE("derived geometry") {
    PipeAttributes attr = pipe(10.0, 0.2);
    CHECK(attr.volume_m3() == doctest::Approx(0.3141592653589793).epsilon(1e-12));
    CHECK(attr.surface_area_m2() == doctest::Approx(6.283185307179586).epsilon(1e-12));
}

TEST_CASE("two-node single-edge incidence") {
    NetworkGraph g({"root", "term"}, {edge("e0", 0, 1, EdgeKind::Feed)}, 0, 1,
                   FluidProperties{});
    REQUIRE(g.edge_count() == 1);
    CHECK(g.incidence()(0, 0) == 1.0);
    CHECK(g.incidence()(1, 0) == -1.0);
}

TEST_CASE("incidence columns sum to zero and kinds partition the edges") {
    TestRng rng(7);
    NetworkGraph g = random_dhn(rng, 5);
    const Eigen::VectorXd colsums = g.incidence().colwise().sum();
    CHECK(colsums.cwiseAbs().maxCoeff() == 0.0);
    size_t total = 0;
    for (EdgeKind k :
         {EdgeKind::Feed, EdgeKind::Return, EdgeKind::Bypass, EdgeKind::User})
        total += g.edges_of_kind(k).size();
    CHECK(total == static_cast<size_t>(g.edge_count()));
}

TEST_CASE("edgesOfKind on a bypass-free graph") {
    NetworkGraph g({"root", "a", "term"},
                   {edge("e0", 0, 1, EdgeKind::Feed), edge("e1", 1, 2, EdgeKind::Return)}, 0,
                   2, FluidProperties{});
    CHECK(g.edges_of_kind(EdgeKind::Bypass).empty());
    CHECK(g.edges_of_kind(EdgeKind::Feed).size() == 1);
}

TEST_CASE("dangling reference is reported") {
    const std::string spec = R"({
      "format": 1, "root": "root", "terminal": "term",
      "nodes": ["root", "term"],
      "edges": [{"name":"e0","tail":"root","head":"X","kind":"feed",
                 "length_m":10,"diameter_m":0.2,"friction_factor":0.01,
                 "heat_transfer_w_per_m2k":1.5}]
    })";
    CHECK_THROWS_AS(NetworkGraph::from_json_text(spec), DanglingReference);
}

TEST_CASE("root indegree violation is reported") {
    CHECK_THROWS_AS(NetworkGraph({"root", "term"},
                                 {edge("e0", 0, 1, EdgeKind::Feed),
                                  edge("e1", 1, 0, EdgeKind::Return)},
                                 0, 1, FluidProperties{}),
                    RootTerminalViolation);
}

TEST_CASE("disconnected graph is reported") {
    CHECK_THROWS_AS(NetworkGraph({"root", "term", "x", "y"},
                                 {edge("e0", 0, 1, EdgeKind::Feed),
                                  edge("e1", 2, 3, EdgeKind::Feed)},
                                 0, 1, FluidProperties{}),
                    DisconnectedGraph);
}

TEST_CASE("user edge without a parallel bypass is rejected") {
    CHECK_THROWS_AS(NetworkGraph({"root", "a", "b", "term"},
                                 {edge("e0", 0, 1, EdgeKind::Feed),
                                  edge("u", 1, 2, EdgeKind::User, pipe(), "B-1"),
                                  edge("e1", 2, 3, EdgeKind::Return)},
                                 0, 3, FluidProperties{}),
                    SpecError);
}

TEST_CASE("spec file round-trip preserves structure") {
    TestRng rng(11);
    NetworkGraph g = random_dhn(rng, 4);
    NetworkGraph h = NetworkGraph::from_json_text(g.to_json_text());
    REQUIRE(h.edge_count() == g.edge_count());
    REQUIRE(h.node_count() == g.node_count());
    for (int e = 0; e < g.edge_count(); ++e) {
        CHECK(h.edge(e).name == g.edge(e).name);
        CHECK(h.edge(e).kind == g.edge(e).kind);
        CHECK(h.edge(e).tail == g.edge(e).tail);
        CHECK(h.edge(e).head == g.edge(e).head);
        CHECK(h.edge(e).pipe.length_m == doctest::Approx(g.edge(e).pipe.length_m));
        CHECK(h.edge(e).zeta == doctest::Approx(g.edge(e).zeta).epsilon(1e-12));
    }
    CHECK(h.node_name(h.root()) == g.node_name(g.root()));
}

TEST_CASE("bypass pairing is resolved") {
    TestRng rng(3);
    NetworkGraph g = random_dhn(rng, 3);
    for (int u : g.user_edges()) {
        const int b = g.bypass_of_user(u);
        CHECK(g.edge(b).kind == EdgeKind::Bypass);
        CHECK(g.edge(b).tail == g.edge(u).tail);
        CHECK(g.edge(b).head == g.edge(u).head);
    }
}

} // TEST_SUITE
