#include <doctest.h>

#include "coord_support.hpp"
#include "dhn/coordinator.hpp"

using namespace dhn;
using namespace dhn::test;

namespace {

CoordInstance single_subsystem_instance() {
    CoordInstance inst;
    ReducedGraph& r = inst.reduced;
    r.node_full_ids = {0, 1};
    r.node_names = {"root", "term"};
    r.root = 0;
    r.terminal = 1;
    ReducedEdge e;
    e.tail = 0;
    e.head = 1;
    e.subsystem = 0;
    e.pass_through = false;
    r.edges.push_back(e);
    r.incidence = Eigen::MatrixXd::Zero(2, 1);
    r.incidence(0, 0) = 1.0;
    r.incidence(1, 0) = -1.0;
    CostTable t;
    t.subsystem = 0;
    for (int i = 0; i < 5; ++i) {
        CostTableEntry en;
        en.dp_tot_pa = 5.0 + 5.0 * i;
        en.mdot0_kg_s = 1.0 + 0.2 * i;
        en.feasible = i != 1;
        en.cost_kg = 100.0 - 10.0 * i;
        t.entries.push_back(en);
    }
    inst.tables.push_back(std::move(t));
    return inst;
}

} // namespace

TEST_SUITE("coordinator") {

TEST_CASE("single subsystem picks its cheapest feasible entry") {
    CoordInstance inst = single_subsystem_instance();
    SelectionProblem p = inst.problem();
    p.epsilon_pa = 1.0;
    const Selection s = select_optimal(p);
    CHECK(s.indices == std::vector<int>{4});
    CHECK(s.total_cost_kg == doctest::Approx(60.0));
    CHECK(s.total_supply_kg_s == doctest::Approx(1.8));
    CHECK(s.pressure_residual_pa < p.epsilon_pa);
}

TEST_CASE("two identical parallel subsystems: symmetric optimum, lexicographic tie") {
    CoordInstance inst;
    ReducedGraph& r = inst.reduced;
    r.node_full_ids = {0, 1};
    r.node_names = {"root", "term"};
    r.root = 0;
    r.terminal = 1;
    for (int j = 0; j < 2; ++j) {
        ReducedEdge e;
        e.tail = 0;
        e.head = 1;
        e.subsystem = j;
        e.pass_through = false;
        r.edges.push_back(e);
    }
    r.incidence = Eigen::MatrixXd::Zero(2, 2);
    r.incidence(0, 0) = r.incidence(0, 1) = 1.0;
    r.incidence(1, 0) = r.incidence(1, 1) = -1.0;
    CostTable t;
    t.subsystem = 0;
    for (int i = 0; i < 4; ++i) {
        CostTableEntry e;
        e.dp_tot_pa = 10.0 + 10.0 * i;
        e.mdot0_kg_s = 1.0 + 0.1 * i;
        e.feasible = true;
        e.cost_kg = 50.0; // all equal: the tie-break must pick the lowest indices
        t.entries.push_back(e);
    }
    inst.tables.push_back(t);
    inst.tables.push_back(t);
    SelectionProblem p = inst.problem();
    p.epsilon_pa = 0.5;
    const Selection s = select_optimal(p);
    // parallel edges between the same nodes must agree within epsilon, so the
    // chosen drops are equal; equal costs break to the smallest index vector
    CHECK(s.indices == std::vector<int>{0, 0});
    CHECK(s.pressure_residual_pa < 0.5);
}

TEST_CASE("random instances match the brute-force oracle") {
    TestRng rng(2026);
    int feasible_count = 0;
    for (int trial = 0; trial < 40; ++trial) {
        const int subsystems = rng.integer(2, 4);
        const int candidates = rng.integer(3, 10);
        CoordInstance inst = make_coord_instance(rng, subsystems, candidates, 0.0);
        SelectionProblem p = inst.problem();
        p.epsilon_pa = rng.uniform(0.5, 5.0);
        const auto oracle = brute_force_select(p);
        if (oracle) {
            feasible_count++;
            const Selection got = select_optimal(p);
            CHECK(got.total_cost_kg == doctest::Approx(oracle->total_cost_kg).epsilon(1e-12));
            CHECK(got.indices == oracle->indices);
        } else {
            CHECK_THROWS_AS(select_optimal(p), NoFeasibleSelection);
        }
    }
    CHECK(feasible_count > 10); // the generator plants a consistent point
}

TEST_CASE("feasibility check reports residuals") {
    TestRng rng(99);
    CoordInstance inst = make_coord_instance(rng, 3, 6, 0.0);
    SelectionProblem p = inst.problem();
    p.epsilon_pa = 2.0;
    const Selection s = select_optimal(p);
    const SelectionResiduals res = feasibility_check(p, s.indices);
    CHECK(res.pressure_pa == doctest::Approx(s.pressure_residual_pa));
    CHECK(res.pressure_pa < p.epsilon_pa);
    CHECK(res.mass_kg_s <= 1e-9 * std::max(1.0, res.total_supply_kg_s));
}

TEST_CASE("mismatched parallel entries show their pressure difference") {
    CoordInstance inst;
    ReducedGraph& r = inst.reduced;
    r.node_full_ids = {0, 1};
    r.node_names = {"root", "term"};
    r.root = 0;
    r.terminal = 1;
    for (int j = 0; j < 2; ++j) {
        ReducedEdge e;
        e.tail = 0;
        e.head = 1;
        e.subsystem = j;
        e.pass_through = false;
        r.edges.push_back(e);
    }
    r.incidence = Eigen::MatrixXd::Zero(2, 2);
    r.incidence(0, 0) = r.incidence(0, 1) = 1.0;
    r.incidence(1, 0) = r.incidence(1, 1) = -1.0;
    for (int j = 0; j < 2; ++j) {
        CostTable t;
        t.subsystem = j;
        CostTableEntry e;
        e.dp_tot_pa = j == 0 ? 20.0 : 26.5;
        e.mdot0_kg_s = 1.0;
        e.feasible = true;
        e.cost_kg = 1.0;
        t.entries.push_back(e);
        inst.tables.push_back(std::move(t));
    }
    SelectionProblem p = inst.problem();
    const SelectionResiduals res = feasibility_check(p, {0, 0});
    CHECK(res.pressure_pa == doctest::Approx(6.5).epsilon(1e-12));
}

TEST_CASE("series chain conserves mass by construction") {
    TestRng rng(123);
    CoordInstance inst = make_coord_instance(rng, 3, 4, 0.0);
    SelectionProblem p = inst.problem();
    const SelectionResiduals res = feasibility_check(p, {0, 0, 0});
    CHECK(res.mass_kg_s <= 1e-9 * std::max(1.0, res.total_supply_kg_s));
}

TEST_CASE("widening epsilon never raises the optimal cost") {
    TestRng rng(777);
    for (int trial = 0; trial < 10; ++trial) {
        CoordInstance inst = make_coord_instance(rng, 3, 6, 0.0);
        SelectionProblem p = inst.problem();
        double prev = std::numeric_limits<double>::infinity();
        for (double eps : {0.5, 1.0, 2.0, 8.0, 32.0}) {
            p.epsilon_pa = eps;
            try {
                const Selection s = select_optimal(p);
                CHECK(s.total_cost_kg <= prev + 1e-12);
                prev = s.total_cost_kg;
            } catch (const NoFeasibleSelection&) {
                CHECK(prev == std::numeric_limits<double>::infinity());
            }
        }
    }
}

TEST_CASE("all-infeasible tables are rejected upstream") {
    CoordInstance inst = single_subsystem_instance();
    for (auto& e : inst.tables[0].entries) e.feasible = false;
    SelectionProblem p = inst.problem();
    CHECK_THROWS_AS(select_optimal(p), NoFeasibleSelection);
}

TEST_CASE("default epsilon tracks the grid quantization") {
    const CandidateSet c = CandidateSet::log_spaced(0.5, 300.0, 24);
    const double eps = default_epsilon_pa(c);
    double max_gap = 0.0;
    for (size_t i = 1; i < c.pressures_pa.size(); ++i)
        max_gap = std::max(max_gap, c.pressures_pa[i] - c.pressures_pa[i - 1]);
    CHECK(eps == doctest::Approx(0.55 * max_gap));
}

} // TEST_SUITE
