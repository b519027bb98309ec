// Benchmark of the candidate sweep: serial reference vs the OpenMP map,
// with a bitwise equality check between the two result tables.
#include <chrono>
#include <cstring>
#include <iostream>

#include "dhn/harness.hpp"
#include "dhn/partition.hpp"
#include "dhn/scenario.hpp"

#ifdef DHN_HAVE_OPENMP
#include <omp.h>
#endif

using namespace dhn;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool tables_equal(const CostTable& a, const CostTable& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (size_t i = 0; i < a.entries.size(); ++i) {
        const CostTableEntry& x = a.entries[i];
        const CostTableEntry& y = b.entries[i];
        if (x.feasible != y.feasible) return false;
        if (std::memcmp(&x.cost_kg, &y.cost_kg, sizeof(double)) != 0) return false;
        if (std::memcmp(&x.mdot0_kg_s, &y.mdot0_kg_s, sizeof(double)) != 0) return false;
    }
    return true;
}

} // namespace

int main(int argc, char** argv) {
    int candidates = 12;
    int repeats = 1;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--candidates" && i + 1 < argc)
            candidates = std::atoi(argv[++i]);
        else if (std::string(argv[i]) == "--repeats" && i + 1 < argc)
            repeats = std::atoi(argv[++i]);
    }

    GeneratorOptions opts;
    opts.candidates_count = candidates;
    const std::string dir = "bench_scenario";
    const std::string cfg = generate_synthetic_scenario(opts, dir);
    const Scenario sc = load_scenario(cfg);
    const Partition part = recursive_partition(sc.network, sc.cfg.n_g);
    const HorizonGrid grid = sc.cfg.grid();
    const CandidateSet cand = sc.cfg.candidates();

    std::vector<int> user_pos(sc.network.edge_count(), -1);
    for (size_t i = 0; i < sc.network.user_edges().size(); ++i)
        user_pos[sc.network.user_edges()[i]] = static_cast<int>(i);
    std::vector<int> rows(sc.network.edge_count(), -1);
    int r = 0;
    for (int e = 0; e < sc.network.edge_count(); ++e)
        if (sc.network.edge(e).kind != EdgeKind::User) rows[e] = r++;
    const ThermalState init =
        initial_state(sc.network, BoundaryConditions{sc.cfg.t0_c, sc.cfg.tsetr_c, 0.0});

    std::vector<SubsystemModel> models;
    std::vector<SubsystemContext> ctxs;
    for (int s = 0; s < part.user_subsystem_count; ++s) {
        const Subsystem& sub = part.subsystems[s];
        models.emplace_back(sub);
        SubsystemContext cx;
        cx.t0_c = sc.cfg.t0_c;
        cx.tsetr_c = sc.cfg.tsetr_c;
        for (int k = 0; k < grid.stages(); ++k)
            cx.ambient_c.push_back(sc.ambient.at((k + 0.5) * grid.step_s));
        int local_rows = 0;
        for (size_t le = 0; le < sub.edge_map.size(); ++le)
            if (sub.graph.edge(static_cast<int>(le)).kind != EdgeKind::User) local_rows++;
        cx.initial_temp_c.resize(local_rows);
        int lr = 0;
        for (size_t le = 0; le < sub.edge_map.size(); ++le) {
            if (sub.graph.edge(static_cast<int>(le)).kind == EdgeKind::User) continue;
            cx.initial_temp_c(lr++) = init.temp_c(rows[sub.edge_map[le]]);
        }
        for (int fe : sub.user_edges_full) cx.buildings.push_back(sc.buildings[user_pos[fe]]);
        ctxs.push_back(std::move(cx));
    }

    int threads = 1;
#ifdef DHN_HAVE_OPENMP
    threads = omp_get_max_threads();
#endif
    std::cout << "sweep benchmark: " << models.size() << " subsystems x " << candidates
              << " candidates, " << threads << " thread(s)\n";

    double t_serial = 0.0, t_parallel = 0.0;
    bool equal = true;
    for (int rep = 0; rep < repeats; ++rep) {
        std::vector<CostTable> serial, parallel;
        auto t0 = Clock::now();
        for (size_t s = 0; s < models.size(); ++s)
            serial.push_back(sweep_candidates(models[s], ctxs[s], grid, cand,
                                              ExecutionPolicy::Serial, nullptr));
        t_serial += seconds_since(t0);
        t0 = Clock::now();
        for (size_t s = 0; s < models.size(); ++s)
            parallel.push_back(sweep_candidates(models[s], ctxs[s], grid, cand,
                                                ExecutionPolicy::OpenMP, nullptr));
        t_parallel += seconds_since(t0);
        for (size_t s = 0; s < models.size(); ++s)
            equal = equal && tables_equal(serial[s], parallel[s]);
    }
    std::cout << "serial:   " << t_serial << " s\n"
              << "parallel: " << t_parallel << " s\n"
              << "speedup:  " << (t_parallel > 0 ? t_serial / t_parallel : 0.0) << "x\n"
              << "tables bitwise equal: " << (equal ? "yes" : "NO") << "\n";
    return equal ? 0 : 1;
}
