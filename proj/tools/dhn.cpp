#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dhn/harness.hpp"
#include "dhn/log.hpp"
#include "dhn/partition.hpp"
#include "dhn/scenario.hpp"

#ifdef DHN_HAVE_OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace dhn;

namespace {

void set_jobs(int jobs) {
#ifdef DHN_HAVE_OPENMP
    if (jobs > 0) omp_set_num_threads(jobs);
#else
    (void)jobs;
#endif
}

int run_generate(const std::string& out, unsigned long long seed, int users,
                 const std::string& layout, double peak_total_w, int candidates,
                 double duration_s, double flex_k, double margin, int n_g) {
    GeneratorOptions opts;
    opts.seed = seed;
    opts.users = users;
    opts.layout = layout;
    opts.peak_total_w = peak_total_w;
    opts.candidates_count = candidates;
    opts.duration_s = duration_s;
    opts.delta_t_upper_k = flex_k;
    opts.delta_t_lower_k = -flex_k;
    opts.nominal_head_margin = margin;
    if (n_g > 0) opts.n_g = n_g;
    const std::string cfg = generate_synthetic_scenario(opts, out);
    log_info("scenario written to " + cfg);
    return 0;
}

int run_partition(const std::string& config, const std::string& out) {
    const Scenario sc = load_scenario(config);
    const Partition p = recursive_partition(sc.network, sc.cfg.n_g);
    const ReducedGraph r = reduce_graph(sc.network, p);
    fs::create_directories(out);
    write_partition_file((fs::path(out) / "partition.json").string(), sc.network, p, r);
    log_info("partition written to " + out);
    return 0;
}

int run_sweep(const std::string& config, const std::string& out, int jobs) {
    set_jobs(jobs);
    const Scenario sc = load_scenario(config);
    const Partition part = recursive_partition(sc.network, sc.cfg.n_g);
    const HorizonGrid grid = sc.cfg.grid();
    const CandidateSet candidates = sc.cfg.candidates();
    fs::create_directories(out);

    std::vector<int> user_pos(sc.network.edge_count(), -1);
    for (size_t i = 0; i < sc.network.user_edges().size(); ++i)
        user_pos[sc.network.user_edges()[i]] = static_cast<int>(i);
    std::vector<int> rows(sc.network.edge_count(), -1);
    int r = 0;
    for (int e = 0; e < sc.network.edge_count(); ++e)
        if (sc.network.edge(e).kind != EdgeKind::User) rows[e] = r++;
    const ThermalState init =
        initial_state(sc.network, BoundaryConditions{sc.cfg.t0_c, sc.cfg.tsetr_c, 0.0});

    std::vector<CostTable> tables;
    for (int s = 0; s < part.user_subsystem_count; ++s) {
        const Subsystem& sub = part.subsystems[s];
        SubsystemModel model(sub);
        SubsystemContext cx;
        cx.t_start_s = 0.0;
        cx.t0_c = sc.cfg.t0_c;
        cx.tsetr_c = sc.cfg.tsetr_c;
        cx.planning_margin = sc.cfg.planning_margin;
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
        CostTable t = sweep_candidates(model, cx, grid, candidates,
                                       ExecutionPolicy::OpenMP, nullptr);
        t.subsystem = s;
        tables.push_back(std::move(t));
    }
    append_cost_table_csv((fs::path(out) / "cost_tables.csv").string(), 0, 0.0, tables, true);
    log_info("cost tables written to " + out);
    bool any = false;
    for (const CostTable& t : tables) any = any || t.any_feasible();
    return any ? 0 : 2;
}

int run_closed_loop(const std::string& config, const std::string& out, int jobs,
                    bool optimized) {
    set_jobs(jobs);
    const Scenario sc = load_scenario(config);
    RunWriter writer(out, sc);
    try {
        if (optimized)
            run_optimized(sc, ExecutionPolicy::OpenMP, &writer);
        else
            run_nominal(sc, &writer);
    } catch (const StepInfeasible& e) {
        log_error(e.what());
        return 2;
    } catch (const TrackingInfeasible& e) {
        log_error(e.what());
        return 2;
    }
    log_info("run ledger written to " + out);
    return 0;
}

int run_compare(const std::string& nominal_dir, const std::string& optimized_dir,
                const std::string& out, int fig_step) {
    const RunMetrics n = load_metrics(nominal_dir);
    const RunMetrics o = load_metrics(optimized_dir);
    const ComparisonReport rep = compare(n, o);
    write_comparison(out, rep, n, o);
    emit_figure_data(out, n, o);
    const fs::path costs = fs::path(optimized_dir) / "cost_tables.csv";
    if (fs::exists(costs)) emit_cost_figure(out, costs.string(), fig_step);
    std::cout << "bypass reduction: " << rep.reduction_fraction * 100.0 << "%\n"
              << "supply ratio:     " << rep.supply_ratio << "\n"
              << "max |dev|:        " << rep.max_equiv_temp_dev_k << " K\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical demand-side optimization of district heating networks"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic scenario");
    std::string gen_out;
    unsigned long long gen_seed = 42;
    int gen_users = 18, gen_candidates = 24;
    std::string gen_layout = "fig1";
    double gen_peak = 2.4e6, gen_duration = 86400.0, gen_flex = 2.0, gen_margin = 1.3;
    int gen_ng = 0;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--seed", gen_seed, "random seed");
    gen->add_option("--users", gen_users, "number of users");
    gen->add_option("--layout", gen_layout, "fig1 | line");
    gen->add_option("--peak-total-w", gen_peak, "total network peak demand [W]");
    gen->add_option("--candidates", gen_candidates, "candidate pressure count");
    gen->add_option("--duration-s", gen_duration, "simulated duration [s]");
    gen->add_option("--flexibility-k", gen_flex, "envelope half width [K]");
    gen->add_option("--nominal-head-margin", gen_margin, "baseline head reserve factor");
    gen->add_option("--n-g", gen_ng, "number of user-bearing subsystems");

    // partition
    auto* prt = app.add_subcommand("partition", "partition a scenario network");
    std::string prt_config, prt_out;
    prt->add_option("--config", prt_config, "scenario config")->required();
    prt->add_option("--out", prt_out, "output directory")->required();

    // sweep
    auto* swp = app.add_subcommand("sweep", "one-shot candidate sweep at t=0");
    std::string swp_config, swp_out;
    int swp_jobs = 0;
    swp->add_option("--config", swp_config, "scenario config")->required();
    swp->add_option("--out", swp_out, "output directory")->required();
    swp->add_option("--jobs", swp_jobs, "parallel workers");

    // nominal / optimize
    auto* nom = app.add_subcommand("nominal", "closed-loop nominal baseline");
    std::string nom_config, nom_out;
    int nom_jobs = 0;
    nom->add_option("--config", nom_config, "scenario config")->required();
    nom->add_option("--out", nom_out, "run ledger directory")->required();
    nom->add_option("--jobs", nom_jobs, "parallel workers");

    auto* opt = app.add_subcommand("optimize", "closed-loop hierarchical optimization");
    std::string opt_config, opt_out;
    int opt_jobs = 0;
    opt->add_option("--config", opt_config, "scenario config")->required();
    opt->add_option("--out", opt_out, "run ledger directory")->required();
    opt->add_option("--jobs", opt_jobs, "parallel workers");

    // compare
    auto* cmp = app.add_subcommand("compare", "compare two run ledgers");
    std::string cmp_nominal, cmp_optimized, cmp_out;
    int cmp_step = 0;
    cmp->add_option("--nominal", cmp_nominal, "nominal run directory")->required();
    cmp->add_option("--optimized", cmp_optimized, "optimized run directory")->required();
    cmp->add_option("--out", cmp_out, "output directory")->required();
    cmp->add_option("--fig-step", cmp_step, "step for the cost figure");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed())
            return run_generate(gen_out, gen_seed, gen_users, gen_layout, gen_peak,
                                gen_candidates, gen_duration, gen_flex, gen_margin, gen_ng);
        if (prt->parsed()) return run_partition(prt_config, prt_out);
        if (swp->parsed()) return run_sweep(swp_config, swp_out, swp_jobs);
        if (nom->parsed()) return run_closed_loop(nom_config, nom_out, nom_jobs, false);
        if (opt->parsed()) return run_closed_loop(opt_config, opt_out, opt_jobs, true);
        if (cmp->parsed()) return run_compare(cmp_nominal, cmp_optimized, cmp_out, cmp_step);
    } catch (const EnvelopeViolation& e) {
        log_error(e.what());
        return 2;
    } catch (const Error& e) {
        log_error(e.what());
        return 1;
    } catch (const std::exception& e) {
        log_error(e.what());
        return 1;
    }
    return 1;
}
