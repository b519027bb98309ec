#include "dhn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "dhn/csv.hpp"
#include "dhn/log.hpp"

namespace dhn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Model-mismatch allowance for the closed-loop envelope check, in kelvin of
// equivalent deviation. The planner never uses it; it only keeps the truth
// check from tripping on the epsilon-scale discrepancy between the planner's
// local model and the full-network response.
constexpr double kEnvelopeSlackK = 3e-4;

std::vector<int> state_rows(const NetworkGraph& g) {
    std::vector<int> rows(g.edge_count(), -1);
    int r = 0;
    for (int e = 0; e < g.edge_count(); ++e)
        if (g.edge(e).kind != EdgeKind::User) rows[e] = r++;
    return rows;
}

double bypass_sum(const NetworkGraph& g, const HydraulicState& hyd) {
    double s = 0.0;
    for (int e = 0; e < g.edge_count(); ++e)
        if (g.edge(e).kind == EdgeKind::Bypass) s += hyd.edge_flow_kg_s(e);
    return s;
}

double user_sum(const NetworkGraph& g, const HydraulicState& hyd) {
    double s = 0.0;
    for (int e : g.user_edges()) s += hyd.edge_flow_kg_s(e);
    return s;
}

void check_conservation(const NetworkGraph& g, const HydraulicState& hyd) {
    const double split = bypass_sum(g, hyd) + user_sum(g, hyd);
    if (std::abs(split - hyd.supply_flow_kg_s) >
        1e-6 * std::max(1e-9, hyd.supply_flow_kg_s))
        throw Error("conservation audit failed: supply " +
                    std::to_string(hyd.supply_flow_kg_s) + " vs cross-edge sum " +
                    std::to_string(split));
}

struct TruthPlant {
    const Scenario* sc;
    HydraulicSolver solver;
    ThermalState state;
    std::vector<Building> buildings; // user-edge order, live flexibility state
    std::vector<double> peak_demand_w;

    explicit TruthPlant(const Scenario& s)
        : sc(&s), solver(s.network),
          state(initial_state(s.network, BoundaryConditions{s.cfg.t0_c, s.cfg.tsetr_c, 0.0})),
          buildings(s.buildings) {
        for (const Building& b : buildings) {
            double peak = 0.0;
            for (double v : b.demand.values_w) peak = std::max(peak, v);
            peak_demand_w.push_back(peak);
        }
    }

    BoundaryConditions bcs_at(double t) const {
        return BoundaryConditions{sc->cfg.t0_c, sc->cfg.tsetr_c, sc->ambient.at(t)};
    }

    /// Envelope update from truly delivered heat, with the mismatch allowance.
    void update_building(int u, double delivered_w, double t, double dt) {
        Building& b = buildings[u];
        const double qout = b.demand.at(t);
        b.used_flexibility_j += (delivered_w - qout) * dt;
        const double tol =
            b.heat_capacity_j_per_k * std::max(1e-6, kEnvelopeSlackK);
        if (b.used_flexibility_j < b.lower_bound_j() - tol ||
            b.used_flexibility_j > b.upper_bound_j() + tol)
            throw EnvelopeViolation("building '" + b.id + "' left its envelope at t=" +
                                    std::to_string(t) + " (F=" +
                                    std::to_string(b.used_flexibility_j) + " J)");
    }
};

void record_step(RunMetrics& m, const NetworkGraph& g, const TruthPlant& plant,
                 const HydraulicState& hyd, const Eigen::VectorXd& mean_heat_w, double t,
                 double head_pa) {
    const int step = m.steps();
    const int users = static_cast<int>(plant.buildings.size());
    m.time_s.push_back(t);
    m.supply_kg_s.push_back(hyd.supply_flow_kg_s);
    m.bypass_kg_s.push_back(bypass_sum(g, hyd));
    m.user_kg_s.push_back(user_sum(g, hyd));
    m.head_pa.push_back(head_pa);
    if (m.user_flow.cols() <= step) {
        m.user_flow.conservativeResize(users, step + 64);
        m.user_heat_w.conservativeResize(users, step + 64);
        m.user_flex_j.conservativeResize(users, step + 64);
    }
    double max_dev = 0.0;
    for (int u = 0; u < users; ++u) {
        m.user_flow(u, step) = hyd.edge_flow_kg_s(g.user_edges()[u]);
        m.user_heat_w(u, step) = mean_heat_w(u);
        m.user_flex_j(u, step) = plant.buildings[u].used_flexibility_j;
        max_dev = std::max(max_dev,
                           std::abs(equivalent_temperature_deviation_k(plant.buildings[u])));
    }
    m.max_abs_dev_k.push_back(max_dev);
    m.max_equiv_temp_dev_k = std::max(m.max_equiv_temp_dev_k, max_dev);
    m.bypass_integral_kg += m.bypass_kg_s.back() * m.step_s;
    m.supplied_mass_kg += hyd.supply_flow_kg_s * m.step_s;
}

void trim_metrics(RunMetrics& m) {
    const int users = static_cast<int>(m.user_ids.size());
    m.user_flow.conservativeResize(users, m.steps());
    m.user_heat_w.conservativeResize(users, m.steps());
    m.user_flex_j.conservativeResize(users, m.steps());
}

// ---------------------------------------------------------------------------
// Nominal baseline
// ---------------------------------------------------------------------------

struct TrackResult {
    bool ok = false;
    Eigen::VectorXd zeta;
    HydraulicState hyd;
    Eigen::VectorXd mean_heat_w;
};

/// Fixed-point valve tracking at a given plant head: each user's valve is
/// rescaled by the squared delivery error until the simulated mean delivered
/// heat matches its target.
TrackResult track_at_head(TruthPlant& plant, double head_pa, double t,
                          const Eigen::VectorXd& target_w, Eigen::VectorXd zeta,
                          double sim_tol_c, double rel_tol, int max_iter) {
    const NetworkGraph& g = plant.sc->network;
    const auto& users = g.user_edges();
    const int nu = static_cast<int>(users.size());
    const double dt = plant.sc->cfg.step_s;
    const BoundaryConditions bcs = plant.bcs_at(t);
    TrackResult res;
    res.zeta = zeta;
    HydraulicWarmStart warm;
    for (int it = 0; it < max_iter; ++it) {
        try {
            res.hyd = plant.solver.solve_given_head(res.zeta, head_pa, &warm);
        } catch (const NonConvergence&) {
            return res;
        }
        simulate_interval(g, res.hyd, plant.state, bcs, dt, sim_tol_c, nullptr,
                          &res.mean_heat_w);
        bool done = true;
        for (int u = 0; u < nu; ++u) {
            const double ref = std::max({target_w(u), 0.01 * plant.peak_demand_w[u], 1.0});
            const double err = (res.mean_heat_w(u) - target_w(u)) / ref;
            if (std::abs(err) > rel_tol) done = false;
        }
        if (done) {
            res.ok = true;
            return res;
        }
        for (int u = 0; u < nu; ++u) {
            const int e = users[u];
            const double lo = g.edge(e).zeta / 100.0;
            const double hi = g.edge(e).zeta * 100.0;
            double factor;
            if (target_w(u) <= 1.0) {
                factor = 16.0; // close the valve as far as allowed
            } else {
                const double ratio = std::max(res.mean_heat_w(u), 1e-6) / target_w(u);
                factor = std::clamp(ratio * ratio, 1.0 / 16.0, 16.0);
            }
            res.zeta(e) = std::clamp(res.zeta(e) * factor, lo, hi);
        }
    }
    // converged within bounds but not within tolerance
    return res;
}

} // namespace

RunMetrics run_nominal(const Scenario& scenario, RunWriter* writer) {
    const NetworkGraph& g = scenario.network;
    TruthPlant plant(scenario);
    const double dt = scenario.cfg.step_s;
    const int steps = static_cast<int>(std::llround(scenario.cfg.duration_s / dt));

    RunMetrics m;
    m.mode = "nominal";
    m.scenario_fingerprint = scenario.fingerprint;
    m.step_s = dt;
    for (const Building& b : plant.buildings) {
        m.user_ids.push_back(b.id);
        m.flex_lower_j.push_back(b.lower_bound_j());
        m.flex_upper_j.push_back(b.upper_bound_j());
    }
    const int nu = static_cast<int>(plant.buildings.size());

    Eigen::VectorXd zeta = g.nominal_zeta();
    double head_guess = 10.0;
    for (int step = 0; step < steps; ++step) {
        const double t = step * dt;
        // Integral feedback: aim delivered heat at demand minus the
        // accumulated deviation, so F is driven back to zero each step.
        Eigen::VectorXd target(nu);
        for (int u = 0; u < nu; ++u)
            target(u) = std::max(
                0.0, plant.buildings[u].demand.at(t) -
                         plant.buildings[u].used_flexibility_j / dt);

        auto feasible = [&](double head) {
            return track_at_head(plant, head, t, target, zeta, 3e-2, 0.01, 25).ok;
        };
        // bracket and bisect the minimal tracking head
        double lo = 1e-6, hi = std::max(head_guess, 1e-5);
        if (feasible(lo)) {
            hi = lo;
        } else {
            int grow = 0;
            while (!feasible(hi)) {
                lo = hi;
                hi *= 2.0;
                if (++grow > 40)
                    throw TrackingInfeasible("no head can track demand at t=" +
                                             std::to_string(t));
            }
            while (hi / lo > 1.02) {
                const double mid = std::sqrt(hi * lo);
                if (feasible(mid))
                    hi = mid;
                else
                    lo = mid;
            }
        }
        const double head = hi * scenario.cfg.nominal_head_margin;
        head_guess = hi;

        TrackResult fin =
            track_at_head(plant, head, t, target, zeta, 1e-4, 0.002, 60);
        if (!fin.ok)
            throw TrackingInfeasible("tracking failed at applied head, t=" +
                                     std::to_string(t));
        zeta = fin.zeta;
        check_conservation(g, fin.hyd);
        Eigen::VectorXd mean_heat;
        plant.state = simulate_interval(g, fin.hyd, plant.state, plant.bcs_at(t), dt, 1e-4,
                                        nullptr, &mean_heat);
        for (int u = 0; u < nu; ++u) plant.update_building(u, mean_heat(u), t, dt);
        record_step(m, g, plant, fin.hyd, mean_heat, t, head);
    }
    trim_metrics(m);
    if (writer) writer->finish(m);
    return m;
}

// ---------------------------------------------------------------------------
// Hierarchical closed loop
// ---------------------------------------------------------------------------

RunMetrics run_optimized(const Scenario& scenario, ExecutionPolicy policy, RunWriter* writer) {
    const NetworkGraph& g = scenario.network;
    TruthPlant plant(scenario);
    const double dt = scenario.cfg.step_s;
    const int steps = static_cast<int>(std::llround(scenario.cfg.duration_s / dt));
    const HorizonGrid grid = scenario.cfg.grid();
    const int stages = grid.stages();
    const CandidateSet candidates = scenario.cfg.candidates();
    const double epsilon = scenario.cfg.epsilon_pa > 0.0 ? scenario.cfg.epsilon_pa
                                                         : default_epsilon_pa(candidates);

    const Partition partition = recursive_partition(g, scenario.cfg.n_g);
    const ReducedGraph reduced = reduce_graph(g, partition);
    log_info("partitioned into " + std::to_string(partition.user_subsystem_count) +
             " user subsystems + " +
             std::to_string(partition.subsystems.size() - partition.user_subsystem_count) +
             " connectors; epsilon=" + std::to_string(epsilon) + " Pa");

    // per user-bearing subsystem: model, user bookkeeping, warm stores
    const int nsub = partition.user_subsystem_count;
    std::vector<SubsystemModel> models;
    models.reserve(nsub);
    std::vector<std::vector<int>> sub_user_index(nsub); // into the plant user order
    const std::vector<int> full_rows = state_rows(g);
    std::vector<int> user_pos(g.edge_count(), -1);
    for (size_t i = 0; i < g.user_edges().size(); ++i) user_pos[g.user_edges()[i]] = static_cast<int>(i);
    for (int s = 0; s < nsub; ++s) {
        models.emplace_back(partition.subsystems[s]);
        for (int fe : partition.subsystems[s].user_edges_full)
            sub_user_index[s].push_back(user_pos[fe]);
    }
    std::vector<std::vector<SolveWarmStart>> warm(nsub);

    RunMetrics m;
    m.mode = "optimized";
    m.scenario_fingerprint = scenario.fingerprint;
    m.step_s = dt;
    for (const Building& b : plant.buildings) {
        m.user_ids.push_back(b.id);
        m.flex_lower_j.push_back(b.lower_bound_j());
        m.flex_upper_j.push_back(b.upper_bound_j());
    }
    const int nu = static_cast<int>(plant.buildings.size());

    for (int step = 0; step < steps; ++step) {
        const double t = step * dt;
        // per-subsystem contexts from the current truth state
        std::vector<SubsystemContext> ctxs(nsub);
        for (int s = 0; s < nsub; ++s) {
            const Subsystem& sub = partition.subsystems[s];
            SubsystemContext& cx = ctxs[s];
            cx.t_start_s = t;
            cx.t0_c = scenario.cfg.t0_c;
            cx.tsetr_c = scenario.cfg.tsetr_c;
            cx.planning_margin = scenario.cfg.planning_margin;
            for (int k = 0; k < stages; ++k)
                cx.ambient_c.push_back(scenario.ambient.at(t + (k + 0.5) * dt));
            // restriction of the plant temperature field to the subsystem
            int local_rows = 0;
            for (size_t le = 0; le < sub.edge_map.size(); ++le)
                if (sub.graph.edge(static_cast<int>(le)).kind != EdgeKind::User) local_rows++;
            cx.initial_temp_c.resize(local_rows);
            int r = 0;
            for (size_t le = 0; le < sub.edge_map.size(); ++le) {
                if (sub.graph.edge(static_cast<int>(le)).kind == EdgeKind::User) continue;
                cx.initial_temp_c(r++) = plant.state.temp_c(full_rows[sub.edge_map[le]]);
            }
            for (int idx : sub_user_index[s]) cx.buildings.push_back(plant.buildings[idx]);
        }

        // candidate sweeps (the parallel map), then coordination
        std::vector<CostTable> tables(nsub);
        for (int s = 0; s < nsub; ++s) {
            tables[s] = sweep_candidates(models[s], ctxs[s], grid, candidates, policy, &warm[s]);
            tables[s].subsystem = s;
        }
        if (writer) writer->cost_tables(step, t, tables);

        SelectionProblem sp;
        sp.reduced = &reduced;
        for (int s = 0; s < nsub; ++s) sp.tables.push_back(&tables[s]);
        sp.epsilon_pa = epsilon;
        Selection sel;
        try {
            sel = select_optimal(sp);
        } catch (const NoFeasibleSelection& e) {
            trim_metrics(m);
            if (writer) writer->finish(m);
            throw StepInfeasible("step " + std::to_string(step) + ": " + e.what());
        }
        StepSelection slog;
        slog.step = step;
        slog.time_s = t;
        slog.indices = sel.indices;
        slog.total_cost_kg = sel.total_cost_kg;
        slog.total_supply_kg_s = sel.total_supply_kg_s;
        slog.pressure_residual_pa = sel.pressure_residual_pa;
        slog.mass_residual_kg_s = sel.mass_residual_kg_s;
        m.selections.push_back(slog);

        // apply stage-1 valves and the coordinated total supply to the plant
        Eigen::VectorXd zeta = g.nominal_zeta();
        for (int s = 0; s < nsub; ++s) {
            const StageSolution& sol = tables[s].entries[sel.indices[s]].solution;
            const auto& fulls = partition.subsystems[s].user_edges_full;
            for (size_t u = 0; u < fulls.size(); ++u)
                zeta(fulls[u]) = sol.zeta_user(0, static_cast<int>(u));
        }
        const HydraulicState hyd =
            solve_flow_given_supply(g, zeta, std::max(sel.total_supply_kg_s, 1e-9));
        check_conservation(g, hyd);
        Eigen::VectorXd mean_heat;
        plant.state = simulate_interval(g, hyd, plant.state, plant.bcs_at(t), dt, 1e-4,
                                        nullptr, &mean_heat);
        for (int u = 0; u < nu; ++u) plant.update_building(u, mean_heat(u), t, dt);
        record_step(m, g, plant, hyd, mean_heat, t,
                    hyd.node_pressure_pa(g.root()));
    }
    trim_metrics(m);
    if (writer) writer->finish(m);
    return m;
}

// ---------------------------------------------------------------------------
// Comparison and ledger IO
// ---------------------------------------------------------------------------

ComparisonReport compare(const RunMetrics& nominal, const RunMetrics& optimized) {
    if (nominal.scenario_fingerprint != optimized.scenario_fingerprint)
        throw ScenarioMismatch("runs come from different scenarios");
    ComparisonReport r;
    r.nominal_bypass_kg = nominal.bypass_integral_kg;
    r.optimized_bypass_kg = optimized.bypass_integral_kg;
    r.reduction_fraction =
        nominal.bypass_integral_kg > 0.0
            ? 1.0 - optimized.bypass_integral_kg / nominal.bypass_integral_kg
            : 0.0;
    r.nominal_supplied_kg = nominal.supplied_mass_kg;
    r.optimized_supplied_kg = optimized.supplied_mass_kg;
    r.supply_ratio = nominal.supplied_mass_kg > 0.0
                         ? optimized.supplied_mass_kg / nominal.supplied_mass_kg
                         : 0.0;
    r.max_equiv_temp_dev_k = optimized.max_equiv_temp_dev_k;
    return r;
}

RunWriter::RunWriter(std::string out_dir, const Scenario& scenario) : dir_(std::move(out_dir)) {
    fs::create_directories(dir_);
    json j;
    j["format"] = 1;
    j["network_spec"] = scenario.cfg.network_spec;
    j["building_catalog"] = scenario.cfg.building_catalog;
    j["demand_profile"] = scenario.cfg.demand_profile;
    j["ambient_series"] = scenario.cfg.ambient_series;
    j["t0_c"] = scenario.cfg.t0_c;
    j["tsetr_c"] = scenario.cfg.tsetr_c;
    j["n_g"] = scenario.cfg.n_g;
    j["candidates_pa"] = {{"min_pa", scenario.cfg.candidates_min_pa},
                          {"max_pa", scenario.cfg.candidates_max_pa},
                          {"count", scenario.cfg.candidates_count},
                          {"spacing", "log"}};
    j["horizon_s"] = scenario.cfg.horizon_s;
    j["step_s"] = scenario.cfg.step_s;
    j["duration_s"] = scenario.cfg.duration_s;
    j["nominal_head_margin"] = scenario.cfg.nominal_head_margin;
    j["epsilon_pa"] = scenario.cfg.epsilon_pa;
    j["planning_margin"] = scenario.cfg.planning_margin;
    j["seed"] = scenario.cfg.seed;
    j["scenario_fingerprint"] = scenario.fingerprint;
    std::ofstream out(fs::path(dir_) / "config.json");
    out << j.dump(2) << "\n";
}

void RunWriter::cost_tables(int step, double time_s, const std::vector<CostTable>& tables) {
    append_cost_table_csv((fs::path(dir_) / "cost_tables.csv").string(), step, time_s, tables,
                          !wrote_cost_header_);
    wrote_cost_header_ = true;
}

void RunWriter::finish(const RunMetrics& m) {
    const fs::path dir(dir_);
    {
        CsvWriter w((dir / "metrics.csv").string(),
                    {"step", "time_s", "mdot_supply_kg_s", "mdot_bypass_kg_s",
                     "mdot_user_kg_s", "head_pa", "max_abs_temp_dev_k"});
        for (int i = 0; i < m.steps(); ++i)
            w.row({CsvWriter::num(static_cast<long long>(i)), CsvWriter::num(m.time_s[i]),
                   CsvWriter::num(m.supply_kg_s[i]), CsvWriter::num(m.bypass_kg_s[i]),
                   CsvWriter::num(m.user_kg_s[i]), CsvWriter::num(m.head_pa[i]),
                   CsvWriter::num(m.max_abs_dev_k[i])});
    }
    if (!m.selections.empty()) {
        CsvWriter w((dir / "selections.csv").string(),
                    {"step", "time_s", "indices", "total_cost_kg", "total_mdot_kg_s",
                     "pressure_residual_pa", "mass_residual_kg_s"});
        for (const StepSelection& s : m.selections) {
            std::string idx;
            for (size_t i = 0; i < s.indices.size(); ++i) {
                if (i) idx += ';';
                idx += std::to_string(s.indices[i]);
            }
            w.row({CsvWriter::num(static_cast<long long>(s.step)), CsvWriter::num(s.time_s),
                   idx, CsvWriter::num(s.total_cost_kg), CsvWriter::num(s.total_supply_kg_s),
                   CsvWriter::num(s.pressure_residual_pa),
                   CsvWriter::num(s.mass_residual_kg_s)});
        }
    }
    {
        CsvWriter w((dir / "user_flow.csv").string(), {"time_s", "building_id", "mdot_kg_s"});
        for (int i = 0; i < m.steps(); ++i)
            for (size_t u = 0; u < m.user_ids.size(); ++u)
                w.row({CsvWriter::num(m.time_s[i]), m.user_ids[u],
                       CsvWriter::num(m.user_flow(static_cast<int>(u), i))});
    }
    {
        CsvWriter w((dir / "user_heat.csv").string(), {"time_s", "building_id", "qdot_w"});
        for (int i = 0; i < m.steps(); ++i)
            for (size_t u = 0; u < m.user_ids.size(); ++u)
                w.row({CsvWriter::num(m.time_s[i]), m.user_ids[u],
                       CsvWriter::num(m.user_heat_w(static_cast<int>(u), i))});
    }
    {
        CsvWriter w((dir / "user_flex.csv").string(),
                    {"time_s", "building_id", "flex_j", "flex_lower_j", "flex_upper_j"});
        for (int i = 0; i < m.steps(); ++i)
            for (size_t u = 0; u < m.user_ids.size(); ++u)
                w.row({CsvWriter::num(m.time_s[i]), m.user_ids[u],
                       CsvWriter::num(m.user_flex_j(static_cast<int>(u), i)),
                       CsvWriter::num(m.flex_lower_j.empty() ? 0.0 : m.flex_lower_j[u]),
                       CsvWriter::num(m.flex_upper_j.empty() ? 0.0 : m.flex_upper_j[u])});
    }
    json j;
    j["mode"] = m.mode;
    j["scenario_fingerprint"] = m.scenario_fingerprint;
    j["steps"] = m.steps();
    j["step_s"] = m.step_s;
    j["bypass_integral_kg"] = m.bypass_integral_kg;
    j["supplied_mass_kg"] = m.supplied_mass_kg;
    j["max_equiv_temp_dev_k"] = m.max_equiv_temp_dev_k;
    j["user_ids"] = m.user_ids;
    j["flex_lower_j"] = m.flex_lower_j;
    j["flex_upper_j"] = m.flex_upper_j;
    std::ofstream out(dir / "summary.json");
    out << j.dump(2) << "\n";
}

RunMetrics load_metrics(const std::string& run_dir) {
    const fs::path dir(run_dir);
    std::ifstream in(dir / "summary.json");
    if (!in) throw SpecError("no summary.json under '" + run_dir + "'");
    json j = json::parse(in);
    RunMetrics m;
    m.mode = j.value("mode", "");
    m.scenario_fingerprint = j.value("scenario_fingerprint", "");
    m.step_s = j.value("step_s", 600.0);
    m.bypass_integral_kg = j.value("bypass_integral_kg", 0.0);
    m.supplied_mass_kg = j.value("supplied_mass_kg", 0.0);
    m.max_equiv_temp_dev_k = j.value("max_equiv_temp_dev_k", 0.0);
    m.user_ids = j.value("user_ids", std::vector<std::string>{});
    m.flex_lower_j = j.value("flex_lower_j", std::vector<double>{});
    m.flex_upper_j = j.value("flex_upper_j", std::vector<double>{});

    CsvTable t = read_csv((dir / "metrics.csv").string());
    t.require_columns({"time_s", "mdot_supply_kg_s", "mdot_bypass_kg_s", "mdot_user_kg_s",
                       "head_pa", "max_abs_temp_dev_k"});
    for (size_t rws = 0; rws < t.row_count(); ++rws) {
        m.time_s.push_back(t.number(rws, "time_s"));
        m.supply_kg_s.push_back(t.number(rws, "mdot_supply_kg_s"));
        m.bypass_kg_s.push_back(t.number(rws, "mdot_bypass_kg_s"));
        m.user_kg_s.push_back(t.number(rws, "mdot_user_kg_s"));
        m.head_pa.push_back(t.number(rws, "head_pa"));
        m.max_abs_dev_k.push_back(t.number(rws, "max_abs_temp_dev_k"));
    }
    const int users = static_cast<int>(m.user_ids.size());
    const int steps = m.steps();
    m.user_flow.setZero(users, steps);
    m.user_heat_w.setZero(users, steps);
    m.user_flex_j.setZero(users, steps);
    std::unordered_map<std::string, int> uidx;
    for (int u = 0; u < users; ++u) uidx[m.user_ids[u]] = u;
    auto load_series = [&](const std::string& file, const std::string& col,
                           Eigen::MatrixXd& target) {
        const fs::path p = dir / file;
        if (!fs::exists(p)) return;
        CsvTable s = read_csv(p.string());
        s.require_columns({"time_s", "building_id", col});
        std::unordered_map<double, int> tindex;
        for (int i = 0; i < steps; ++i) tindex[m.time_s[i]] = i;
        for (size_t rws = 0; rws < s.row_count(); ++rws) {
            const auto ti = tindex.find(s.number(rws, "time_s"));
            const auto ui = uidx.find(s.cell(rws, "building_id"));
            if (ti == tindex.end() || ui == uidx.end()) continue;
            target(ui->second, ti->second) = s.number(rws, col);
        }
    };
    load_series("user_flow.csv", "mdot_kg_s", m.user_flow);
    load_series("user_heat.csv", "qdot_w", m.user_heat_w);
    load_series("user_flex.csv", "flex_j", m.user_flex_j);
    return m;
}

void write_comparison(const std::string& out_dir, const ComparisonReport& report,
                      const RunMetrics& nominal, const RunMetrics& optimized) {
    fs::create_directories(out_dir);
    json j;
    j["nominal_bypass_kg"] = report.nominal_bypass_kg;
    j["optimized_bypass_kg"] = report.optimized_bypass_kg;
    j["reduction_fraction"] = report.reduction_fraction;
    j["nominal_supplied_kg"] = report.nominal_supplied_kg;
    j["optimized_supplied_kg"] = report.optimized_supplied_kg;
    j["supply_ratio"] = report.supply_ratio;
    j["max_equiv_temp_dev_k"] = report.max_equiv_temp_dev_k;
    j["nominal_steps"] = nominal.steps();
    j["optimized_steps"] = optimized.steps();
    std::ofstream out(fs::path(out_dir) / "summary.json");
    out << j.dump(2) << "\n";
}

void emit_figure_data(const std::string& out_dir, const RunMetrics& nominal,
                      const RunMetrics& optimized) {
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    {
        CsvWriter w((dir / "fig_mI.csv").string(), {"time_s", "entity", "variable", "value"});
        auto emit = [&](const RunMetrics& m, const std::string& entity) {
            for (int i = 0; i < m.steps(); ++i) {
                w.row({CsvWriter::num(m.time_s[i]), entity, "supply_kg_s",
                       CsvWriter::num(m.supply_kg_s[i])});
                w.row({CsvWriter::num(m.time_s[i]), entity, "bypass_kg_s",
                       CsvWriter::num(m.bypass_kg_s[i])});
            }
        };
        emit(nominal, "nominal");
        emit(optimized, "optimized");
    }
    {
        CsvWriter w((dir / "fig_mdot.csv").string(), {"time_s", "entity", "variable", "value"});
        for (int i = 0; i < optimized.steps(); ++i)
            for (size_t u = 0; u < optimized.user_ids.size(); ++u)
                w.row({CsvWriter::num(optimized.time_s[i]), optimized.user_ids[u], "mdot_kg_s",
                       CsvWriter::num(optimized.user_flow(static_cast<int>(u), i))});
    }
    {
        CsvWriter w((dir / "fig_flex.csv").string(), {"time_s", "entity", "variable", "value"});
        for (int i = 0; i < optimized.steps(); ++i)
            for (size_t u = 0; u < optimized.user_ids.size(); ++u) {
                w.row({CsvWriter::num(optimized.time_s[i]), optimized.user_ids[u], "flex_j",
                       CsvWriter::num(optimized.user_flex_j(static_cast<int>(u), i))});
                if (!optimized.flex_upper_j.empty()) {
                    w.row({CsvWriter::num(optimized.time_s[i]), optimized.user_ids[u],
                           "limit_upper_j", CsvWriter::num(optimized.flex_upper_j[u])});
                    w.row({CsvWriter::num(optimized.time_s[i]), optimized.user_ids[u],
                           "limit_lower_j", CsvWriter::num(optimized.flex_lower_j[u])});
                }
            }
    }
}

void emit_cost_figure(const std::string& out_dir, const std::string& cost_tables_csv,
                      int step) {
    fs::create_directories(out_dir);
    CsvTable t = read_csv(cost_tables_csv);
    t.require_columns({"step", "subsystem", "dp_tot_pa", "feasible", "cost_kg"});
    CsvWriter w((fs::path(out_dir) / "fig_costs.csv").string(),
                {"dp_tot_pa", "entity", "variable", "value"});
    for (size_t r = 0; r < t.row_count(); ++r) {
        if (static_cast<int>(t.number(r, "step")) != step) continue;
        const std::string entity = "subsystem_" + t.cell(r, "subsystem");
        const bool feasible = t.number(r, "feasible") != 0.0;
        w.row({t.cell(r, "dp_tot_pa"), entity, "feasible", feasible ? "1" : "0"});
        if (feasible)
            w.row({t.cell(r, "dp_tot_pa"), entity, "cost_kg", t.cell(r, "cost_kg")});
    }
}

} // namespace dhn
