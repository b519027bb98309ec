#ifndef DHN_LOWLEVEL_HPP
#define DHN_LOWLEVEL_HPP

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dhn/buildings.hpp"
#include "dhn/hydraulics.hpp"
#include "dhn/partition.hpp"
#include "dhn/thermal.hpp"

namespace dhn {

struct HorizonGrid {
    double horizon_s = 3600.0;
    double step_s = 600.0;

    int stages() const;
};

struct CandidateSet {
    std::vector<double> pressures_pa; // strictly increasing

    static CandidateSet log_spaced(double min_pa, double max_pa, int count);
    void validate() const;
};

/// Per-stage boundary data and building snapshots for one subsystem's
/// finite-horizon problem.
struct SubsystemContext {
    double t_start_s = 0.0;
    double t0_c = 80.0;
    double tsetr_c = 40.0;
    std::vector<double> ambient_c;        // one entry per stage
    Eigen::VectorXd initial_temp_c;       // subsystem non-user edges, edge order
    std::vector<Building> buildings;      // order matches subsystem user edges
    double planning_margin = 0.98;        // envelope shrink used for planning
};

/// Transcription of the optimal-control problem for one subsystem and one
/// candidate total pressure drop. Decisions are the per-stage user valve
/// coefficients plus the per-stage supply flow; the stage-1 supply flow is
/// pinned by the head constraint and later stages are free. Envelope
/// inequalities apply cumulatively at every stage.
struct SubsystemProblem {
    const Subsystem* subsystem = nullptr;
    SubsystemContext context;
    HorizonGrid grid;
    double dp_tot_pa = 0.0;

    int users() const;
    int stages() const { return grid.stages(); }
    int decision_dimension() const { return users() * stages() + stages(); }
    int envelope_constraint_count() const { return users() * stages(); }
};

SubsystemProblem transcribe(const Subsystem& sub, const SubsystemContext& ctx,
                            const HorizonGrid& grid, double dp_tot_pa);

struct StageSolution {
    bool feasible = false;
    double cost_kg = 0.0;             // bypass mass integral over the horizon
    double mdot0_first_kg_s = 0.0;    // supply flow of the applied first stage
    Eigen::MatrixXd zeta_user;        // stages x users
    Eigen::VectorXd mdot0_kg_s;       // per stage (stage 1 implied by the head)
    double kkt_residual = 0.0;        // scaled projected-gradient norm
    double constraint_violation = 0.0; // scaled envelope violation
    int iterations = 0;
    std::string note;                 // set when infeasible
};

/// Warm-start memory for one (subsystem, candidate) pair across control steps.
struct SolveWarmStart {
    bool valid = false;
    Eigen::MatrixXd zeta_user;
    Eigen::VectorXd mdot0_kg_s;
    Eigen::VectorXd multipliers;
};

/// Precomputed per-subsystem machinery shared by all candidate solves.
class SubsystemModel {
public:
    explicit SubsystemModel(const Subsystem& sub);
    const Subsystem& subsystem() const { return *sub_; }
    const HydraulicSolver& hydraulics() const { return solver_; }
    double max_supply_kg_s() const { return max_supply_kg_s_; }
    Eigen::VectorXd zeta_lower() const;
    Eigen::VectorXd zeta_upper() const;

    struct Impl;
    const Impl& impl() const { return *impl_; }

private:
    const Subsystem* sub_;
    HydraulicSolver solver_;
    double max_supply_kg_s_ = 0.0;
    std::shared_ptr<const Impl> impl_;
};

StageSolution solve_stage(const SubsystemModel& model, const SubsystemProblem& problem,
                          SolveWarmStart* warm = nullptr);

struct CostTableEntry {
    double dp_tot_pa = 0.0;
    bool feasible = false;
    double cost_kg = 0.0;
    double mdot0_kg_s = 0.0;
    StageSolution solution;
};

struct CostTable {
    int subsystem = -1;
    std::vector<CostTableEntry> entries;

    bool any_feasible() const;
};

enum class ExecutionPolicy { Serial, OpenMP };

/// Candidate sweep for one subsystem: one independent solve per candidate.
/// `warm` (optional) holds one SolveWarmStart per candidate, updated in place.
CostTable sweep_candidates(const SubsystemModel& model, const SubsystemContext& ctx,
                           const HorizonGrid& grid, const CandidateSet& candidates,
                           ExecutionPolicy policy = ExecutionPolicy::Serial,
                           std::vector<SolveWarmStart>* warm = nullptr);

/// CSV export: subsystem, dp_tot_pa, feasible, cost_kg, mdot0_kg_s per row.
void append_cost_table_csv(const std::string& path, int step, double time_s,
                           const std::vector<CostTable>& tables, bool write_header);

/// Forward simulation of a returned solution through the plain network
/// simulator (solver + interval integrator), independent of the optimizer's
/// internal rollout; used to audit transcription consistency.
struct ReplayResult {
    double cost_kg = 0.0;
    Eigen::VectorXd final_flex_j;      // per user
    double max_envelope_violation_j = 0.0;
};
ReplayResult replay_solution(const SubsystemModel& model, const SubsystemProblem& problem,
                             const StageSolution& sol);

} // namespace dhn

#endif
