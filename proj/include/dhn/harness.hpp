#ifndef DHN_HARNESS_HPP
#define DHN_HARNESS_HPP

#include <optional>
#include <string>
#include <vector>

#include "dhn/coordinator.hpp"
#include "dhn/scenario.hpp"

namespace dhn {

struct StepSelection {
    int step = 0;
    double time_s = 0.0;
    std::vector<int> indices;
    double total_cost_kg = 0.0;
    double total_supply_kg_s = 0.0;
    double pressure_residual_pa = 0.0;
    double mass_residual_kg_s = 0.0;
};

struct RunMetrics {
    std::string mode; // "nominal" | "optimized"
    std::string scenario_fingerprint;
    double step_s = 0.0;
    std::vector<std::string> user_ids;

    std::vector<double> time_s;
    std::vector<double> supply_kg_s;
    std::vector<double> bypass_kg_s;
    std::vector<double> user_kg_s;
    std::vector<double> head_pa;
    std::vector<double> max_abs_dev_k; // max |F/C| over users, per step
    Eigen::MatrixXd user_flow;         // users x steps
    Eigen::MatrixXd user_heat_w;
    Eigen::MatrixXd user_flex_j;

    std::vector<StepSelection> selections; // optimized runs only
    std::vector<double> flex_lower_j;      // per user, static envelope limits
    std::vector<double> flex_upper_j;
    double bypass_integral_kg = 0.0;
    double supplied_mass_kg = 0.0;
    double max_equiv_temp_dev_k = 0.0;

    int steps() const { return static_cast<int>(time_s.size()); }
};

/// Writes the run ledger: config copy, metrics.csv, selections.csv, per-user
/// series and summary.json under `out_dir`. Optimized runs also stream
/// cost_tables.csv (one block per control step).
class RunWriter {
public:
    RunWriter(std::string out_dir, const Scenario& scenario);
    const std::string& dir() const { return dir_; }
    void cost_tables(int step, double time_s, const std::vector<CostTable>& tables);
    void finish(const RunMetrics& metrics);

private:
    std::string dir_;
    bool wrote_cost_header_ = false;
};

/// Baseline: per step, pick the smallest plant head that can track every
/// building's nominal demand (times the configured reserve margin) and
/// root-find the user valves so delivered heat matches demand within 0.5%.
RunMetrics run_nominal(const Scenario& scenario, RunWriter* writer = nullptr);

/// Hierarchical closed loop: partition once; per step sweep candidates per
/// subsystem, coordinate, apply the stage-1 valves and total supply flow to
/// the full network, integrate, and update flexibility states from the truly
/// delivered heat.
RunMetrics run_optimized(const Scenario& scenario,
                         ExecutionPolicy policy = ExecutionPolicy::Serial,
                         RunWriter* writer = nullptr);

struct ComparisonReport {
    double nominal_bypass_kg = 0.0;
    double optimized_bypass_kg = 0.0;
    double reduction_fraction = 0.0; // 1 - optimized/nominal
    double nominal_supplied_kg = 0.0;
    double optimized_supplied_kg = 0.0;
    double supply_ratio = 0.0;       // optimized/nominal
    double max_equiv_temp_dev_k = 0.0;
};

/// Same-scenario comparison (fingerprints must match).
ComparisonReport compare(const RunMetrics& nominal, const RunMetrics& optimized);

void write_comparison(const std::string& out_dir, const ComparisonReport& report,
                      const RunMetrics& nominal, const RunMetrics& optimized);

/// Figure-data emission (tidy long-format CSVs).
void emit_figure_data(const std::string& out_dir, const RunMetrics& nominal,
                      const RunMetrics& optimized);
void emit_cost_figure(const std::string& out_dir, const std::string& cost_tables_csv,
                      int step);

/// Metrics round-trip with the run ledger (used by `compare` on saved runs).
RunMetrics load_metrics(const std::string& run_dir);

} // namespace dhn

#endif
