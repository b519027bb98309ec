#ifndef DHN_SCENARIO_HPP
#define DHN_SCENARIO_HPP

#include <string>
#include <vector>

#include "dhn/buildings.hpp"
#include "dhn/lowlevel.hpp"
#include "dhn/network.hpp"

namespace dhn {

/// Uniformly sampled scalar time series (ambient temperature etc.).
struct SampledSeries {
    double start_s = 0.0;
    double dt_s = 600.0;
    std::vector<double> values;

    double at(double t_s) const;
    bool covers(double t0_s, double t1_s) const;
};

SampledSeries load_ambient_series(const std::string& path);
void write_ambient_series(const std::string& path, const SampledSeries& s);

struct ScenarioConfig {
    std::string network_spec;
    std::string building_catalog;
    std::string demand_profile;
    std::string ambient_series;
    double t0_c = 80.0;
    double tsetr_c = 40.0;
    int n_g = 5;
    double candidates_min_pa = 0.5;
    double candidates_max_pa = 300.0;
    int candidates_count = 24;
    double horizon_s = 3600.0;
    double step_s = 600.0;
    double duration_s = 86400.0;
    double nominal_head_margin = 1.3; // reserve factor on the minimal tracking head
    double epsilon_pa = 0.0;          // 0: derived from the candidate grid
    double planning_margin = 0.98;    // envelope shrink used by the optimizer
    unsigned long long seed = 42;

    CandidateSet candidates() const;
    HorizonGrid grid() const;
};

ScenarioConfig load_scenario_config(const std::string& path);
void save_scenario_config(const std::string& path, const ScenarioConfig& cfg);

/// Everything a run needs, loaded and cross-checked: the network, one
/// building per user edge (in user-edge order), and the ambient series.
struct Scenario {
    ScenarioConfig cfg;
    NetworkGraph network;
    std::vector<Building> buildings; // order matches network.user_edges()
    SampledSeries ambient;
    std::string fingerprint;
};

Scenario load_scenario(const std::string& config_path);

struct GeneratorOptions {
    unsigned long long seed = 42;
    int users = 18;
    std::string layout = "fig1"; // fig1 | line
    double peak_total_w = 2.4e6;
    double design_junction_dp_pa = 20.0;
    double bypass_design_fraction = 0.35; // bypass leak vs user flow at design point
    int n_g = 5;
    int candidates_count = 24;
    double candidates_min_pa = 0.5;
    double candidates_max_pa = 300.0;
    double duration_s = 86400.0;
    double delta_t_upper_k = 2.0;
    double delta_t_lower_k = -2.0;
    double nominal_head_margin = 1.3;
};

/// Deterministic synthetic scenario: network, building catalog, demand and
/// ambient series, and the scenario config, all written under `out_dir`.
/// Returns the config path.
std::string generate_synthetic_scenario(const GeneratorOptions& opts,
                                        const std::string& out_dir);

} // namespace dhn

#endif
