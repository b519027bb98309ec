#ifndef DHN_BUILDINGS_HPP
#define DHN_BUILDINGS_HPP

#include <string>
#include <vector>

#include "dhn/errors.hpp"

namespace dhn {

/// Sampled nominal demand, piecewise constant over [start + i*dt, start + (i+1)*dt).
struct DemandProfile {
    double start_s = 0.0;
    double dt_s = 600.0;
    std::vector<double> values_w;

    double at(double t_s) const;
    bool covers(double t0_s, double t1_s) const;
};

/// Flexibility-envelope state of one user. The used flexibility F is the
/// running integral of delivered-minus-nominal heat plus its initial offset;
/// the envelope keeps F within [C dT_L, C dT_U], i.e. the equivalent
/// temperature deviation F/C within [dT_L, dT_U].
struct Building {
    std::string id;
    double heat_capacity_j_per_k = 0.0;
    double delta_t_lower_k = -2.0; // negative
    double delta_t_upper_k = 2.0;  // positive
    double nominal_temp_c = 20.0;
    DemandProfile demand;
    double used_flexibility_j = 0.0;

    double lower_bound_j() const { return heat_capacity_j_per_k * delta_t_lower_k; }
    double upper_bound_j() const { return heat_capacity_j_per_k * delta_t_upper_k; }
};

/// Initial used-flexibility offset C*(T_nom - T(t0)).
double initial_flexibility_j(const Building& b, double temp_at_t0_c);

/// Accumulate (Qp - Qout(t))*dt into the used flexibility. Throws
/// EnvelopeViolation if the result leaves the envelope by more than 1e-6*C.
void update_flexibility(Building& b, double delivered_w, double t_s, double dt_s);

double equivalent_temperature_deviation_k(const Building& b);

/// Catalog CSV: id,heat_capacity_j_per_k,delta_t_lower_k,delta_t_upper_k,nominal_temp_c
std::vector<Building> load_building_catalog(const std::string& path);
void write_building_catalog(const std::string& path, const std::vector<Building>& bs);

/// Demand CSV (long format): time_s,building_id,qdot_out_w. Values must be
/// sampled on a uniform grid per building.
void load_demand_profiles(const std::string& path, std::vector<Building>& buildings);
void write_demand_profiles(const std::string& path, const std::vector<Building>& buildings);

} // namespace dhn

#endif
