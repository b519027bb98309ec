#include "dhn/buildings.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dhn/csv.hpp"

namespace dhn {

double DemandProfile::at(double t_s) const {
    if (values_w.empty()) throw SpecError("empty demand profile");
    const double rel = (t_s - start_s) / dt_s;
    auto idx = static_cast<long>(std::floor(rel + 1e-9));
    idx = std::clamp<long>(idx, 0, static_cast<long>(values_w.size()) - 1);
    return values_w[static_cast<size_t>(idx)];
}

bool DemandProfile::covers(double t0_s, double t1_s) const {
    if (values_w.empty()) return false;
    const double end = start_s + dt_s * static_cast<double>(values_w.size());
    return t0_s >= start_s - 1e-9 && t1_s <= end + 1e-9;
}

double initial_flexibility_j(const Building& b, double temp_at_t0_c) {
    return b.heat_capacity_j_per_k * (b.nominal_temp_c - temp_at_t0_c);
}

void update_flexibility(Building& b, double delivered_w, double t_s, double dt_s) {
    if (dt_s <= 0.0) throw SpecError("flexibility update interval must be positive");
    const double qout = b.demand.at(t_s);
    b.used_flexibility_j += (delivered_w - qout) * dt_s;
    const double tol = 1e-6 * b.heat_capacity_j_per_k;
    if (b.used_flexibility_j < b.lower_bound_j() - tol ||
        b.used_flexibility_j > b.upper_bound_j() + tol)
        throw EnvelopeViolation("building '" + b.id + "' left its flexibility envelope (F=" +
                                std::to_string(b.used_flexibility_j) + " J)");
}

double equivalent_temperature_deviation_k(const Building& b) {
    return b.used_flexibility_j / b.heat_capacity_j_per_k;
}

std::vector<Building> load_building_catalog(const std::string& path) {
    CsvTable t = read_csv(path);
    t.require_columns({"id", "heat_capacity_j_per_k", "delta_t_lower_k", "delta_t_upper_k",
                       "nominal_temp_c"});
    std::vector<Building> out;
    for (size_t r = 0; r < t.row_count(); ++r) {
        Building b;
        b.id = t.cell(r, "id");
        b.heat_capacity_j_per_k = t.number(r, "heat_capacity_j_per_k");
        b.delta_t_lower_k = t.number(r, "delta_t_lower_k");
        b.delta_t_upper_k = t.number(r, "delta_t_upper_k");
        b.nominal_temp_c = t.number(r, "nominal_temp_c");
        if (b.heat_capacity_j_per_k <= 0.0)
            throw SpecError("building '" + b.id + "' has nonpositive heat capacity");
        if (b.delta_t_lower_k > 0.0 || b.delta_t_upper_k < 0.0)
            throw SpecError("building '" + b.id + "' has inverted envelope bounds");
        out.push_back(std::move(b));
    }
    return out;
}

void write_building_catalog(const std::string& path, const std::vector<Building>& bs) {
    CsvWriter w(path, {"id", "heat_capacity_j_per_k", "delta_t_lower_k", "delta_t_upper_k",
                       "nominal_temp_c"});
    for (const Building& b : bs)
        w.row({CsvWriter::str(b.id), CsvWriter::num(b.heat_capacity_j_per_k),
               CsvWriter::num(b.delta_t_lower_k), CsvWriter::num(b.delta_t_upper_k),
               CsvWriter::num(b.nominal_temp_c)});
}

void load_demand_profiles(const std::string& path, std::vector<Building>& buildings) {
    CsvTable t = read_csv(path);
    t.require_columns({"time_s", "building_id", "qdot_out_w"});
    std::map<std::string, std::vector<std::pair<double, double>>> series;
    for (size_t r = 0; r < t.row_count(); ++r)
        series[t.cell(r, "building_id")].push_back(
            {t.number(r, "time_s"), t.number(r, "qdot_out_w")});
    for (Building& b : buildings) {
        auto it = series.find(b.id);
        if (it == series.end())
            throw SpecError("demand profile missing building '" + b.id + "'");
        auto& pts = it->second;
        std::sort(pts.begin(), pts.end());
        DemandProfile p;
        p.start_s = pts.front().first;
        p.dt_s = pts.size() > 1 ? pts[1].first - pts[0].first : 600.0;
        if (p.dt_s <= 0.0) throw SpecError("demand profile for '" + b.id + "' not increasing");
        for (size_t i = 0; i < pts.size(); ++i) {
            const double expected = p.start_s + p.dt_s * static_cast<double>(i);
            if (std::abs(pts[i].first - expected) > 1e-6 * std::max(1.0, p.dt_s))
                throw SpecError("demand profile for '" + b.id + "' is not uniformly sampled");
            if (pts[i].second < 0.0)
                throw SpecError("negative demand for '" + b.id + "'");
            p.values_w.push_back(pts[i].second);
        }
        b.demand = std::move(p);
    }
}

void write_demand_profiles(const std::string& path, const std::vector<Building>& buildings) {
    CsvWriter w(path, {"time_s", "building_id", "qdot_out_w"});
    for (const Building& b : buildings)
        for (size_t i = 0; i < b.demand.values_w.size(); ++i)
            w.row({CsvWriter::num(b.demand.start_s + b.demand.dt_s * static_cast<double>(i)),
                   CsvWriter::str(b.id), CsvWriter::num(b.demand.values_w[i])});
}

} // namespace dhn
