#include "dhn/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "dhn/csv.hpp"

namespace dhn {

namespace fs = std::filesystem;
using nlohmann::json;

double SampledSeries::at(double t_s) const {
    if (values.empty()) throw SpecError("empty series");
    const double rel = (t_s - start_s) / dt_s;
    auto idx = static_cast<long>(std::floor(rel + 1e-9));
    idx = std::clamp<long>(idx, 0, static_cast<long>(values.size()) - 1);
    return values[static_cast<size_t>(idx)];
}

bool SampledSeries::covers(double t0_s, double t1_s) const {
    if (values.empty()) return false;
    const double end = start_s + dt_s * static_cast<double>(values.size());
    return t0_s >= start_s - 1e-9 && t1_s <= end + 1e-9;
}

SampledSeries load_ambient_series(const std::string& path) {
    CsvTable t = read_csv(path);
    t.require_columns({"time_s", "t_amb_c"});
    std::vector<std::pair<double, double>> pts;
    for (size_t r = 0; r < t.row_count(); ++r)
        pts.push_back({t.number(r, "time_s"), t.number(r, "t_amb_c")});
    std::sort(pts.begin(), pts.end());
    if (pts.empty()) throw SpecError("ambient series is empty");
    SampledSeries s;
    s.start_s = pts.front().first;
    s.dt_s = pts.size() > 1 ? pts[1].first - pts[0].first : 600.0;
    for (size_t i = 0; i < pts.size(); ++i) {
        const double expected = s.start_s + s.dt_s * static_cast<double>(i);
        if (std::abs(pts[i].first - expected) > 1e-6 * std::max(1.0, s.dt_s))
            throw SpecError("ambient series is not uniformly sampled");
        s.values.push_back(pts[i].second);
    }
    return s;
}

void write_ambient_series(const std::string& path, const SampledSeries& s) {
    CsvWriter w(path, {"time_s", "t_amb_c"});
    for (size_t i = 0; i < s.values.size(); ++i)
        w.row({CsvWriter::num(s.start_s + s.dt_s * static_cast<double>(i)),
               CsvWriter::num(s.values[i])});
}

CandidateSet ScenarioConfig::candidates() const {
    return CandidateSet::log_spaced(candidates_min_pa, candidates_max_pa, candidates_count);
}

HorizonGrid ScenarioConfig::grid() const {
    return HorizonGrid{horizon_s, step_s};
}

ScenarioConfig load_scenario_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open scenario config '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw SpecError(std::string("scenario config parse error: ") + e.what());
    }
    if (!j.contains("format") || j["format"].get<int>() != 1)
        throw SpecError("scenario config: missing or unsupported 'format'");
    ScenarioConfig c;
    c.network_spec = j.at("network_spec").get<std::string>();
    c.building_catalog = j.at("building_catalog").get<std::string>();
    c.demand_profile = j.at("demand_profile").get<std::string>();
    c.ambient_series = j.at("ambient_series").get<std::string>();
    c.t0_c = j.value("t0_c", 80.0);
    c.tsetr_c = j.value("tsetr_c", 40.0);
    c.n_g = j.value("n_g", 5);
    if (j.contains("candidates_pa")) {
        const auto& cc = j["candidates_pa"];
        c.candidates_min_pa = cc.value("min_pa", 0.5);
        c.candidates_max_pa = cc.value("max_pa", 300.0);
        c.candidates_count = cc.value("count", 24);
    }
    c.horizon_s = j.value("horizon_s", 3600.0);
    c.step_s = j.value("step_s", 600.0);
    c.duration_s = j.value("duration_s", 86400.0);
    c.nominal_head_margin = j.value("nominal_head_margin", 1.3);
    c.epsilon_pa = j.value("epsilon_pa", 0.0);
    c.planning_margin = j.value("planning_margin", 0.98);
    c.seed = j.value("seed", 42ull);
    // paths are relative to the config file
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](std::string& p) {
        if (!p.empty() && !fs::path(p).is_absolute()) p = (base / p).string();
    };
    resolve(c.network_spec);
    resolve(c.building_catalog);
    resolve(c.demand_profile);
    resolve(c.ambient_series);
    return c;
}

void save_scenario_config(const std::string& path, const ScenarioConfig& cfg) {
    json j;
    j["format"] = 1;
    const fs::path base = fs::path(path).parent_path();
    auto rel = [&](const std::string& p) {
        const fs::path fp(p);
        if (!fp.is_absolute()) return p;
        std::error_code ec;
        const fs::path r = fs::relative(fp, base, ec);
        return ec ? p : r.string();
    };
    j["network_spec"] = rel(cfg.network_spec);
    j["building_catalog"] = rel(cfg.building_catalog);
    j["demand_profile"] = rel(cfg.demand_profile);
    j["ambient_series"] = rel(cfg.ambient_series);
    j["t0_c"] = cfg.t0_c;
    j["tsetr_c"] = cfg.tsetr_c;
    j["n_g"] = cfg.n_g;
    j["candidates_pa"] = {{"min_pa", cfg.candidates_min_pa},
                          {"max_pa", cfg.candidates_max_pa},
                          {"count", cfg.candidates_count},
                          {"spacing", "log"}};
    j["horizon_s"] = cfg.horizon_s;
    j["step_s"] = cfg.step_s;
    j["duration_s"] = cfg.duration_s;
    j["nominal_head_margin"] = cfg.nominal_head_margin;
    j["epsilon_pa"] = cfg.epsilon_pa;
    j["planning_margin"] = cfg.planning_margin;
    j["seed"] = cfg.seed;
    std::ofstream out(path);
    if (!out) throw SpecError("cannot write scenario config '" + path + "'");
    out << j.dump(2) << "\n";
}

namespace {

uint64_t fnv1a(const std::string& data, uint64_t h) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

Scenario load_scenario(const std::string& config_path) {
    ScenarioConfig cfg = load_scenario_config(config_path);
    Scenario s{cfg, NetworkGraph::from_spec_file(cfg.network_spec), {}, {}, {}};
    std::vector<Building> catalog = load_building_catalog(s.cfg.building_catalog);
    load_demand_profiles(s.cfg.demand_profile, catalog);
    s.ambient = load_ambient_series(s.cfg.ambient_series);

    // one building per user edge, ordered like the user edges
    for (int ue : s.network.user_edges()) {
        const std::string& id = s.network.edge(ue).building;
        if (id.empty())
            throw SpecError("user edge '" + s.network.edge(ue).name + "' names no building");
        auto it = std::find_if(catalog.begin(), catalog.end(),
                               [&](const Building& b) { return b.id == id; });
        if (it == catalog.end())
            throw SpecError("building '" + id + "' missing from the catalog");
        s.buildings.push_back(*it);
    }

    uint64_t h = 1469598103934665603ull;
    h = fnv1a(slurp(s.cfg.network_spec), h);
    h = fnv1a(slurp(s.cfg.building_catalog), h);
    h = fnv1a(slurp(s.cfg.demand_profile), h);
    h = fnv1a(slurp(s.cfg.ambient_series), h);
    char key[256];
    std::snprintf(key, sizeof key, "%g|%g|%d|%g|%g|%d|%g|%g|%g|%g|%g|%llu",
                  s.cfg.t0_c, s.cfg.tsetr_c, s.cfg.n_g, s.cfg.candidates_min_pa,
                  s.cfg.candidates_max_pa, s.cfg.candidates_count, s.cfg.horizon_s,
                  s.cfg.step_s, s.cfg.duration_s, s.cfg.nominal_head_margin,
                  s.cfg.planning_margin, static_cast<unsigned long long>(s.cfg.seed));
    h = fnv1a(key, h);
    char hex[32];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    s.fingerprint = hex;
    return s;
}

// ---------------------------------------------------------------------------
// Synthetic scenario generation
// ---------------------------------------------------------------------------

namespace {

/// Deterministic uniform draws in [0,1) from a splitmix-style counter; the
/// same seed yields byte-identical files on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}
    double uniform() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        z ^= z >> 31;
        return static_cast<double>(z >> 11) * 0x1.0p-53;
    }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double log_uniform(double lo, double hi) {
        return std::exp(uniform(std::log(lo), std::log(hi)));
    }

private:
    uint64_t state_;
};

double user_diameter_for_zeta(double zeta, double length_m, double lambda, double rho) {
    // zeta = 8 lambda L / (rho pi^2 D^5)
    const double d5 = 8.0 * lambda * length_m / (rho * std::numbers::pi * std::numbers::pi * zeta);
    return std::pow(d5, 0.2);
}

struct BuildingPlan {
    std::string id;
    std::string type; // house | commercial | apartment
    double c_j_per_k;
    double peak_w;
};

double demand_shape(const std::string& type, double hour, double morning_shift,
                    double evening_shift) {
    auto bump = [](double h, double center, double width) {
        const double d = (h - center) / width;
        return std::exp(-0.5 * d * d);
    };
    if (type == "commercial") {
        // business-hours plateau with soft edges
        const double rise = 1.0 / (1.0 + std::exp(-(hour - (8.0 + morning_shift)) * 2.0));
        const double fall = 1.0 / (1.0 + std::exp((hour - (18.0 + evening_shift)) * 2.0));
        return 0.25 + 0.75 * rise * fall;
    }
    // residential: morning and evening peaks over a night base
    return 0.25 + 0.65 * bump(hour, 7.0 + morning_shift, 1.6) +
           0.75 * bump(hour, 19.0 + evening_shift, 2.4);
}

} // namespace

std::string generate_synthetic_scenario(const GeneratorOptions& opts,
                                        const std::string& out_dir) {
    if (opts.users < 1) throw SpecError("at least one user required");
    if (opts.layout != "fig1" && opts.layout != "line")
        throw SpecError("unknown layout '" + opts.layout + "'");
    if (opts.layout == "fig1" && opts.users != 18)
        throw SpecError("the fig1 layout is the 18-user template");
    fs::create_directories(out_dir);
    Rng rng(opts.seed);
    const FluidProperties fluid{};
    const double cp = fluid.specific_heat_j_per_kgk;
    const double t0_c = 80.0, tsetr_c = 40.0;
    const double lambda = 0.01, h_wall = 1.5;

    // branch layout: sizes and building types per branch
    std::vector<std::vector<std::string>> branch_types;
    if (opts.layout == "fig1") {
        branch_types = {{"house", "house", "house", "house"},
                        {"house", "house", "house", "house"},
                        {"commercial", "commercial", "commercial", "commercial"},
                        {"commercial", "commercial", "commercial"},
                        {"apartment", "apartment", "apartment"}};
    } else {
        branch_types.emplace_back();
        for (int u = 0; u < opts.users; ++u)
            branch_types[0].push_back(u % 3 == 2 ? "commercial" : "house");
    }

    // building plans: heat capacities within the catalog range, demand peaks
    // scaled so the total network peak matches the requested level
    std::vector<BuildingPlan> plans;
    int house_n = 0, comm_n = 0, apt_n = 0;
    for (const auto& branch : branch_types)
        for (const auto& type : branch) {
            BuildingPlan b;
            b.type = type;
            if (type == "house") {
                b.id = "R-" + std::to_string(1000 + 7 * ++house_n);
                b.c_j_per_k = rng.log_uniform(78e6, 900e6);
            } else if (type == "commercial") {
                b.id = "C-" + std::to_string(100000 + 13 * ++comm_n);
                b.c_j_per_k = rng.log_uniform(1511e6, 12562e6);
            } else {
                b.id = "A-" + std::to_string(20000 + 11 * ++apt_n);
                b.c_j_per_k = rng.log_uniform(265e6, 900e6);
            }
            b.peak_w = std::pow(b.c_j_per_k / 1e9, 0.7) * rng.uniform(0.85, 1.2);
            plans.push_back(std::move(b));
        }
    double peak_sum = 0.0;
    for (const auto& b : plans) peak_sum += b.peak_w;
    for (auto& b : plans) b.peak_w *= opts.peak_total_w / peak_sum;

    // --- network ---
    std::vector<std::string> nodes;
    std::vector<Edge> edges;
    auto add_node = [&](const std::string& n) {
        nodes.push_back(n);
        return static_cast<int>(nodes.size() - 1);
    };
    auto add_pipe = [&](const std::string& name, int tail, int head, EdgeKind kind, double L,
                        double D, const std::string& building = "") {
        Edge e;
        e.name = name;
        e.tail = tail;
        e.head = head;
        e.kind = kind;
        e.pipe = PipeAttributes{L, D, lambda, h_wall};
        e.building = building;
        edges.push_back(std::move(e));
    };

    const int root = add_node("plant_supply");
    const int term = add_node("plant_return");
    const int nb = static_cast<int>(branch_types.size());

    // Pipes are sized for their design flow (downstream peak draw plus the
    // bypass allowance): the diameter that would drop a drawn per-pipe design
    // pressure at that flow, clamped into the tabulated range.
    const double bypass_allow = 1.0 + opts.bypass_design_fraction;
    auto sized_diameter = [&](double length_m, double design_flow_kg_s, double dp_pa) {
        const double zeta_target = dp_pa / std::max(design_flow_kg_s * design_flow_kg_s, 1e-12);
        const double d = user_diameter_for_zeta(zeta_target, length_m, lambda,
                                                fluid.density_kg_m3);
        return std::clamp(d, 0.15, 0.40);
    };
    std::vector<double> branch_peak_w(nb, 0.0);
    {
        int idx = 0;
        for (int b = 0; b < nb; ++b)
            for (size_t u = 0; u < branch_types[b].size(); ++u)
                branch_peak_w[b] += plans[idx++].peak_w;
    }

    int plan_idx = 0;
    int prev_feed = root, prev_return = term;
    for (int b = 0; b < nb; ++b) {
        const int tf = add_node("tf" + std::to_string(b + 1));
        const int tr = add_node("tr" + std::to_string(b + 1));
        const double trunk_len = rng.uniform(60.0, 100.0);
        double downstream_w = 0.0;
        for (int j = b; j < nb; ++j) downstream_w += branch_peak_w[j];
        const double trunk_flow = bypass_allow * downstream_w / (cp * (t0_c - tsetr_c));
        const double trunk_d = sized_diameter(trunk_len, trunk_flow, rng.uniform(4.0, 8.0));
        add_pipe("trunk_f" + std::to_string(b + 1), prev_feed, tf, EdgeKind::Feed, trunk_len,
                 trunk_d);
        add_pipe("trunk_r" + std::to_string(b + 1), tr, prev_return, EdgeKind::Return, trunk_len,
                 trunk_d);
        int feed_at = tf, return_at = tr;
        const int nu = static_cast<int>(branch_types[b].size());
        for (int u = 0; u < nu; ++u) {
            const BuildingPlan& plan = plans[plan_idx++];
            const std::string tag = std::to_string(b + 1) + "_" + std::to_string(u + 1);
            const int jf = add_node("bf" + tag);
            const int jr = add_node("br" + tag);
            const double len = u == 0 ? rng.uniform(20.0, 60.0) : rng.uniform(10.0, 40.0);
            double downstream_branch_w = 0.0;
            for (int j = u; j < nu; ++j) downstream_branch_w += plans[plan_idx - 1 - u + j].peak_w;
            const double pipe_flow =
                bypass_allow * downstream_branch_w / (cp * (t0_c - tsetr_c));
            const double dia = sized_diameter(len, pipe_flow, rng.uniform(1.0, 3.0));
            add_pipe("branch_f" + tag, feed_at, jf, EdgeKind::Feed, len, dia);
            add_pipe("branch_r" + tag, jr, return_at, EdgeKind::Return, len, dia);
            const double mdot_peak = plan.peak_w / (cp * (t0_c - tsetr_c));
            const double zeta_user = opts.design_junction_dp_pa / (mdot_peak * mdot_peak);
            const double mdot_bypass = opts.bypass_design_fraction * mdot_peak;
            const double zeta_bypass = opts.design_junction_dp_pa / (mdot_bypass * mdot_bypass);
            add_pipe("user_" + tag, jf, jr, EdgeKind::User, 2.0,
                     user_diameter_for_zeta(zeta_user, 2.0, lambda, fluid.density_kg_m3),
                     plan.id);
            add_pipe("bypass_" + tag, jf, jr, EdgeKind::Bypass, 3.0,
                     user_diameter_for_zeta(zeta_bypass, 3.0, lambda, fluid.density_kg_m3));
            feed_at = jf;
            return_at = jr;
        }
        prev_feed = tf;
        prev_return = tr;
    }
    const NetworkGraph net(nodes, edges, root, term, fluid);
    const fs::path dir(out_dir);
    net.write_spec_file((dir / "network.json").string());

    // --- buildings and demand ---
    const double step_s = 600.0;
    const double horizon_s = 3600.0;
    const double cover_s = opts.duration_s + horizon_s + step_s;
    std::vector<Building> buildings;
    for (const auto& plan : plans) {
        Building b;
        b.id = plan.id;
        b.heat_capacity_j_per_k = plan.c_j_per_k;
        b.delta_t_lower_k = opts.delta_t_lower_k;
        b.delta_t_upper_k = opts.delta_t_upper_k;
        b.nominal_temp_c = 20.0;
        const double morning = rng.uniform(-1.0, 1.0);
        const double evening = rng.uniform(-1.0, 1.0);
        // normalize against the full daily cycle, not just the covered window
        double shape_max = 0.0;
        for (int i = 0; i < 144; ++i)
            shape_max = std::max(shape_max,
                                 demand_shape(plan.type, i / 6.0, morning, evening));
        const int samples = static_cast<int>(std::ceil(cover_s / step_s));
        std::vector<double> shape(samples);
        for (int i = 0; i < samples; ++i) {
            const double hour = std::fmod(i * step_s / 3600.0, 24.0);
            shape[i] = demand_shape(plan.type, hour, morning, evening);
        }
        b.demand.start_s = 0.0;
        b.demand.dt_s = step_s;
        for (int i = 0; i < samples; ++i)
            b.demand.values_w.push_back(plan.peak_w * shape[i] / shape_max);
        buildings.push_back(std::move(b));
    }
    write_building_catalog((dir / "buildings.csv").string(), buildings);
    write_demand_profiles((dir / "demand.csv").string(), buildings);

    // --- ambient: TMY-like winter day within the tabulated range ---
    SampledSeries amb;
    amb.start_s = 0.0;
    amb.dt_s = step_s;
    for (double t = 0.0; t < cover_s; t += step_s) {
        const double phase = 2.0 * std::numbers::pi * (t - 15.0 * 3600.0) / 86400.0;
        amb.values.push_back(-16.7 + 2.8 * std::cos(phase));
    }
    write_ambient_series((dir / "ambient.csv").string(), amb);

    ScenarioConfig cfg;
    cfg.network_spec = "network.json";
    cfg.building_catalog = "buildings.csv";
    cfg.demand_profile = "demand.csv";
    cfg.ambient_series = "ambient.csv";
    cfg.t0_c = t0_c;
    cfg.tsetr_c = tsetr_c;
    cfg.n_g = std::min(opts.n_g, opts.users);
    cfg.candidates_min_pa = opts.candidates_min_pa;
    cfg.candidates_max_pa = opts.candidates_max_pa;
    cfg.candidates_count = opts.candidates_count;
    cfg.horizon_s = horizon_s;
    cfg.step_s = step_s;
    cfg.duration_s = opts.duration_s;
    cfg.nominal_head_margin = opts.nominal_head_margin;
    cfg.seed = opts.seed;
    const std::string cfg_path = (dir / "scenario.json").string();
    save_scenario_config(cfg_path, cfg);
    return cfg_path;
}

} // namespace dhn
