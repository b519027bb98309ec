#include "dhn/network.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace dhn {

using nlohmann::json;

const char* to_string(EdgeKind k) {
    switch (k) {
    case EdgeKind::Feed: return "feed";
    case EdgeKind::Return: return "return";
    case EdgeKind::Bypass: return "bypass";
    case EdgeKind::User: return "user";
    }
    return "?";
}

EdgeKind edge_kind_from_string(const std::string& s) {
    if (s == "feed") return EdgeKind::Feed;
    if (s == "return") return EdgeKind::Return;
    if (s == "bypass") return EdgeKind::Bypass;
    if (s == "user") return EdgeKind::User;
    throw SpecError("unknown edge kind '" + s + "'");
}

double PipeAttributes::cross_section_m2() const {
    const double r = diameter_m / 2.0;
    return std::numbers::pi * r * r;
}

double PipeAttributes::volume_m3() const {
    return cross_section_m2() * length_m;
}

double PipeAttributes::surface_area_m2() const {
    return std::numbers::pi * diameter_m * length_m;
}

double loss_coefficient(const PipeAttributes& attr, const FluidProperties& fluid) {
    if (attr.length_m <= 0.0 || attr.diameter_m <= 0.0)
        throw SpecError("pipe geometry must be positive");
    if (attr.friction_factor <= 0.0)
        throw SpecError("friction factor must be positive");
    const double ac = attr.cross_section_m2();
    return attr.friction_factor * attr.length_m /
           (attr.diameter_m * 2.0 * fluid.density_kg_m3 * ac * ac);
}

NetworkGraph::NetworkGraph(std::vector<std::string> node_names,
                           std::vector<Edge> edges,
                           int root,
                           int terminal,
                           FluidProperties fluid)
    : node_names_(std::move(node_names)),
      edges_(std::move(edges)),
      root_(root),
      terminal_(terminal),
      fluid_(fluid) {
    const int nv = node_count();
    const int ne = edge_count();
    for (int v = 0; v < nv; ++v) {
        if (node_index_.count(node_names_[v]))
            throw SpecError("duplicate node name '" + node_names_[v] + "'");
        node_index_[node_names_[v]] = v;
    }
    in_edges_.resize(nv);
    out_edges_.resize(nv);
    incidence_ = Eigen::MatrixXd::Zero(nv, ne);
    adjacency_ = Eigen::MatrixXd::Zero(nv, nv);
    for (int e = 0; e < ne; ++e) {
        Edge& ed = edges_[e];
        if (ed.tail < 0 || ed.tail >= nv || ed.head < 0 || ed.head >= nv)
            throw DanglingReference("edge '" + ed.name + "' references unknown node");
        if (ed.name.empty()) ed.name = "e" + std::to_string(e);
        if (edge_index_.count(ed.name))
            throw SpecError("duplicate edge name '" + ed.name + "'");
        edge_index_[ed.name] = e;
        if (ed.zeta <= 0.0) ed.zeta = loss_coefficient(ed.pipe, fluid_);
        incidence_(ed.tail, e) = 1.0;
        incidence_(ed.head, e) = -1.0;
        const double w = 1.0 / (fluid_.density_kg_m3 * ed.pipe.volume_m3());
        adjacency_(ed.tail, ed.head) += w;
        out_edges_[ed.tail].push_back(e);
        in_edges_[ed.head].push_back(e);
        if (ed.kind == EdgeKind::User) user_edges_.push_back(e);
    }
    for (int u : user_edges_) {
        int partner = -1;
        for (int e : out_edges_[edges_[u].tail]) {
            if (edges_[e].kind == EdgeKind::Bypass && edges_[e].head == edges_[u].head) {
                partner = e;
                break;
            }
        }
        if (partner < 0)
            throw SpecError("user edge '" + edges_[u].name + "' has no parallel bypass");
        bypass_of_user_[u] = partner;
    }
    validate();
}

void NetworkGraph::validate() const {
    const int nv = node_count();
    if (root_ < 0 || root_ >= nv || terminal_ < 0 || terminal_ >= nv)
        throw SpecError("root/terminal not among declared nodes");
    if (!in_edges_[root_].empty())
        throw RootTerminalViolation("root node has nonzero indegree");
    if (!out_edges_[terminal_].empty())
        throw RootTerminalViolation("terminal node has nonzero outdegree");
    // Connectivity with root and terminal identified.
    std::vector<int> comp(nv, -1);
    std::vector<int> stack{root_};
    comp[root_] = 0;
    comp[terminal_] = 0;
    auto push = [&](int v) {
        if (comp[v] < 0) {
            comp[v] = 0;
            stack.push_back(v);
        }
    };
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        for (int e : out_edges_[v]) push(edges_[e].head);
        for (int e : in_edges_[v]) push(edges_[e].tail);
        if (v == root_) push(terminal_);
        if (v == terminal_) push(root_);
    }
    for (int v = 0; v < nv; ++v)
        if (comp[v] < 0)
            throw DisconnectedGraph("node '" + node_names_[v] + "' unreachable from plant");
}

std::optional<int> NetworkGraph::find_node(const std::string& name) const {
    auto it = node_index_.find(name);
    if (it == node_index_.end()) return std::nullopt;
    return it->second;
}

std::optional<int> NetworkGraph::find_edge(const std::string& name) const {
    auto it = edge_index_.find(name);
    if (it == edge_index_.end()) return std::nullopt;
    return it->second;
}

std::vector<int> NetworkGraph::edges_of_kind(EdgeKind k) const {
    std::vector<int> out;
    for (int e = 0; e < edge_count(); ++e)
        if (edges_[e].kind == k) out.push_back(e);
    return out;
}

int NetworkGraph::bypass_of_user(int user_edge) const {
    auto it = bypass_of_user_.find(user_edge);
    if (it == bypass_of_user_.end())
        throw SpecError("edge is not a user edge");
    return it->second;
}

Eigen::VectorXd NetworkGraph::nominal_zeta() const {
    Eigen::VectorXd z(edge_count());
    for (int e = 0; e < edge_count(); ++e) z(e) = edges_[e].zeta;
    return z;
}

namespace {

json edge_to_json(const NetworkGraph& g, const Edge& ed) {
    json j;
    j["name"] = ed.name;
    j["tail"] = g.node_name(ed.tail);
    j["head"] = g.node_name(ed.head);
    j["kind"] = to_string(ed.kind);
    j["length_m"] = ed.pipe.length_m;
    j["diameter_m"] = ed.pipe.diameter_m;
    j["friction_factor"] = ed.pipe.friction_factor;
    j["heat_transfer_w_per_m2k"] = ed.pipe.heat_transfer_w_per_m2k;
    if (!ed.building.empty()) j["building"] = ed.building;
    return j;
}

} // namespace

NetworkGraph NetworkGraph::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw SpecError(std::string("network spec parse error: ") + e.what());
    }
    if (!j.contains("format") || j["format"].get<int>() != 1)
        throw SpecError("network spec: missing or unsupported 'format' (expected 1)");
    FluidProperties fluid;
    if (j.contains("fluid")) {
        fluid.density_kg_m3 = j["fluid"].value("density_kg_m3", 971.0);
        fluid.specific_heat_j_per_kgk = j["fluid"].value("specific_heat_j_per_kgk", 4179.0);
    }
    std::vector<std::string> nodes = j.at("nodes").get<std::vector<std::string>>();
    std::unordered_map<std::string, int> index;
    for (size_t i = 0; i < nodes.size(); ++i) index[nodes[i]] = static_cast<int>(i);
    auto node_of = [&](const std::string& n, const std::string& edge_name) {
        auto it = index.find(n);
        if (it == index.end())
            throw DanglingReference("edge '" + edge_name + "' references unknown node '" + n + "'");
        return it->second;
    };
    std::vector<Edge> edges;
    for (const auto& je : j.at("edges")) {
        Edge ed;
        ed.name = je.value("name", "");
        ed.tail = node_of(je.at("tail").get<std::string>(), ed.name);
        ed.head = node_of(je.at("head").get<std::string>(), ed.name);
        ed.kind = edge_kind_from_string(je.at("kind").get<std::string>());
        ed.pipe.length_m = je.at("length_m").get<double>();
        ed.pipe.diameter_m = je.at("diameter_m").get<double>();
        ed.pipe.friction_factor = je.at("friction_factor").get<double>();
        ed.pipe.heat_transfer_w_per_m2k = je.at("heat_transfer_w_per_m2k").get<double>();
        ed.building = je.value("building", "");
        edges.push_back(std::move(ed));
    }
    const std::string root_name = j.at("root").get<std::string>();
    const std::string term_name = j.at("terminal").get<std::string>();
    auto want = [&](const std::string& n) {
        auto it = index.find(n);
        if (it == index.end())
            throw DanglingReference("root/terminal references unknown node '" + n + "'");
        return it->second;
    };
    return NetworkGraph(std::move(nodes), std::move(edges), want(root_name), want(term_name), fluid);
}

NetworkGraph NetworkGraph::from_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SpecError("cannot open network spec '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::string NetworkGraph::to_json_text() const {
    json j;
    j["format"] = 1;
    j["fluid"] = {{"density_kg_m3", fluid_.density_kg_m3},
                  {"specific_heat_j_per_kgk", fluid_.specific_heat_j_per_kgk}};
    j["root"] = node_names_[root_];
    j["terminal"] = node_names_[terminal_];
    j["nodes"] = node_names_;
    json edges = json::array();
    for (const auto& ed : edges_) edges.push_back(edge_to_json(*this, ed));
    j["edges"] = edges;
    return j.dump(2) + "\n";
}

void NetworkGraph::write_spec_file(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw SpecError("cannot write network spec '" + path + "'");
    out << to_json_text();
}

} // namespace dhn
