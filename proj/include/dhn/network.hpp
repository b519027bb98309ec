#ifndef DHN_NETWORK_HPP
#define DHN_NETWORK_HPP

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "dhn/errors.hpp"

namespace dhn {

struct FluidProperties {
    double density_kg_m3 = 971.0;
    double specific_heat_j_per_kgk = 4179.0;
};

/// The four edge classes of a district heating graph. Feed pipes carry hot
/// water outward, return pipes carry cooled water back, user edges are the
/// heat exchangers (with a control valve), and bypass edges short-circuit a
/// user junction so its line can stay warm at zero demand.
enum class EdgeKind { Feed, Return, Bypass, User };

const char* to_string(EdgeKind k);
EdgeKind edge_kind_from_string(const std::string& s);

struct PipeAttributes {
    double length_m = 0.0;
    double diameter_m = 0.0;
    double friction_factor = 0.0;          // Darcy friction factor, dimensionless
    double heat_transfer_w_per_m2k = 0.0;  // wall heat transfer coefficient

    double cross_section_m2() const;
    double volume_m3() const;
    double surface_area_m2() const;
};

/// Darcy-Weisbach loss coefficient zeta [Pa s^2/kg^2] so that
/// dP = zeta * mdot^2 for a full pipe of the given geometry.
double loss_coefficient(const PipeAttributes& attr, const FluidProperties& fluid);

struct Edge {
    std::string name;
    int tail = -1;
    int head = -1;
    EdgeKind kind = EdgeKind::Feed;
    PipeAttributes pipe;
    std::string building;   // building id, user edges only
    double zeta = 0.0;      // nominal loss coefficient (valve setpoint for user edges)
};

/// Immutable directed graph of a district heating network. The plant is the
/// (root, terminal) node pair; flow directions are fixed by edge orientation.
/// Derived incidence/adjacency matrices and index structures are computed
/// once at construction; instances are safe to share across threads.
class NetworkGraph {
public:
    NetworkGraph(std::vector<std::string> node_names,
                 std::vector<Edge> edges,
                 int root,
                 int terminal,
                 FluidProperties fluid);

    static NetworkGraph from_json_text(const std::string& text);
    static NetworkGraph from_spec_file(const std::string& path);
    std::string to_json_text() const;
    void write_spec_file(const std::string& path) const;

    int node_count() const { return static_cast<int>(node_names_.size()); }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    int root() const { return root_; }
    int terminal() const { return terminal_; }
    const FluidProperties& fluid() const { return fluid_; }
    const std::string& node_name(int v) const { return node_names_[v]; }
    std::optional<int> find_node(const std::string& name) const;
    std::optional<int> find_edge(const std::string& name) const;
    const Edge& edge(int e) const { return edges_[e]; }
    const std::vector<Edge>& edges() const { return edges_; }

    /// Signed incidence matrix, +1 at the tail and -1 at the head of each edge.
    const Eigen::MatrixXd& incidence() const { return incidence_; }
    /// Directed adjacency: entry (i,j) accumulates 1/(rho V) over edges i->j.
    const Eigen::MatrixXd& adjacency() const { return adjacency_; }

    std::vector<int> edges_of_kind(EdgeKind k) const;
    const std::vector<int>& user_edges() const { return user_edges_; }
    const std::vector<int>& in_edges(int v) const { return in_edges_[v]; }
    const std::vector<int>& out_edges(int v) const { return out_edges_[v]; }

    /// Index of the bypass edge parallel to the given user edge.
    int bypass_of_user(int user_edge) const;

    /// Nominal per-edge loss coefficients (user entries are valve setpoints).
    Eigen::VectorXd nominal_zeta() const;

private:
    void validate() const;

    std::vector<std::string> node_names_;
    std::unordered_map<std::string, int> node_index_;
    std::unordered_map<std::string, int> edge_index_;
    std::vector<Edge> edges_;
    int root_ = -1;
    int terminal_ = -1;
    FluidProperties fluid_;
    Eigen::MatrixXd incidence_;
    Eigen::MatrixXd adjacency_;
    std::vector<std::vector<int>> in_edges_;
    std::vector<std::vector<int>> out_edges_;
    std::vector<int> user_edges_;
    std::unordered_map<int, int> bypass_of_user_;
};

} // namespace dhn

#endif
