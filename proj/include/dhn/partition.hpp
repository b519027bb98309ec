#ifndef DHN_PARTITION_HPP
#define DHN_PARTITION_HPP

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dhn/network.hpp"

namespace dhn {

/// Symmetric nonnegative adjacency of the undirected view of the network;
/// the weight of a node pair accumulates 1/(rho V) over connecting pipes,
/// the thermal coupling coefficient of the pipe between them.
Eigen::MatrixXd undirected_weighted_adjacency(const NetworkGraph& g);

/// Symmetric normalized Laplacian I - D^{-1/2} W D^{-1/2}. Throws
/// IsolatedNode when some weighted degree is zero.
Eigen::MatrixXd normalized_laplacian(const Eigen::MatrixXd& w);

/// The `count` smallest eigenpairs of a symmetric normalized Laplacian,
/// ascending. Dense solve below 64 nodes, shift-and-invert inverse iteration
/// with deflation of the known kernel vector above.
struct EigenPairs {
    Eigen::VectorXd values;
    Eigen::MatrixXd vectors; // column per pair
};
EigenPairs smallest_eigenpairs(const Eigen::MatrixXd& laplacian, int count);

/// Normalized-cut objective of a bipartition (symmetric in its arguments).
double ncut_value(const Eigen::MatrixXd& w, const std::vector<int>& side_a,
                  const std::vector<int>& side_b);

/// Spectral bipartition: threshold sweep along the Fiedler ordering (which
/// contains the plain sign split) plus deterministic local refinement.
/// Side A is the side containing node 0; both sides are nonempty and sorted.
std::pair<std::vector<int>, std::vector<int>> fiedler_bipartition(const Eigen::MatrixXd& w);

struct Subsystem {
    NetworkGraph graph;
    std::vector<int> edge_map;   // subsystem edge -> full edge index
    std::vector<int> node_map;   // subsystem node -> full node index
    bool pass_through = false;
    int local_root_full = -1;    // full-graph ids of the boundary nodes
    int local_term_full = -1;
    std::vector<int> user_edges_full;
};

struct Partition {
    std::vector<Subsystem> subsystems;    // user-bearing first, then pass-through
    std::vector<int> assignment;          // full edge -> subsystem index
    std::vector<int> cut_edges;           // edges whose endpoints were split apart
    int user_subsystem_count = 0;
};

/// Recursive normalized-cut partition into `n_g` user-bearing subsystems.
/// User+bypass junction pairs are contracted before the spectral step so both
/// always land in one subsystem; edges serving users of several groups become
/// pass-through connector subsystems (flagged, no users). Every subsystem is
/// a valid NetworkGraph with its own root/terminal and closed hydraulics.
Partition recursive_partition(const NetworkGraph& g, int n_g);

struct ReducedEdge {
    int tail = -1;           // indices into ReducedGraph::node_full_ids
    int head = -1;
    int subsystem = -1;
    bool pass_through = false;
    double zeta_eq = 0.0;    // series loss coefficient, pass-through only
};

struct ReducedGraph {
    std::vector<int> node_full_ids;      // reduced node -> full node index
    std::vector<std::string> node_names;
    std::vector<ReducedEdge> edges;      // index order matches partition subsystems
    Eigen::MatrixXd incidence;
    int root = -1;
    int terminal = -1;
};

ReducedGraph reduce_graph(const NetworkGraph& g, const Partition& p);

/// JSON export of the edge assignment and the reduced topology, for
/// inspection and for pinning partitions in regression tests.
std::string partition_to_json_text(const NetworkGraph& g, const Partition& p,
                                   const ReducedGraph& r);
void write_partition_file(const std::string& path, const NetworkGraph& g, const Partition& p,
                          const ReducedGraph& r);

} // namespace dhn

#endif
