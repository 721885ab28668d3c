#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rgio {

/// Directed arc between 1-based node indices.
struct Arc {
  int tail = 0;
  int head = 0;
};

/// Ordered origin-destination pair, origin != destination, 1-based.
struct OdPair {
  int origin = 0;
  int destination = 0;
};

/// Directed network with contiguous 0-based arc ids and 1-based node ids.
/// Immutable after construction; safe to share across concurrent solves.
///
/// Construction enforces: indices in [1, node_count], no self-loops, and
/// weak connectivity (every OD pair must admit a feasible unit flow).
class Network {
 public:
  Network() : Network(1, {}) {}  // trivial single-node placeholder
  Network(int node_count, std::vector<Arc> arcs, std::string name = "");

  int node_count() const { return node_count_; }
  int arc_count() const { return static_cast<int>(arcs_.size()); }
  const std::vector<Arc>& arcs() const { return arcs_; }
  const Arc& arc(int arc_id) const { return arcs_[arc_id]; }
  const std::string& name() const { return name_; }

  /// Arc ids leaving / entering `node` (ascending arc id order).
  const std::vector<int>& out_arcs(int node) const { return out_arcs_[node - 1]; }
  const std::vector<int>& in_arcs(int node) const { return in_arcs_[node - 1]; }

 private:
  int node_count_ = 0;
  std::vector<Arc> arcs_;
  std::string name_;
  std::vector<std::vector<int>> out_arcs_;
  std::vector<std::vector<int>> in_arcs_;
};

/// side x side lattice with two opposite directed arcs per undirected edge.
///
/// Nodes are numbered row-major starting at 1. Arcs are emitted in two
/// sweeps: first every eastward edge in row-major order, then every
/// southward edge, forward arc before backward arc. side >= 2.
Network build_grid(int side);

/// Loads either the native JSON format or a whitespace-separated arc list
/// (TNTP subset: lines starting with '~' or '<' are skipped, the first two
/// fields of each record are init_node and term_node, remaining columns are
/// ignored). Dispatch is by extension, ".json" vs anything else.
Network load_network_file(const std::string& path);

void save_network_json(const Network& net, const std::string& path);

/// Node-arc incidence: D(v,a) = -1 if arc a leaves v, +1 if it enters v.
/// Every column has exactly one -1 and one +1.
Eigen::MatrixXi incidence_matrix(const Network& net);

/// All m(m-1) ordered pairs, origin-major then destination-minor.
std::vector<OdPair> enumerate_od_pairs(const Network& net);

/// Net-supply vector f with f[origin-1] = -1, f[destination-1] = +1.
Eigen::VectorXd demand_vector(const Network& net, const OdPair& od);

}  // namespace rgio
