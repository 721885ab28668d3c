#include "rgio/network.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rgio/errors.hpp"

namespace rgio {

namespace {

void check_weakly_connected(int node_count, const std::vector<Arc>& arcs,
                            const std::string& name) {
  if (node_count <= 1) return;
  std::vector<std::vector<int>> adj(node_count);
  for (const Arc& a : arcs) {
    adj[a.tail - 1].push_back(a.head - 1);
    adj[a.head - 1].push_back(a.tail - 1);
  }
  std::vector<char> seen(node_count, 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  int reached = 1;
  while (!stack.empty()) {
    int v = stack.back();
    stack.pop_back();
    for (int w : adj[v]) {
      if (!seen[w]) {
        seen[w] = 1;
        ++reached;
        stack.push_back(w);
      }
    }
  }
  if (reached != node_count)
    throw Error("network '" + name + "' is not weakly connected (" +
                std::to_string(reached) + " of " + std::to_string(node_count) +
                " nodes reachable)");
}

}  // namespace

Network::Network(int node_count, std::vector<Arc> arcs, std::string name)
    : node_count_(node_count), arcs_(std::move(arcs)), name_(std::move(name)) {
  if (node_count_ < 1) throw Error("network needs at least one node");
  for (size_t a = 0; a < arcs_.size(); ++a) {
    const Arc& arc = arcs_[a];
    if (arc.tail < 1 || arc.tail > node_count_ || arc.head < 1 ||
        arc.head > node_count_)
      throw Error("arc " + std::to_string(a) + " references node outside [1, " +
                  std::to_string(node_count_) + "]");
    if (arc.tail == arc.head)
      throw Error("arc " + std::to_string(a) + " is a self-loop at node " +
                  std::to_string(arc.tail));
  }
  check_weakly_connected(node_count_, arcs_, name_);
  out_arcs_.resize(node_count_);
  in_arcs_.resize(node_count_);
  for (size_t a = 0; a < arcs_.size(); ++a) {
    out_arcs_[arcs_[a].tail - 1].push_back(static_cast<int>(a));
    in_arcs_[arcs_[a].head - 1].push_back(static_cast<int>(a));
  }
}

Network build_grid(int side) {
  if (side < 2) throw Error("grid side must be >= 2, got " + std::to_string(side));
  const auto node = [side](int row, int col) { return row * side + col + 1; };
  std::vector<Arc> arcs;
  arcs.reserve(static_cast<size_t>(4 * side * (side - 1)));
  // Eastward sweep, then southward sweep; forward arc before backward arc.
  for (int r = 0; r < side; ++r)
    for (int c = 0; c + 1 < side; ++c) {
      arcs.push_back({node(r, c), node(r, c + 1)});
      arcs.push_back({node(r, c + 1), node(r, c)});
    }
  for (int r = 0; r + 1 < side; ++r)
    for (int c = 0; c < side; ++c) {
      arcs.push_back({node(r, c), node(r + 1, c)});
      arcs.push_back({node(r + 1, c), node(r, c)});
    }
  return Network(side * side, std::move(arcs),
                 "grid" + std::to_string(side) + "x" + std::to_string(side));
}

namespace {

Network load_network_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open network file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("JSON parse error in " + path + ": " + e.what());
  }
  if (!doc.contains("nodes") || !doc.contains("arcs"))
    throw Error(path + ": expected JSON object with \"nodes\" and \"arcs\"");
  int m = doc.at("nodes").get<int>();
  std::vector<Arc> arcs;
  for (const auto& entry : doc.at("arcs"))
    arcs.push_back({entry.at("tail").get<int>(), entry.at("head").get<int>()});
  return Network(m, std::move(arcs), path);
}

bool is_skippable_tntp_line(const std::string& line) {
  for (char ch : line) {
    if (ch == ' ' || ch == '\t' || ch == '\r') continue;
    return ch == '~' || ch == '<';
  }
  return true;  // blank
}

Network load_network_tntp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open network file: " + path);
  std::vector<Arc> arcs;
  int max_node = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_skippable_tntp_line(line)) continue;
    std::istringstream fields(line);
    int tail = 0, head = 0;
    if (!(fields >> tail >> head))
      throw Error(path + ":" + std::to_string(line_no) +
                  ": expected record starting with init_node term_node");
    arcs.push_back({tail, head});
    max_node = std::max({max_node, tail, head});
  }
  if (arcs.empty()) throw Error(path + ": no arc records found");
  return Network(max_node, std::move(arcs), path);
}

}  // namespace

Network load_network_file(const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
    return load_network_json(path);
  return load_network_tntp(path);
}

void save_network_json(const Network& net, const std::string& path) {
  nlohmann::json doc;
  doc["nodes"] = net.node_count();
  doc["arcs"] = nlohmann::json::array();
  for (const Arc& a : net.arcs()) doc["arcs"].push_back({{"tail", a.tail}, {"head", a.head}});
  std::ofstream out(path);
  if (!out) throw Error("cannot write network file: " + path);
  out << doc.dump(2) << "\n";
}

Eigen::MatrixXi incidence_matrix(const Network& net) {
  Eigen::MatrixXi d = Eigen::MatrixXi::Zero(net.node_count(), net.arc_count());
  for (int a = 0; a < net.arc_count(); ++a) {
    d(net.arc(a).tail - 1, a) = -1;
    d(net.arc(a).head - 1, a) = 1;
  }
  return d;
}

std::vector<OdPair> enumerate_od_pairs(const Network& net) {
  std::vector<OdPair> pairs;
  const int m = net.node_count();
  pairs.reserve(static_cast<size_t>(m) * (m - 1));
  for (int o = 1; o <= m; ++o)
    for (int d = 1; d <= m; ++d)
      if (o != d) pairs.push_back({o, d});
  return pairs;
}

Eigen::VectorXd demand_vector(const Network& net, const OdPair& od) {
  const int m = net.node_count();
  if (od.origin < 1 || od.origin > m || od.destination < 1 || od.destination > m)
    throw Error("OD pair references node outside [1, " + std::to_string(m) + "]");
  if (od.origin == od.destination) throw Error("OD pair must have origin != destination");
  Eigen::VectorXd f = Eigen::VectorXd::Zero(m);
  f(od.origin - 1) = -1.0;
  f(od.destination - 1) = 1.0;
  return f;
}

}  // namespace rgio
