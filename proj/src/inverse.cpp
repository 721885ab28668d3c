#include "rgio/inverse.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rgio/errors.hpp"

namespace rgio {

namespace {
constexpr double kObservationTol = 1e-6;
}

void ObservationSet::validate() const {
  const int n = network.arc_count();
  const int m = network.node_count();
  if (players < 1) throw Error("observation set needs at least one player");
  if (capacity.size() != n) throw Error("observation capacity length mismatch");
  if (od_pairs.empty()) throw Error("observation set is empty");
  if (flows.size() != od_pairs.size())
    throw Error("observation flows must cover every od pair");
  for (size_t k = 0; k < od_pairs.size(); ++k) {
    if (static_cast<int>(flows[k].size()) != players)
      throw Error("observation " + std::to_string(k) + " does not cover all players");
    const Eigen::VectorXd f = demand_vector(network, od_pairs[k]);
    Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < players; ++i) {
      const Eigen::VectorXd& x = flows[k][i];
      if (x.size() != n) throw Error("observation flow vector has wrong length");
      if (x.minCoeff() < -kObservationTol)
        throw Error("observation " + std::to_string(k) + " has negative flow");
      if (x.lpNorm<Eigen::Infinity>() <= kObservationTol)
        throw Error("observation " + std::to_string(k) + " has an all-zero player flow");
      Eigen::VectorXd net_flow = Eigen::VectorXd::Zero(m);
      for (int a = 0; a < n; ++a) {
        const Arc& arc = network.arc(a);
        net_flow(arc.tail - 1) -= x(a);
        net_flow(arc.head - 1) += x(a);
      }
      if ((net_flow - f).lpNorm<Eigen::Infinity>() > kObservationTol)
        throw Error("observation " + std::to_string(k) + " violates conservation");
      total += x;
    }
    if (((total - capacity).array() > kObservationTol).any())
      throw Error("observation " + std::to_string(k) + " violates the joint capacity");
  }
}

void save_observation_set(const ObservationSet& obs, const std::string& csv_path,
                          const std::string& sidecar_json_path) {
  obs.validate();
  std::ofstream csv(csv_path);
  if (!csv) throw Error("cannot write: " + csv_path);
  csv.precision(17);
  csv << "od_index,player,arc,flow\n";
  for (int k = 0; k < obs.observation_count(); ++k)
    for (int i = 0; i < obs.players; ++i)
      for (int a = 0; a < obs.network.arc_count(); ++a)
        csv << k << "," << i << "," << a << "," << obs.flows[k][i](a) << "\n";

  nlohmann::json doc;
  doc["players"] = obs.players;
  doc["capacity"] = std::vector<double>(obs.capacity.begin(), obs.capacity.end());
  doc["network"] = {{"nodes", obs.network.node_count()}, {"name", obs.network.name()}};
  doc["network"]["arcs"] = nlohmann::json::array();
  for (const Arc& a : obs.network.arcs())
    doc["network"]["arcs"].push_back({{"tail", a.tail}, {"head", a.head}});
  doc["od_pairs"] = nlohmann::json::array();
  for (const OdPair& od : obs.od_pairs)
    doc["od_pairs"].push_back({{"origin", od.origin}, {"destination", od.destination}});
  std::ofstream side(sidecar_json_path);
  if (!side) throw Error("cannot write: " + sidecar_json_path);
  side << doc.dump(2) << "\n";
}

ObservationSet load_observation_set(const std::string& csv_path,
                                    const std::string& sidecar_json_path) {
  std::ifstream side(sidecar_json_path);
  if (!side) throw Error("cannot open: " + sidecar_json_path);
  nlohmann::json doc;
  side >> doc;
  ObservationSet obs;
  obs.players = doc.at("players").get<int>();
  const auto cap = doc.at("capacity").get<std::vector<double>>();
  obs.capacity = Eigen::Map<const Eigen::VectorXd>(cap.data(), cap.size());
  std::vector<Arc> arcs;
  for (const auto& e : doc.at("network").at("arcs"))
    arcs.push_back({e.at("tail").get<int>(), e.at("head").get<int>()});
  obs.network = Network(doc.at("network").at("nodes").get<int>(), std::move(arcs),
                        doc.at("network").value("name", std::string{}));
  for (const auto& e : doc.at("od_pairs"))
    obs.od_pairs.push_back({e.at("origin").get<int>(), e.at("destination").get<int>()});
  obs.flows.assign(obs.od_pairs.size(),
                   std::vector<Eigen::VectorXd>(
                       obs.players, Eigen::VectorXd::Zero(obs.network.arc_count())));

  std::ifstream csv(csv_path);
  if (!csv) throw Error("cannot open: " + csv_path);
  std::string line;
  std::getline(csv, line);  // header
  int line_no = 1;
  while (std::getline(csv, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    int k, i, a;
    double flow;
    if (!(fields >> k >> i >> a >> flow))
      throw Error(csv_path + ":" + std::to_string(line_no) + ": bad record");
    obs.flows.at(k).at(i)(a) = flow;
  }
  obs.validate();
  return obs;
}

ParameterBounds ParameterBounds::uniform(int arcs, double l1, double u1, double l2,
                                         double u2) {
  ParameterBounds b;
  b.c_int_lower = Eigen::VectorXd::Constant(arcs, l1);
  b.c_int_upper = Eigen::VectorXd::Constant(arcs, u1);
  b.c_base_lower = Eigen::VectorXd::Constant(arcs, l2);
  b.c_base_upper = Eigen::VectorXd::Constant(arcs, u2);
  b.validate(arcs);
  return b;
}

void ParameterBounds::validate(int arcs) const {
  for (const auto* v : {&c_int_lower, &c_int_upper, &c_base_lower, &c_base_upper})
    if (v->size() != arcs) throw Error("parameter bounds length mismatch");
  if ((c_int_lower.array() <= 0).any() || (c_base_lower.array() <= 0).any())
    throw Error("parameter lower bounds must be strictly positive");
  if ((c_int_lower.array() > c_int_upper.array()).any() ||
      (c_base_lower.array() > c_base_upper.array()).any())
    throw Error("parameter bounds must satisfy lower <= upper");
}

// --- layout ------------------------------------------------------------

int ResidualProgramLayout::c_int_var(int i, int a) const {
  const int row = mode == CostMode::SharedAcrossPlayers ? 0 : i;
  return row * arcs + a;
}

int ResidualProgramLayout::c_base_var(int i, int a) const {
  const int row = mode == CostMode::SharedAcrossPlayers ? 0 : i;
  return cost_players() * arcs + row * arcs + a;
}

int ResidualProgramLayout::v_var(int k, int i, int node) const {
  const int dual_base = 2 * cost_players() * arcs;
  const int per_k = players * nodes + players * arcs + arcs;
  return dual_base + k * per_k + i * nodes + node;
}

int ResidualProgramLayout::u_var(int k, int i, int a) const {
  const int dual_base = 2 * cost_players() * arcs;
  const int per_k = players * nodes + players * arcs + arcs;
  return dual_base + k * per_k + players * nodes + i * arcs + a;
}

int ResidualProgramLayout::ubar_var(int k, int a) const {
  const int dual_base = 2 * cost_players() * arcs;
  const int per_k = players * nodes + players * arcs + arcs;
  return dual_base + k * per_k + players * nodes + players * arcs + a;
}

int ResidualProgramLayout::split_base() const {
  const int per_k = players * nodes + players * arcs + arcs;
  return 2 * cost_players() * arcs + observations * per_k;
}

int ResidualProgramLayout::stationarity_plus(int k, int i, int a) const {
  const int per_k = 2 * players * arcs + 2 * players + 2;
  return split_base() + k * per_k + i * 2 * arcs + 2 * a;
}

int ResidualProgramLayout::stationarity_minus(int k, int i, int a) const {
  return stationarity_plus(k, i, a) + 1;
}

int ResidualProgramLayout::comp1_plus(int k, int i) const {
  const int per_k = 2 * players * arcs + 2 * players + 2;
  return split_base() + k * per_k + 2 * players * arcs + 2 * i;
}

int ResidualProgramLayout::comp1_minus(int k, int i) const {
  return comp1_plus(k, i) + 1;
}

int ResidualProgramLayout::comp2_plus(int k) const {
  const int per_k = 2 * players * arcs + 2 * players + 2;
  return split_base() + k * per_k + 2 * players * arcs + 2 * players;
}

int ResidualProgramLayout::comp2_minus(int k) const { return comp2_plus(k) + 1; }

int ResidualProgramLayout::stationarity_row(int k, int i, int a) const {
  const int per_k = players * arcs + players + 1;
  return k * per_k + i * arcs + a;
}

int ResidualProgramLayout::comp1_row(int k, int i) const {
  const int per_k = players * arcs + players + 1;
  return k * per_k + players * arcs + i;
}

int ResidualProgramLayout::comp2_row(int k) const {
  const int per_k = players * arcs + players + 1;
  return k * per_k + players * arcs + players;
}

int ResidualProgramLayout::total_variables() const {
  return split_base() + observations * (2 * players * arcs + 2 * players + 2);
}

int ResidualProgramLayout::total_rows() const {
  return observations * (players * arcs + players + 1);
}

// --- compilation ---------------------------------------------------------

ResidualProgram build_residual_program(const ObservationSet& obs,
                                       const ParameterBounds& bounds, CostMode mode) {
  obs.validate();
  bounds.validate(obs.network.arc_count());

  const int n = obs.network.arc_count();
  const int m = obs.network.node_count();
  const int players = obs.players;
  const int observations = obs.observation_count();

  ResidualProgramLayout layout;
  layout.mode = mode;
  layout.players = players;
  layout.arcs = n;
  layout.nodes = m;
  layout.observations = observations;

  LpBuilder builder;
  // Cost variables, bounded by the prior intervals.
  for (int i = 0; i < layout.cost_players(); ++i)
    for (int a = 0; a < n; ++a)
      builder.add_variable(bounds.c_int_lower(a), bounds.c_int_upper(a));
  for (int i = 0; i < layout.cost_players(); ++i)
    for (int a = 0; a < n; ++a)
      builder.add_variable(bounds.c_base_lower(a), bounds.c_base_upper(a));
  // Dual estimates per observation: v free, u and the shared ubar nonneg.
  for (int k = 0; k < observations; ++k) {
    for (int i = 0; i < players; ++i)
      for (int p = 0; p < m; ++p) builder.add_variable(-kInfinity, kInfinity);
    for (int i = 0; i < players; ++i)
      for (int a = 0; a < n; ++a) builder.add_variable(0.0, kInfinity);
    for (int a = 0; a < n; ++a) builder.add_variable(0.0, kInfinity);
  }

  // Residual rows compiled through the split-variable linearization, one
  // group per norm term so the split/variable layout stays predictable.
  for (int k = 0; k < observations; ++k) {
    Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < players; ++i) total += obs.flows[k][i];
    for (int i = 0; i < players; ++i) {
      std::vector<AffineExpression> group;
      group.reserve(n);
      for (int a = 0; a < n; ++a) {
        AffineExpression expr;
        const Arc& arc = obs.network.arc(a);
        expr.terms.push_back({layout.c_int_var(i, a), obs.flows[k][i](a) + total(a)});
        expr.terms.push_back({layout.c_base_var(i, a), 1.0});
        expr.terms.push_back({layout.v_var(k, i, arc.head - 1), 1.0});
        expr.terms.push_back({layout.v_var(k, i, arc.tail - 1), -1.0});
        expr.terms.push_back({layout.u_var(k, i, a), -1.0});
        expr.terms.push_back({layout.ubar_var(k, a), 1.0});
        group.push_back(std::move(expr));
      }
      linearize_l1_group(builder, group);
    }
    for (int i = 0; i < players; ++i) {
      AffineExpression comp1;
      for (int a = 0; a < n; ++a) {
        const double x = obs.flows[k][i](a);
        if (x != 0.0) comp1.terms.push_back({layout.u_var(k, i, a), x});
      }
      linearize_l1_group(builder, {comp1});
    }
    AffineExpression comp2;
    for (int a = 0; a < n; ++a) {
      const double slack = obs.capacity(a) - total(a);
      if (slack != 0.0) comp2.terms.push_back({layout.ubar_var(k, a), slack});
    }
    linearize_l1_group(builder, {comp2});
  }

  // Basis hints describing the expected optimal vertex: bound duals on the
  // zero-flow arcs, node potentials spanning each player's used subgraph
  // (one node per connected component left out, mirroring the dual
  // pinning), and capacity duals on tight arcs.
  for (int k = 0; k < observations; ++k) {
    Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < players; ++i) total += obs.flows[k][i];
    for (int i = 0; i < players; ++i) {
      // Union-find over the nodes touched by this player's positive arcs.
      std::vector<int> parent(m);
      for (int p = 0; p < m; ++p) parent[p] = p;
      std::function<int(int)> find = [&](int p) {
        while (parent[p] != p) p = parent[p] = parent[parent[p]];
        return p;
      };
      std::vector<char> touched(m, 0);
      for (int a = 0; a < n; ++a) {
        if (obs.flows[k][i](a) <= 1e-9) {
          builder.add_basis_hint(layout.u_var(k, i, a));
          continue;
        }
        const int tail = obs.network.arc(a).tail - 1;
        const int head = obs.network.arc(a).head - 1;
        touched[tail] = touched[head] = 1;
        parent[find(tail)] = find(head);
      }
      std::vector<int> component_max(m, -1);
      for (int p = 0; p < m; ++p)
        if (touched[p]) {
          const int root = find(p);
          component_max[root] = std::max(component_max[root], p);
        }
      for (int p = 0; p < m; ++p)
        if (touched[p] && component_max[find(p)] != p)
          builder.add_basis_hint(layout.v_var(k, i, p));
    }
    for (int a = 0; a < n; ++a)
      if (obs.capacity(a) - total(a) <= 1e-6)
        builder.add_basis_hint(layout.ubar_var(k, a));
  }

  ResidualProgram program;
  program.lp = builder.build();
  program.layout = layout;
  if (program.lp.num_vars() != layout.total_variables())
    throw Error("residual program layout is inconsistent with the builder");
  if (program.lp.num_rows() != layout.total_rows())
    throw Error("residual program row layout is inconsistent with the builder");
  return program;
}

RecoveredParameters recover_parameters(const ObservationSet& obs,
                                       const ParameterBounds& bounds, CostMode mode) {
  const ResidualProgram program = build_residual_program(obs, bounds, mode);
  const LpResult res = solve_lp(program.lp);

  RecoveredParameters out;
  out.status = res.status;
  out.lp_iterations = res.iterations;
  if (res.status != LpStatus::Optimal) return out;

  const ResidualProgramLayout& layout = program.layout;
  const int n = layout.arcs;
  std::vector<Eigen::VectorXd> c_int(obs.players), c_base(obs.players);
  for (int i = 0; i < obs.players; ++i) {
    c_int[i].resize(n);
    c_base[i].resize(n);
    for (int a = 0; a < n; ++a) {
      c_int[i](a) = res.z(layout.c_int_var(i, a));
      c_base[i](a) = res.z(layout.c_base_var(i, a));
    }
  }
  out.params.mode = mode;
  out.params.c_int = std::move(c_int);
  out.params.c_base = std::move(c_base);
  out.params.validate();

  out.duals_v.resize(layout.observations);
  out.duals_u.resize(layout.observations);
  out.duals_capacity.resize(layout.observations);
  for (int k = 0; k < layout.observations; ++k) {
    out.duals_v[k].resize(obs.players);
    out.duals_u[k].resize(obs.players);
    for (int i = 0; i < obs.players; ++i) {
      out.duals_v[k][i].resize(layout.nodes);
      for (int p = 0; p < layout.nodes; ++p)
        out.duals_v[k][i](p) = res.z(layout.v_var(k, i, p));
      out.duals_u[k][i].resize(n);
      for (int a = 0; a < n; ++a) out.duals_u[k][i](a) = res.z(layout.u_var(k, i, a));
    }
    out.duals_capacity[k].resize(n);
    for (int a = 0; a < n; ++a) out.duals_capacity[k](a) = res.z(layout.ubar_var(k, a));
  }
  out.io_objective = res.objective_value;
  out.objective_nonnegative = out.io_objective >= -1e-9;
  return out;
}

long long predicted_variable_count(long long nodes, long long players, long long arcs,
                                   CostMode mode, GraphKind kind) {
  if (nodes < 2 || players < 1) throw Error("predicted_variable_count needs m >= 2, N >= 1");
  const long long m = nodes;
  const long long big_n = players;
  if (kind == GraphKind::Grid) {
    long long side = static_cast<long long>(std::llround(std::sqrt(static_cast<double>(m))));
    while (side * side > m) --side;
    while ((side + 1) * (side + 1) <= m) ++side;
    if (side * side != m)
      throw Error("grid variable count needs a perfect-square node count");
    const long long m2 = m * m, m3 = m * m2;
    const long long m52 = side * m2;  // m^(5/2)
    const long long m32 = side * m;   // m^(3/2)
    if (mode == CostMode::SharedAcrossPlayers)
      return 13 * big_n * m3 - 12 * big_n * m52 - 13 * big_n * m2 + 12 * big_n * m32 +
             16 * m3 - 16 * m52 - 16 * m2 + 16 * m32;
    return 21 * big_n * m3 - 20 * big_n * m52 - 21 * big_n * m2 + 20 * big_n * m32 +
           8 * m3 - 8 * m52 - 8 * m2 + 8 * m32;
  }
  if (arcs < 1) throw Error("general variable count needs the arc count");
  const long long a = arcs;
  const long long m2 = m * m, m3 = m * m2;
  if (mode == CostMode::SharedAcrossPlayers)
    return 3 * a * big_n * m2 - 3 * a * big_n * m + m3 * big_n - m2 * big_n + 4 * a * m2 -
           4 * a * m;
  return 5 * a * big_n * m2 - 5 * a * big_n * m + m3 * big_n - m2 * big_n + 2 * a * m2 -
         2 * a * m;
}

VariableCountBreakdown actual_variable_count(const ResidualProgram& program) {
  const ResidualProgramLayout& l = program.layout;
  VariableCountBreakdown b;
  b.c_int = static_cast<long long>(l.cost_players()) * l.arcs;
  b.c_base = b.c_int;
  b.v = static_cast<long long>(l.observations) * l.players * l.nodes;
  b.u = static_cast<long long>(l.observations) * l.players * l.arcs;
  b.ubar = static_cast<long long>(l.observations) * l.arcs;
  b.l1_split =
      static_cast<long long>(l.observations) * (2LL * l.players * l.arcs + 2 * l.players + 2);
  if (b.total() != program.lp.num_vars())
    throw Error("variable count breakdown does not match the compiled program");
  return b;
}

}  // namespace rgio
