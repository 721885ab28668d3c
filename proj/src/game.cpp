#include "rgio/game.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "rgio/errors.hpp"

namespace rgio {

std::string to_string(CostMode mode) {
  return mode == CostMode::SharedAcrossPlayers ? "shared" : "per-player";
}

CostMode cost_mode_from_string(const std::string& text) {
  if (text == "shared") return CostMode::SharedAcrossPlayers;
  if (text == "per-player" || text == "per_player") return CostMode::PerPlayer;
  throw Error("unknown cost mode: " + text);
}

void CostParameterization::validate() const {
  if (c_int.empty() || c_int.size() != c_base.size())
    throw Error("cost parameterization needs matching c_int/c_base per player");
  const int n = static_cast<int>(c_int[0].size());
  for (size_t i = 0; i < c_int.size(); ++i) {
    if (c_int[i].size() != n || c_base[i].size() != n)
      throw Error("cost vectors must all have the same arc count");
    if ((c_int[i].array() <= 0.0).any() || (c_base[i].array() <= 0.0).any())
      throw Error("cost entries must be strictly positive");
  }
  if (mode == CostMode::SharedAcrossPlayers) {
    for (size_t i = 1; i < c_int.size(); ++i)
      if (c_int[i] != c_int[0] || c_base[i] != c_base[0])
        throw Error("shared mode requires identical cost vectors across players");
  }
}

CostParameterization CostParameterization::shared(Eigen::VectorXd interaction,
                                                  Eigen::VectorXd base,
                                                  int players) {
  CostParameterization p;
  p.mode = CostMode::SharedAcrossPlayers;
  p.c_int.assign(players, interaction);
  p.c_base.assign(players, base);
  p.validate();
  return p;
}

CostParameterization CostParameterization::per_player(
    std::vector<Eigen::VectorXd> interaction, std::vector<Eigen::VectorXd> base) {
  CostParameterization p;
  p.mode = CostMode::PerPlayer;
  p.c_int = std::move(interaction);
  p.c_base = std::move(base);
  p.validate();
  return p;
}

void save_cost_parameterization(const CostParameterization& params,
                                const std::string& path) {
  params.validate();
  nlohmann::json doc;
  doc["mode"] = to_string(params.mode);
  auto rows = [](const std::vector<Eigen::VectorXd>& vs) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& v : vs) out.push_back(std::vector<double>(v.begin(), v.end()));
    return out;
  };
  doc["c_int"] = rows(params.c_int);
  doc["c_base"] = rows(params.c_base);
  std::ofstream out(path);
  if (!out) throw Error("cannot write cost file: " + path);
  out << doc.dump(2) << "\n";
}

CostParameterization load_cost_parameterization(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open cost file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw Error("JSON parse error in " + path + ": " + e.what());
  }
  CostParameterization p;
  p.mode = cost_mode_from_string(doc.at("mode").get<std::string>());
  auto rows = [](const nlohmann::json& arr) {
    std::vector<Eigen::VectorXd> out;
    for (const auto& row : arr) {
      Eigen::VectorXd v(row.size());
      for (size_t j = 0; j < row.size(); ++j) v(j) = row[j].get<double>();
      out.push_back(std::move(v));
    }
    return out;
  };
  p.c_int = rows(doc.at("c_int"));
  p.c_base = rows(doc.at("c_base"));
  p.validate();
  return p;
}

void GameInstance::validate() const {
  if (players < 1) throw Error("game needs at least one player");
  if (capacity.size() != network.arc_count())
    throw Error("capacity vector length must equal arc count");
  if ((capacity.array() <= 0.0).any())
    throw Error("capacity must be strictly positive elementwise");
  demand_vector(network, od);  // validates the OD pair
}

double KktResidualReport::max() const {
  return std::max({stationarity_inf_norm, complementarity_nonneg_inf_norm,
                   complementarity_capacity_inf_norm, primal_equality_inf_norm,
                   primal_bound_violation});
}

Eigen::VectorXd eval_F(const CostParameterization& params,
                       const Eigen::VectorXd& stacked_flows, int players) {
  const int n = params.arc_count();
  if (params.players() != players)
    throw Error("cost parameterization does not cover all players");
  if (stacked_flows.size() != static_cast<Eigen::Index>(n) * players)
    throw Error("stacked flow vector has wrong dimension");
  Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < players; ++i) total += stacked_flows.segment(i * n, n);
  Eigen::VectorXd out(static_cast<Eigen::Index>(n) * players);
  for (int i = 0; i < players; ++i) {
    const auto xi = stacked_flows.segment(i * n, n);
    out.segment(i * n, n) =
        params.c_int[i].cwiseProduct(xi + total) + params.c_base[i];
  }
  return out;
}

Eigen::MatrixXd interaction_matrix(const CostParameterization& params, int players) {
  const int n = params.arc_count();
  if (params.players() != players)
    throw Error("cost parameterization does not cover all players");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n) * players,
                                            static_cast<Eigen::Index>(n) * players);
  for (int i = 0; i < players; ++i)
    for (int j = 0; j < players; ++j) {
      const double scale = (i == j) ? 2.0 : 1.0;
      m.block(i * n, j * n, n, n).diagonal() = scale * params.c_int[i];
    }
  return m;
}

double potential_value(const CostParameterization& params,
                       const Eigen::VectorXd& stacked_flows, int players) {
  if (params.mode != CostMode::SharedAcrossPlayers)
    throw Error("potential_value is defined only for shared cost mode");
  const int n = params.arc_count();
  if (stacked_flows.size() != static_cast<Eigen::Index>(n) * players)
    throw Error("stacked flow vector has wrong dimension");
  const Eigen::VectorXd& c = params.c_int[0];
  const Eigen::VectorXd& base = params.c_base[0];
  Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
  double own = 0.0;
  for (int i = 0; i < players; ++i) {
    const auto xi = stacked_flows.segment(i * n, n);
    own += xi.dot(c.cwiseProduct(xi));
    total += xi;
  }
  const double cross = total.dot(c.cwiseProduct(total)) - own;
  return own + 0.5 * cross + base.dot(total);
}

KktResidualReport kkt_residuals(const GameInstance& instance,
                                const CostParameterization& params,
                                const EquilibriumSolution& candidate) {
  const int n = instance.network.arc_count();
  const int m = instance.network.node_count();
  const int players = instance.players;
  if (static_cast<int>(candidate.flows.size()) != players ||
      static_cast<int>(candidate.duals_v.size()) != players ||
      static_cast<int>(candidate.duals_u.size()) != players ||
      candidate.dual_capacity.size() != n)
    throw Error("candidate solution dimensions do not match the instance");

  Eigen::VectorXd stacked(static_cast<Eigen::Index>(n) * players);
  for (int i = 0; i < players; ++i) {
    if (candidate.flows[i].size() != n || candidate.duals_u[i].size() != n ||
        candidate.duals_v[i].size() != m)
      throw Error("candidate solution dimensions do not match the instance");
    stacked.segment(i * n, n) = candidate.flows[i];
  }
  const Eigen::VectorXd f_map = eval_F(params, stacked, players);
  const Eigen::VectorXd f = demand_vector(instance.network, instance.od);

  KktResidualReport report;
  Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < players; ++i) total += candidate.flows[i];
  const Eigen::VectorXd slack = instance.capacity - total;

  for (int i = 0; i < players; ++i) {
    // Stationarity block: F_i + D'v_i - u_i + ubar.
    Eigen::VectorXd stat = f_map.segment(i * n, n) - candidate.duals_u[i] +
                           candidate.dual_capacity;
    for (int a = 0; a < n; ++a) {
      const Arc& arc = instance.network.arc(a);
      stat(a) += candidate.duals_v[i](arc.head - 1) - candidate.duals_v[i](arc.tail - 1);
    }
    report.stationarity_inf_norm =
        std::max(report.stationarity_inf_norm, stat.lpNorm<Eigen::Infinity>());

    report.complementarity_nonneg_inf_norm =
        std::max(report.complementarity_nonneg_inf_norm,
                 std::abs(candidate.flows[i].dot(candidate.duals_u[i])));

    // Conservation: D x_i - f_i.
    Eigen::VectorXd net_flow = Eigen::VectorXd::Zero(m);
    for (int a = 0; a < n; ++a) {
      const Arc& arc = instance.network.arc(a);
      net_flow(arc.tail - 1) -= candidate.flows[i](a);
      net_flow(arc.head - 1) += candidate.flows[i](a);
    }
    report.primal_equality_inf_norm = std::max(
        report.primal_equality_inf_norm, (net_flow - f).lpNorm<Eigen::Infinity>());

    report.primal_bound_violation =
        std::max({report.primal_bound_violation,
                  -candidate.flows[i].minCoeff(), -candidate.duals_u[i].minCoeff()});
  }

  report.complementarity_capacity_inf_norm =
      std::abs(slack.dot(candidate.dual_capacity));
  report.primal_bound_violation =
      std::max({report.primal_bound_violation, -candidate.dual_capacity.minCoeff(),
                -slack.minCoeff(), 0.0});
  return report;
}

}  // namespace rgio
