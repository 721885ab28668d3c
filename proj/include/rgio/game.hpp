#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rgio/network.hpp"

namespace rgio {

enum class CostMode { SharedAcrossPlayers, PerPlayer };

std::string to_string(CostMode mode);
CostMode cost_mode_from_string(const std::string& text);

/// Per-player interaction-cost diagonals diag(C_i) and base costs c_bar_i.
/// All entries are strictly positive; in shared mode every player's vectors
/// are identical (stored duplicated so the two modes share one layout).
struct CostParameterization {
  CostMode mode = CostMode::SharedAcrossPlayers;
  std::vector<Eigen::VectorXd> c_int;
  std::vector<Eigen::VectorXd> c_base;

  int players() const { return static_cast<int>(c_int.size()); }
  int arc_count() const { return c_int.empty() ? 0 : static_cast<int>(c_int[0].size()); }

  /// Throws on nonpositive entries, ragged sizes, or shared-mode rows that
  /// are not identical.
  void validate() const;

  static CostParameterization shared(Eigen::VectorXd interaction,
                                     Eigen::VectorXd base, int players);
  static CostParameterization per_player(std::vector<Eigen::VectorXd> interaction,
                                         std::vector<Eigen::VectorXd> base);
};

void save_cost_parameterization(const CostParameterization& params, const std::string& path);
CostParameterization load_cost_parameterization(const std::string& path);

/// One routing game: every player ships one unit between od.origin and
/// od.destination subject to the joint per-arc capacity alpha.
/// Feasibility of alpha is *not* assumed; infeasible instances are reported
/// by the solvers, never silently accepted.
struct GameInstance {
  Network network;
  int players = 1;
  Eigen::VectorXd capacity;
  OdPair od;

  void validate() const;
};

/// Primal flows and duals of the complementarity system, plus the scored
/// worst-case residual. flows[i], duals_u[i] have length n; duals_v[i]
/// length m; dual_capacity length n.
struct EquilibriumSolution {
  std::vector<Eigen::VectorXd> flows;
  std::vector<Eigen::VectorXd> duals_v;
  std::vector<Eigen::VectorXd> duals_u;
  Eigen::VectorXd dual_capacity;
  double kkt_residual = 0.0;
};

/// Infinity norms of the individual KKT blocks. Feasibility violations and
/// complementarity products are reported separately.
struct KktResidualReport {
  double stationarity_inf_norm = 0.0;
  double complementarity_nonneg_inf_norm = 0.0;    // max_i |x_i . u_i|
  double complementarity_capacity_inf_norm = 0.0;  // |(alpha - sum x) . ubar|
  double primal_equality_inf_norm = 0.0;           // max_i ||D x_i - f_i||_inf
  double primal_bound_violation = 0.0;             // worst negative part of x,u,ubar,slack

  double max() const;
};

/// Stacked gradient map of the players' objectives:
/// block i = C_i (2 x_i + sum_{j != i} x_j) + c_bar_i.
Eigen::VectorXd eval_F(const CostParameterization& params,
                       const Eigen::VectorXd& stacked_flows, int players);

/// Block matrix M with M(i,i) = 2 C_i and M(i,j) = C_i, so that
/// eval_F(x) = M x + stack(c_bar).
Eigen::MatrixXd interaction_matrix(const CostParameterization& params, int players);

/// Exact potential for the shared-cost game:
/// P(x) = sum_i x_i' C x_i + 1/2 sum_{i != j} x_i' C x_j + c_bar' sum_i x_i.
/// Its gradient equals eval_F. Rejects PerPlayer mode.
double potential_value(const CostParameterization& params,
                       const Eigen::VectorXd& stacked_flows, int players);

KktResidualReport kkt_residuals(const GameInstance& instance,
                                const CostParameterization& params,
                                const EquilibriumSolution& candidate);

}  // namespace rgio
