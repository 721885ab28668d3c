#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rgio/game.hpp"
#include "rgio/lp.hpp"
#include "rgio/network.hpp"

namespace rgio {

/// Equilibrium flows per OD pair and player, the data fed to the residual
/// program. Observations must be primal-feasible: conservation within 1e-6,
/// aggregate capacity within 1e-6, flows nonnegative, and no player with an
/// all-zero flow vector.
struct ObservationSet {
  Network network;
  int players = 0;
  Eigen::VectorXd capacity;
  std::vector<OdPair> od_pairs;
  std::vector<std::vector<Eigen::VectorXd>> flows;  // [k][i], length n

  int observation_count() const { return static_cast<int>(od_pairs.size()); }
  void validate() const;
};

void save_observation_set(const ObservationSet& obs, const std::string& csv_path,
                          const std::string& sidecar_json_path);
ObservationSet load_observation_set(const std::string& csv_path,
                                    const std::string& sidecar_json_path);

struct ParameterBounds {
  Eigen::VectorXd c_int_lower, c_int_upper;    // L1 <= diag(C_i) <= U1
  Eigen::VectorXd c_base_lower, c_base_upper;  // L2 <= c_bar_i <= U2

  static ParameterBounds uniform(int arcs, double l1, double u1, double l2, double u2);
  void validate(int arcs) const;
};

/// Deterministic index map of the compiled residual program. Variable
/// order: cost diagonals, base costs, then per observation k the duals
/// (v per player, u per player, one shared ubar), then the L1 split pairs
/// in row order (stationarity per player, complementarity #1 per player,
/// complementarity #2 once per k).
struct ResidualProgramLayout {
  CostMode mode = CostMode::SharedAcrossPlayers;
  int players = 0, arcs = 0, nodes = 0, observations = 0;

  int cost_players() const { return mode == CostMode::SharedAcrossPlayers ? 1 : players; }
  int c_int_var(int i, int a) const;
  int c_base_var(int i, int a) const;
  int v_var(int k, int i, int node) const;
  int u_var(int k, int i, int a) const;
  int ubar_var(int k, int a) const;
  int split_base() const;
  int stationarity_plus(int k, int i, int a) const;
  int stationarity_minus(int k, int i, int a) const;
  int comp1_plus(int k, int i) const;
  int comp1_minus(int k, int i) const;
  int comp2_plus(int k) const;
  int comp2_minus(int k) const;
  int stationarity_row(int k, int i, int a) const;
  int comp1_row(int k, int i) const;
  int comp2_row(int k) const;
  int total_variables() const;
  int total_rows() const;
};

struct ResidualProgram {
  LinearProgram lp;
  ResidualProgramLayout layout;
};

/// Compiles the L1 residual model over the observations: stationarity,
/// complementarity of the nonnegativity bounds, and complementarity of the
/// joint capacity constraint, with exactly one shared capacity dual per
/// observation and the cost bounds applied per player (or once, in shared
/// mode).
ResidualProgram build_residual_program(const ObservationSet& obs,
                                       const ParameterBounds& bounds, CostMode mode);

struct RecoveredParameters {
  CostParameterization params;
  double io_objective = 0.0;
  std::vector<std::vector<Eigen::VectorXd>> duals_v;  // [k][i]
  std::vector<std::vector<Eigen::VectorXd>> duals_u;  // [k][i]
  std::vector<Eigen::VectorXd> duals_capacity;        // [k]
  LpStatus status = LpStatus::NumericalFailure;
  long lp_iterations = 0;
  // An exact optimum of the residual program is nonnegative by
  // construction; anything below -1e-9 is flagged here.
  bool objective_nonnegative = true;
};

RecoveredParameters recover_parameters(const ObservationSet& obs,
                                       const ParameterBounds& bounds, CostMode mode);

enum class GraphKind { Grid, General };

/// Closed-form size of the compiled program as published for the reference
/// implementation; exact integer arithmetic. Grid kind requires m to be a
/// perfect square (arcs are then implied by the side length and `arcs` is
/// ignored).
long long predicted_variable_count(long long nodes, long long players, long long arcs,
                                   CostMode mode, GraphKind kind);

struct VariableCountBreakdown {
  long long c_int = 0, c_base = 0, v = 0, u = 0, ubar = 0, l1_split = 0;
  long long total() const { return c_int + c_base + v + u + ubar + l1_split; }
};

/// Per-family variable counts of a compiled program; total() equals the LP
/// dimension.
VariableCountBreakdown actual_variable_count(const ResidualProgram& program);

}  // namespace rgio
