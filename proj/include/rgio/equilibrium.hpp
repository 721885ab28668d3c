#pragma once

#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "rgio/game.hpp"
#include "rgio/network.hpp"

namespace rgio {

enum class StartPoint { Zeros, UniformShortestHopSplit, MyopicShortestPath };

struct SolverSettings {
  double tolerance = 1e-8;
  int max_iterations = 500;
  std::vector<StartPoint> start_points = {StartPoint::Zeros,
                                          StartPoint::UniformShortestHopSplit,
                                          StartPoint::MyopicShortestPath};
  double line_search_shrink = 0.5;
  double armijo_constant = 1e-4;
  bool run_all_starts = false;  // solve from every start and record agreement
  std::ostream* trace = nullptr;

  void validate() const;
};

enum class SolveStatus { Converged, DidNotConverge, Infeasible };

std::string to_string(SolveStatus status);

struct SolveInfo {
  SolveStatus status = SolveStatus::DidNotConverge;
  int start_used = -1;  // index into settings.start_points
  int newton_iterations = 0;
  double best_residual = 0.0;
  // PerPlayer mode: smallest eigenvalue of the symmetric part of the
  // interaction matrix, and whether uniqueness is therefore expected.
  double min_eig_symmetric = 0.0;
  bool uniqueness_expected = true;
  // Populated when run_all_starts is set: worst pairwise flow difference
  // across converged starts.
  double start_agreement_inf_norm = 0.0;
  int converged_starts = 0;
};

struct EquilibriumResult {
  EquilibriumSolution solution;
  SolveInfo info;
};

/// Semismooth Newton on the Fischer-Burmeister reformulation of the
/// complementarity system, conservation rows kept as equations, one
/// conservation row per player replaced by pinning that player's potential
/// at the highest-index node. DidNotConverge returns the best iterate,
/// flagged, rather than aborting.
EquilibriumResult solve_equilibrium(const GameInstance& instance,
                                    const CostParameterization& params,
                                    const SolverSettings& settings = {});

struct FeasibilityReport {
  bool feasible = false;
  double infeasibility = 0.0;       // worst equality violation at the LP point
  Eigen::VectorXd certificate;      // equality duals (Farkas direction when infeasible)
};

/// Phase-one check of {D x_i = f_i, x_i >= 0, sum_i x_i <= alpha}.
FeasibilityReport feasibility_check(const GameInstance& instance);

struct OracleResult {
  Eigen::VectorXd stacked_flows;
  double potential = 0.0;
  double linearization_gap = 0.0;
  bool converged = false;
  bool polished = false;
  int iterations = 0;
};

/// Shared-cost oracle: minimizes the exact potential over the joint flow
/// polytope by away-step conditional gradient (every subproblem is an LP
/// over the polytope), then polishes the active set to machine precision
/// when the resulting point verifies as a KKT point. Rejects PerPlayer mode.
OracleResult solve_potential_oracle(const GameInstance& instance,
                                    const CostParameterization& params,
                                    double gap_tolerance = 1e-9);

}  // namespace rgio
