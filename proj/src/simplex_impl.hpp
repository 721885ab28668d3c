#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rgio/lp.hpp"

namespace rgio::lp_detail {

struct SparseColumn {
  std::vector<int> index;
  std::vector<double> value;
};

/// Sparse LU of a basis matrix with row partial pivoting; columns are
/// factored in nnz-ascending order. Solves map between row space and basis
/// slot space (see ftran/btran).
struct BasisLu {
  int m = 0;
  // Column-wise factors in pivot-position space. L is unit diagonal with
  // raw row indices; U holds already-pivoted positions plus a diagonal.
  std::vector<int> l_start, l_index;
  std::vector<double> l_value;
  std::vector<int> u_start, u_index;
  std::vector<double> u_value, u_diag;
  std::vector<int> row_to_pos, pos_to_row, col_to_pos, pos_to_col;

  void clear(int rows);
  int factor(int rows, const std::function<void(int, SparseColumn&)>& gather);
  // Greedy variant for crash bases: candidates are factored in order,
  // dependent ones skipped, until `rows` pivots are placed. Returns the
  // accepted candidate indices in pivot-position order.
  std::vector<int> factor_greedy(int rows, int candidate_count,
                                 const std::function<void(int, SparseColumn&)>& gather);
  void ftran(std::vector<double>& x, std::vector<double>& scratch) const;
  void btran(std::vector<double>& y, std::vector<double>& scratch) const;
};

class Simplex {
 public:
  Simplex(const LinearProgram& lp, const LpOptions& options);

  LpResult solve();
  LpResult resolve_with_objective(const Eigen::VectorXd& objective);

 private:
  enum class VarState : unsigned char { NonbasicLower, NonbasicUpper, NonbasicFree, Basic };
  enum class Phase { One, Two };
  enum class IterationOutcome { Continue, Refactorized, Optimal, Unbounded, Singular };

  struct Eta {
    int slot = 0;
    double pivot = 0.0;
    std::vector<int> index;
    std::vector<double> value;
  };

  LpResult solve_once();
  void crash_basis();
  bool crash_basis_from_hints();
  void perturb_bounds();
  void restore_bounds();
  bool refactorize();
  void compute_basic_values();
  void compute_duals_and_reduced_costs(Phase phase);
  void gather_basis_column(int slot, SparseColumn& out) const;
  void apply_etas_ftran(std::vector<double>& x) const;
  void apply_etas_btran(std::vector<double>& y) const;
  void ftran_column(int j, std::vector<double>& w);
  double effective_cost(int j, Phase phase) const;
  bool eligible(int j, double tol) const;
  double violation(int j) const;
  int price(double tol);
  IterationOutcome iterate(Phase phase);
  LpStatus run_phase(Phase phase);
  LpStatus polish_phase_two();
  double phase_one_infeasibility() const;
  double rhs_norm() const;
  double nonbasic_start_value(int j) const;
  LpResult finish(LpStatus status, const std::string& note);

  LpOptions opts_;
  int rows_ = 0;
  int structural_ = 0;
  int total_ = 0;
  long max_iterations_ = 0;
  long iterations_ = 0;
  long refactor_interval_ = 100;
  bool bland_mode_ = false;
  double pricing_tol_ = 1e-9;
  int degenerate_streak_ = 0;
  bool solved_once_ = false;
  LpStatus last_status_ = LpStatus::NumericalFailure;

  // Constraint matrix (CSC + CSR mirrors); artificial columns appended.
  std::vector<int> col_start_, col_row_;
  std::vector<double> col_val_;
  std::vector<int> row_start_, row_col_;
  std::vector<double> row_val_;
  std::vector<double> rhs_;
  std::vector<double> art_sign_;

  std::vector<double> cost_, lower_, upper_;
  std::vector<VarState> state_;
  std::vector<double> value_;
  std::vector<double> dual_edge_;  // reduced costs, maintained incrementally
  std::vector<int> basis_;         // slot -> variable
  std::vector<int> basic_slot_;    // variable -> slot or -1
  std::vector<double> duals_;

  BasisLu lu_;
  std::vector<Eta> etas_;
  long eta_nnz_ = 0;

  std::vector<int> sibling_;        // opposite split column sharing a row
  std::vector<int> row_singleton_;  // one singleton column per row, or -1
  std::vector<int> basis_hint_;
  std::vector<double> orig_lower_, orig_upper_;
  bool perturbed_ = false;
  bool force_tiny_pivot_ = false;
  int ban_rounds_ = 0;
  std::vector<double> work_, scratch_, scratch2_;
  std::vector<double> alpha_sparse_;
  std::vector<int> alpha_touched_;
  std::vector<char> banned_;
  long banned_count_ = 0;
  std::vector<double> devex_weight_;
  double devex_max_ = 1.0;
  long stat_degenerate_ = 0;
  long stat_flips_ = 0;
};

}  // namespace rgio::lp_detail
