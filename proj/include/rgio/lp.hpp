#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace rgio {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Equality-constrained linear program with variable bounds:
///   min objective' z   s.t.   constraints z = rhs,   lower <= z <= upper.
/// Bound entries may be -inf / +inf; a free variable has both infinite.
struct LinearProgram {
  Eigen::VectorXd objective;
  Eigen::SparseMatrix<double> constraints;
  Eigen::VectorXd rhs;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  std::vector<std::string> names;  // optional variable labels
  // Optional warm-start guidance: columns expected basic at the optimum.
  // The solver builds its crash basis from them greedily and falls back to
  // the plain crash when the guess is unusable, so hints can never change
  // the optimum, only the path.
  std::vector<int> basis_hint;

  int num_vars() const { return static_cast<int>(objective.size()); }
  int num_rows() const { return static_cast<int>(rhs.size()); }
  void validate() const;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit, NumericalFailure };

std::string to_string(LpStatus status);

struct LpResult {
  LpStatus status = LpStatus::NumericalFailure;
  Eigen::VectorXd z;
  double objective_value = 0.0;
  Eigen::VectorXd duals;          // one multiplier per equality row
  Eigen::VectorXd reduced_costs;  // objective - constraints' duals
  long iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double duality_gap = 0.0;  // relative strong-duality defect at Optimal
  double complementarity = 0.0;
  std::string note;
};

struct LpOptions {
  double feasibility_tol = 1e-9;
  double optimality_tol = 1e-9;
  long max_iterations = 0;  // 0: derived from problem size
  bool use_basis_hint = true;
};

/// Bounded-variable revised simplex, deterministic (fixed tie-breaking,
/// Bland anti-cycling fallback). Optimal results satisfy primal
/// feasibility, complementary slackness, and relative strong duality at
/// 1e-9; anything the cleanup loop cannot certify is returned as
/// NumericalFailure with a diagnostic note.
LpResult solve_lp(const LinearProgram& lp, const LpOptions& options = {});

/// Writes the program in fixed CPLEX-LP textual form for cross-checking
/// against external solvers.
void write_lp_file(const LinearProgram& lp, const std::string& path);

struct LinearTerm {
  int column = 0;
  double coefficient = 0.0;
};

struct AffineExpression {
  std::vector<LinearTerm> terms;
  double constant = 0.0;
};

/// Incremental construction of a LinearProgram. Variables and rows are
/// numbered in creation order; duplicate (row, column) entries accumulate.
class LpBuilder {
 public:
  int add_variable(double lower, double upper, double objective = 0.0,
                   std::string name = {});
  int add_row(double rhs);
  void add_entry(int row, int column, double value);
  int add_equality(const std::vector<LinearTerm>& terms, double rhs);
  void add_objective_term(int column, double delta);
  void add_basis_hint(int column);

  int variable_count() const { return static_cast<int>(objective_.size()); }
  int row_count() const { return static_cast<int>(rhs_.size()); }

  LinearProgram build() const;

 private:
  std::vector<double> objective_, lower_, upper_, rhs_;
  std::vector<std::string> names_;
  std::vector<Eigen::Triplet<double>> entries_;
  std::vector<int> basis_hint_;
};

/// Split variables introduced for one L1 group: expression q equals
/// plus[q] - minus[q], both nonnegative with unit objective weight, so the
/// group contributes ||expressions||_1 at any optimum.
struct L1SplitGroup {
  std::vector<int> plus_variables;
  std::vector<int> minus_variables;
  std::vector<int> rows;
};

L1SplitGroup linearize_l1_group(LpBuilder& builder,
                                const std::vector<AffineExpression>& expressions);

namespace lp_detail {
class Simplex;
}

/// Holds a factorized simplex state so a sequence of programs differing
/// only in the objective can be re-solved from the previous basis. Used by
/// the conditional-gradient oracle, where every subproblem shares one
/// feasible set.
class LpResolver {
 public:
  explicit LpResolver(const LinearProgram& lp, const LpOptions& options = {});
  ~LpResolver();
  LpResolver(LpResolver&&) noexcept;
  LpResolver& operator=(LpResolver&&) noexcept;

  const LpResult& solve();
  const LpResult& resolve(const Eigen::VectorXd& new_objective);
  const LpResult& last_result() const { return result_; }

 private:
  std::unique_ptr<lp_detail::Simplex> impl_;
  LpResult result_;
};

}  // namespace rgio
