#include "rgio/lp.hpp"

#include <cmath>
#include <fstream>

#include "rgio/errors.hpp"
#include "simplex_impl.hpp"

namespace rgio {

void LinearProgram::validate() const {
  const int n = num_vars();
  if (lower.size() != n || upper.size() != n)
    throw Error("LP bounds must match the variable count");
  if (constraints.cols() != n)
    throw Error("LP constraint matrix has wrong column count");
  if (constraints.rows() != num_rows())
    throw Error("LP constraint matrix has wrong row count");
  if (!names.empty() && static_cast<int>(names.size()) != n)
    throw Error("LP names, when present, must cover every variable");
  for (int j = 0; j < n; ++j) {
    if (std::isnan(lower(j)) || std::isnan(upper(j)) || lower(j) > upper(j))
      throw Error("LP bounds must satisfy lower <= upper (variable " +
                  std::to_string(j) + ")");
  }
}

std::string to_string(LpStatus status) {
  switch (status) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterationLimit: return "iteration-limit";
    case LpStatus::NumericalFailure: return "numerical-failure";
  }
  return "unknown";
}

LpResult solve_lp(const LinearProgram& lp, const LpOptions& options) {
  lp_detail::Simplex solver(lp, options);
  return solver.solve();
}

int LpBuilder::add_variable(double lower, double upper, double objective,
                            std::string name) {
  if (std::isnan(lower) || std::isnan(upper) || lower > upper)
    throw Error("variable bounds must satisfy lower <= upper");
  objective_.push_back(objective);
  lower_.push_back(lower);
  upper_.push_back(upper);
  names_.push_back(std::move(name));
  return static_cast<int>(objective_.size()) - 1;
}

int LpBuilder::add_row(double rhs) {
  rhs_.push_back(rhs);
  return static_cast<int>(rhs_.size()) - 1;
}

void LpBuilder::add_entry(int row, int column, double value) {
  if (row < 0 || row >= row_count() || column < 0 || column >= variable_count())
    throw Error("LP entry outside the current row/column range");
  if (value != 0.0) entries_.emplace_back(row, column, value);
}

int LpBuilder::add_equality(const std::vector<LinearTerm>& terms, double rhs) {
  const int row = add_row(rhs);
  for (const LinearTerm& t : terms) add_entry(row, t.column, t.coefficient);
  return row;
}

void LpBuilder::add_objective_term(int column, double delta) {
  if (column < 0 || column >= variable_count())
    throw Error("objective term references unknown variable");
  objective_[column] += delta;
}

void LpBuilder::add_basis_hint(int column) { basis_hint_.push_back(column); }

LinearProgram LpBuilder::build() const {
  LinearProgram lp;
  const int n = variable_count();
  lp.objective = Eigen::Map<const Eigen::VectorXd>(objective_.data(), n);
  lp.lower = Eigen::Map<const Eigen::VectorXd>(lower_.data(), n);
  lp.upper = Eigen::Map<const Eigen::VectorXd>(upper_.data(), n);
  lp.rhs = Eigen::Map<const Eigen::VectorXd>(rhs_.data(), row_count());
  lp.constraints.resize(row_count(), n);
  lp.constraints.setFromTriplets(entries_.begin(), entries_.end());
  bool any_name = false;
  for (const auto& s : names_)
    if (!s.empty()) any_name = true;
  if (any_name) lp.names = names_;
  lp.basis_hint = basis_hint_;
  lp.validate();
  return lp;
}

L1SplitGroup linearize_l1_group(LpBuilder& builder,
                                const std::vector<AffineExpression>& expressions) {
  L1SplitGroup group;
  for (const AffineExpression& expr : expressions) {
    const int plus = builder.add_variable(0.0, kInfinity, 1.0);
    const int minus = builder.add_variable(0.0, kInfinity, 1.0);
    // expr = e+ - e-  becomes  expr.terms - e+ + e- = -expr.constant.
    const int row = builder.add_row(-expr.constant);
    for (const LinearTerm& t : expr.terms) builder.add_entry(row, t.column, t.coefficient);
    builder.add_entry(row, plus, -1.0);
    builder.add_entry(row, minus, 1.0);
    group.plus_variables.push_back(plus);
    group.minus_variables.push_back(minus);
    group.rows.push_back(row);
  }
  return group;
}

void write_lp_file(const LinearProgram& lp, const std::string& path) {
  lp.validate();
  std::ofstream out(path);
  if (!out) throw Error("cannot write LP file: " + path);
  out.precision(17);
  auto var_name = [&](int j) {
    return !lp.names.empty() && !lp.names[j].empty() ? lp.names[j]
                                                     : "x" + std::to_string(j);
  };
  out << "\\ exported linear program\nMinimize\n obj:";
  bool first = true;
  for (int j = 0; j < lp.num_vars(); ++j) {
    const double c = lp.objective(j);
    if (c == 0.0) continue;
    out << (c < 0.0 ? " - " : (first ? " " : " + ")) << std::abs(c) << " " << var_name(j);
    first = false;
  }
  if (first) out << " 0 " << var_name(0);
  out << "\nSubject To\n";
  // Row-wise traversal of the column-major matrix.
  std::vector<std::vector<std::pair<int, double>>> rows(lp.num_rows());
  for (int j = 0; j < lp.num_vars(); ++j)
    for (Eigen::SparseMatrix<double>::InnerIterator it(lp.constraints, j); it; ++it)
      rows[it.row()].emplace_back(j, it.value());
  for (int r = 0; r < lp.num_rows(); ++r) {
    out << " c" << r << ":";
    bool lead = true;
    for (const auto& [j, v] : rows[r]) {
      out << (v < 0.0 ? " - " : (lead ? " " : " + ")) << std::abs(v) << " " << var_name(j);
      lead = false;
    }
    if (lead) out << " 0 " << var_name(0);
    out << " = " << lp.rhs(r) << "\n";
  }
  out << "Bounds\n";
  for (int j = 0; j < lp.num_vars(); ++j) {
    const double lo = lp.lower(j), hi = lp.upper(j);
    if (!std::isfinite(lo) && !std::isfinite(hi))
      out << " " << var_name(j) << " free\n";
    else if (!std::isfinite(hi))
      out << " " << var_name(j) << " >= " << lo << "\n";
    else if (!std::isfinite(lo))
      out << " " << var_name(j) << " <= " << hi << "\n";
    else
      out << " " << lo << " <= " << var_name(j) << " <= " << hi << "\n";
  }
  out << "End\n";
}

LpResolver::LpResolver(const LinearProgram& lp, const LpOptions& options)
    : impl_(std::make_unique<lp_detail::Simplex>(lp, options)) {}

LpResolver::~LpResolver() = default;
LpResolver::LpResolver(LpResolver&&) noexcept = default;
LpResolver& LpResolver::operator=(LpResolver&&) noexcept = default;

const LpResult& LpResolver::solve() {
  result_ = impl_->solve();
  return result_;
}

const LpResult& LpResolver::resolve(const Eigen::VectorXd& new_objective) {
  result_ = impl_->resolve_with_objective(new_objective);
  return result_;
}

}  // namespace rgio
