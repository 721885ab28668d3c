// Bounded-variable revised simplex: sparse LU basis with product-form
// updates, incremental reduced costs, partial pricing with optional hint
// ordering, Bland fallback on degeneracy streaks. Single-threaded;
// deterministic for identical inputs.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <vector>

#include <cstdio>
#include <cstdlib>

#include "rgio/errors.hpp"
#include "rgio/lp.hpp"
#include "simplex_impl.hpp"

namespace rgio::lp_detail {

namespace {

constexpr double kPivotZero = 1e-11;   // treat FTRAN entries below as zero
constexpr double kPivotReject = 1e-8;  // refactor instead of pivoting on this
constexpr double kDegenerateStep = 1e-12;
constexpr int kBlandTrigger = 2000;  // degenerate pivots before Bland mode

// Splitmix64; drives the deterministic anti-degeneracy bound perturbation.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

// ---------------------------------------------------------------------------
// Sparse LU
// ---------------------------------------------------------------------------

void BasisLu::clear(int rows) {
  m = rows;
  l_start.assign(1, 0);
  l_index.clear();
  l_value.clear();
  u_start.assign(1, 0);
  u_index.clear();
  u_value.clear();
  u_diag.assign(m, 0.0);
  row_to_pos.assign(m, -1);
  pos_to_row.assign(m, -1);
  col_to_pos.assign(m, -1);
  pos_to_col.assign(m, -1);
}

// Factors the basis (columns supplied by `gather`) with row partial
// pivoting, visiting columns in nnz-ascending order. Returns the basis slot
// of a column found linearly dependent, or -1 on success.
int BasisLu::factor(int rows, const std::function<void(int, SparseColumn&)>& gather) {
  clear(rows);
  std::vector<SparseColumn> cols(m);
  std::vector<int> order(m);
  for (int k = 0; k < m; ++k) {
    gather(k, cols[k]);
    order[k] = k;
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return cols[a].index.size() < cols[b].index.size();
  });

  std::vector<double> work(m, 0.0);
  std::vector<int> touched;
  touched.reserve(64);
  std::vector<char> queued(m, 0);
  std::priority_queue<int, std::vector<int>, std::greater<int>> pending;

  for (int step = 0; step < m; ++step) {
    const int slot = order[step];
    const SparseColumn& col = cols[slot];

    // Sparse forward solve L * x = column: only positions reachable from the
    // column's pattern are eliminated, discovered in ascending order.
    touched.clear();
    for (size_t t = 0; t < col.index.size(); ++t) {
      const int r = col.index[t];
      if (work[r] == 0.0) touched.push_back(r);
      work[r] += col.value[t];
      const int pos = row_to_pos[r];
      if (pos >= 0 && !queued[pos]) {
        queued[pos] = 1;
        pending.push(pos);
      }
    }
    while (!pending.empty()) {
      const int pos = pending.top();
      pending.pop();
      queued[pos] = 0;
      const double xk = work[pos_to_row[pos]];
      if (xk == 0.0) continue;
      for (int t = l_start[pos]; t < l_start[pos + 1]; ++t) {
        const int r = l_index[t];
        if (work[r] == 0.0) touched.push_back(r);
        work[r] -= l_value[t] * xk;
        const int rpos = row_to_pos[r];
        if (rpos >= 0 && !queued[rpos]) {
          queued[rpos] = 1;
          pending.push(rpos);
        }
      }
    }

    // Pivot: largest magnitude among rows without a pivot yet (ties: lowest
    // row index, for determinism).
    int pivot_row = -1;
    double pivot_mag = 0.0;
    for (int r : touched) {
      if (row_to_pos[r] >= 0) continue;
      const double mag = std::abs(work[r]);
      if (mag > pivot_mag || (mag == pivot_mag && pivot_row >= 0 && mag > 0.0 && r < pivot_row)) {
        pivot_mag = mag;
        pivot_row = r;
      }
    }
    if (pivot_row < 0 || pivot_mag < 1e-10) {
      for (int r : touched) work[r] = 0.0;
      return slot;  // dependent column: caller repairs the basis
    }

    const double pivot = work[pivot_row];
    for (int r : touched) {
      const double val = work[r];
      work[r] = 0.0;
      if (val == 0.0 || r == pivot_row) continue;
      const int pos = row_to_pos[r];
      if (pos >= 0) {
        u_index.push_back(pos);
        u_value.push_back(val);
      } else {
        l_index.push_back(r);
        l_value.push_back(val / pivot);
      }
    }
    u_diag[step] = pivot;
    u_start.push_back(static_cast<int>(u_index.size()));
    l_start.push_back(static_cast<int>(l_index.size()));
    row_to_pos[pivot_row] = step;
    pos_to_row[step] = pivot_row;
    col_to_pos[slot] = step;
    pos_to_col[step] = slot;
  }
  return -1;
}

std::vector<int> BasisLu::factor_greedy(
    int rows, int candidate_count,
    const std::function<void(int, SparseColumn&)>& gather) {
  clear(rows);
  std::vector<int> accepted;
  accepted.reserve(rows);
  std::vector<double> work(rows, 0.0);
  std::vector<int> touched;
  touched.reserve(64);
  std::vector<char> queued(rows, 0);
  std::priority_queue<int, std::vector<int>, std::greater<int>> pending;
  SparseColumn col;

  for (int cand = 0; cand < candidate_count && static_cast<int>(accepted.size()) < rows;
       ++cand) {
    gather(cand, col);
    const int step = static_cast<int>(accepted.size());
    touched.clear();
    for (size_t t = 0; t < col.index.size(); ++t) {
      const int r = col.index[t];
      if (work[r] == 0.0) touched.push_back(r);
      work[r] += col.value[t];
      const int pos = row_to_pos[r];
      if (pos >= 0 && !queued[pos]) {
        queued[pos] = 1;
        pending.push(pos);
      }
    }
    while (!pending.empty()) {
      const int pos = pending.top();
      pending.pop();
      queued[pos] = 0;
      const double xk = work[pos_to_row[pos]];
      if (xk == 0.0) continue;
      for (int t = l_start[pos]; t < l_start[pos + 1]; ++t) {
        const int r = l_index[t];
        if (work[r] == 0.0) touched.push_back(r);
        work[r] -= l_value[t] * xk;
        const int rpos = row_to_pos[r];
        if (rpos >= 0 && !queued[rpos]) {
          queued[rpos] = 1;
          pending.push(rpos);
        }
      }
    }
    int pivot_row = -1;
    double pivot_mag = 1e-8;  // stricter than refactorization: crash quality
    for (int r : touched) {
      if (row_to_pos[r] >= 0) continue;
      const double mag = std::abs(work[r]);
      if (mag > pivot_mag || (mag == pivot_mag && pivot_row >= 0 && r < pivot_row)) {
        pivot_mag = mag;
        pivot_row = r;
      }
    }
    if (pivot_row < 0) {
      for (int r : touched) work[r] = 0.0;
      continue;  // dependent or tiny: skip this candidate
    }
    const double pivot = work[pivot_row];
    for (int r : touched) {
      const double val = work[r];
      work[r] = 0.0;
      if (val == 0.0 || r == pivot_row) continue;
      const int pos = row_to_pos[r];
      if (pos >= 0) {
        u_index.push_back(pos);
        u_value.push_back(val);
      } else {
        l_index.push_back(r);
        l_value.push_back(val / pivot);
      }
    }
    u_diag[step] = pivot;
    u_start.push_back(static_cast<int>(u_index.size()));
    l_start.push_back(static_cast<int>(l_index.size()));
    row_to_pos[pivot_row] = step;
    pos_to_row[step] = pivot_row;
    col_to_pos[step] = step;
    pos_to_col[step] = step;
    accepted.push_back(cand);
  }
  return accepted;
}

// x := B^{-1} x. Input indexed by row, output indexed by basis slot.
void BasisLu::ftran(std::vector<double>& x, std::vector<double>& scratch) const {
  for (int pos = 0; pos < m; ++pos) {
    const double xk = x[pos_to_row[pos]];
    if (xk == 0.0) continue;
    for (int t = l_start[pos]; t < l_start[pos + 1]; ++t)
      x[l_index[t]] -= l_value[t] * xk;
  }
  std::vector<double>& z = scratch;
  for (int pos = m - 1; pos >= 0; --pos) {
    double val = x[pos_to_row[pos]];
    x[pos_to_row[pos]] = 0.0;
    if (val != 0.0) {
      val /= u_diag[pos];
      for (int t = u_start[pos]; t < u_start[pos + 1]; ++t)
        x[pos_to_row[u_index[t]]] -= u_value[t] * val;
    }
    z[pos] = val;
  }
  for (int pos = 0; pos < m; ++pos) x[pos_to_col[pos]] = z[pos];
}

// y := B^{-T} y. Input indexed by basis slot, output indexed by row.
void BasisLu::btran(std::vector<double>& y, std::vector<double>& scratch) const {
  std::vector<double>& t = scratch;
  for (int pos = 0; pos < m; ++pos) t[pos] = y[pos_to_col[pos]];
  for (int pos = 0; pos < m; ++pos) {
    double val = t[pos];
    for (int k = u_start[pos]; k < u_start[pos + 1]; ++k)
      val -= u_value[k] * t[u_index[k]];
    t[pos] = val / u_diag[pos];
  }
  std::fill(y.begin(), y.end(), 0.0);
  for (int pos = m - 1; pos >= 0; --pos) {
    double val = t[pos];
    for (int k = l_start[pos]; k < l_start[pos + 1]; ++k)
      val -= l_value[k] * y[l_index[k]];
    y[pos_to_row[pos]] = val;
  }
}

// ---------------------------------------------------------------------------
// Simplex driver
// ---------------------------------------------------------------------------

Simplex::Simplex(const LinearProgram& lp, const LpOptions& options) : opts_(options) {
  lp.validate();
  rows_ = lp.num_rows();
  structural_ = lp.num_vars();
  total_ = structural_ + rows_;  // one artificial column per row appended

  cost_.assign(total_, 0.0);
  lower_.assign(total_, 0.0);
  upper_.assign(total_, 0.0);
  for (int j = 0; j < structural_; ++j) {
    cost_[j] = lp.objective(j);
    lower_[j] = lp.lower(j);
    upper_[j] = lp.upper(j);
  }

  const auto& a = lp.constraints;
  col_start_.assign(total_ + 1, 0);
  col_row_.reserve(a.nonZeros() + rows_);
  col_val_.reserve(a.nonZeros() + rows_);
  for (int j = 0; j < structural_; ++j) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(a, j); it; ++it) {
      if (it.value() == 0.0) continue;
      col_row_.push_back(static_cast<int>(it.row()));
      col_val_.push_back(it.value());
    }
    col_start_[j + 1] = static_cast<int>(col_row_.size());
  }
  art_sign_.assign(rows_, 1.0);
  for (int r = 0; r < rows_; ++r) {
    col_row_.push_back(r);
    col_val_.push_back(1.0);  // sign fixed at crash time
    col_start_[structural_ + r + 1] = static_cast<int>(col_row_.size());
  }

  row_start_.assign(rows_ + 1, 0);
  for (int t = 0; t < col_start_[structural_]; ++t) ++row_start_[col_row_[t] + 1];
  for (int r = 0; r < rows_; ++r) row_start_[r + 1] += row_start_[r];
  row_col_.resize(col_start_[structural_]);
  row_val_.resize(col_start_[structural_]);
  {
    std::vector<int> fill(row_start_.begin(), row_start_.end() - 1);
    for (int j = 0; j < structural_; ++j)
      for (int t = col_start_[j]; t < col_start_[j + 1]; ++t) {
        const int r = col_row_[t];
        row_col_[fill[r]] = j;
        row_val_[fill[r]] = col_val_[t];
        ++fill[r];
      }
  }

  rhs_.assign(rows_, 0.0);
  for (int r = 0; r < rows_; ++r) rhs_[r] = lp.rhs(r);

  // Singleton columns per row and opposite-signed split siblings; the
  // crash paths use them to complete and sign-correct a basis.
  row_singleton_.assign(rows_, -1);
  sibling_.assign(total_, -1);
  {
    std::vector<int> first_pos(rows_, -1), first_neg(rows_, -1);
    for (int j = 0; j < structural_; ++j) {
      if (col_start_[j + 1] - col_start_[j] != 1) continue;
      const int t = col_start_[j];
      const int r = col_row_[t];
      if (row_singleton_[r] < 0) row_singleton_[r] = j;
      int& slot = col_val_[t] > 0.0 ? first_pos[r] : first_neg[r];
      if (slot < 0) slot = j;
    }
    for (int r = 0; r < rows_; ++r)
      if (first_pos[r] >= 0 && first_neg[r] >= 0) {
        sibling_[first_pos[r]] = first_neg[r];
        sibling_[first_neg[r]] = first_pos[r];
      }
  }

  basis_hint_ = lp.basis_hint;
  banned_.assign(total_, 0);
  state_.assign(total_, VarState::NonbasicLower);
  value_.assign(total_, 0.0);
  dual_edge_.assign(total_, 0.0);
  basic_slot_.assign(total_, -1);
  work_.assign(rows_, 0.0);
  scratch_.assign(rows_, 0.0);
  scratch2_.assign(rows_, 0.0);
  alpha_sparse_.assign(total_, 0.0);

  max_iterations_ = opts_.max_iterations > 0
                        ? opts_.max_iterations
                        : 200000 + 40L * (rows_ + static_cast<long>(structural_));
}

double Simplex::nonbasic_start_value(int j) const {
  if (std::isfinite(lower_[j])) return lower_[j];
  if (std::isfinite(upper_[j])) return upper_[j];
  return 0.0;
}

// Builds the starting basis from caller-supplied hint columns: greedy
// factorization over [hints, split singletons, artificials], then a sweep
// swapping split columns whose basic value came out negative for their
// opposite-signed siblings. Falls back (returns false) when the resulting
// point is materially infeasible.
bool Simplex::crash_basis_from_hints() {
  if (basis_hint_.empty()) return false;

  for (int j = 0; j < total_; ++j) {
    if (std::isfinite(lower_[j])) {
      state_[j] = VarState::NonbasicLower;
      value_[j] = lower_[j];
    } else if (std::isfinite(upper_[j])) {
      state_[j] = VarState::NonbasicUpper;
      value_[j] = upper_[j];
    } else {
      state_[j] = VarState::NonbasicFree;
      value_[j] = 0.0;
    }
  }
  std::fill(basic_slot_.begin(), basic_slot_.end(), -1);
  bland_mode_ = false;
  degenerate_streak_ = 0;

  // Candidate order: hints, then one split singleton per row, then the
  // artificials so the greedy factorization always completes.
  std::vector<int> candidates;
  candidates.reserve(basis_hint_.size() + 2 * rows_);
  std::vector<char> seen(total_, 0);
  for (int j : basis_hint_) {
    if (j < 0 || j >= structural_ || seen[j]) continue;
    if (upper_[j] <= lower_[j]) continue;  // fixed: useless basic
    seen[j] = 1;
    candidates.push_back(j);
  }
  for (int r = 0; r < rows_; ++r) {
    const int j = row_singleton_[r];
    if (j >= 0 && !seen[j]) {
      seen[j] = 1;
      candidates.push_back(j);
    }
  }
  for (int r = 0; r < rows_; ++r) {
    art_sign_[r] = 1.0;
    col_val_[col_start_[structural_ + r]] = 1.0;
    lower_[structural_ + r] = 0.0;
    upper_[structural_ + r] = kInfinity;
    candidates.push_back(structural_ + r);
  }

  const std::vector<int> accepted = lu_.factor_greedy(
      rows_, static_cast<int>(candidates.size()), [&](int cand, SparseColumn& out) {
        out.index.clear();
        out.value.clear();
        const int j = candidates[cand];
        for (int t = col_start_[j]; t < col_start_[j + 1]; ++t) {
          out.index.push_back(col_row_[t]);
          out.value.push_back(col_val_[t]);
        }
      });
  if (static_cast<int>(accepted.size()) != rows_) return false;

  basis_.assign(rows_, -1);
  for (int pos = 0; pos < rows_; ++pos) {
    const int j = candidates[accepted[pos]];
    basis_[pos] = j;
    basic_slot_[j] = pos;
    state_[j] = VarState::Basic;
  }
  etas_.clear();
  eta_nnz_ = 0;
  compute_basic_values();

  // Sign sweep: a split basic at a negative value trades places with its
  // sibling (same row, opposite sign), flipping the basic value.
  bool swapped = false;
  for (int slot = 0; slot < rows_; ++slot) {
    const int j = basis_[slot];
    if (j >= structural_) {
      if (value_[j] < 0.0) {  // flip the artificial's sign instead
        const int r = j - structural_;
        art_sign_[r] = -art_sign_[r];
        col_val_[col_start_[j]] = art_sign_[r];
        swapped = true;
      }
      continue;
    }
    const int sib = sibling_[j];
    if (sib < 0 || value_[j] >= 0.0) continue;
    if (basic_slot_[sib] >= 0) continue;
    basic_slot_[j] = -1;
    state_[j] = VarState::NonbasicLower;
    value_[j] = lower_[j];
    basis_[slot] = sib;
    basic_slot_[sib] = slot;
    state_[sib] = VarState::Basic;
    swapped = true;
  }
  if (swapped) {
    if (!refactorize()) return false;
  }

  // Accept only near-feasible starts; anything worse goes through the
  // plain crash and its phase 1.
  double violation = 0.0;
  for (int slot = 0; slot < rows_; ++slot) {
    const int j = basis_[slot];
    if (std::isfinite(lower_[j])) violation = std::max(violation, lower_[j] - value_[j]);
    if (std::isfinite(upper_[j])) violation = std::max(violation, value_[j] - upper_[j]);
  }
  if (std::getenv("RGIO_LP_DEBUG"))
    std::fprintf(stderr, "[lp] hinted crash violation %.3g (accepting <= %.3g)\n",
                 violation, 1e-7 * (1.0 + rhs_norm()));
  return violation <= 1e-7 * (1.0 + rhs_norm());
}

// Anti-degeneracy expansion: every finite structural bound moves outward
// by a deterministic pseudo-random amount ~1e-9. L1 split programs are
// maximally degenerate without it. restore_bounds() undoes the shift; the
// caller then re-verifies optimality at the true bounds.
void Simplex::perturb_bounds() {
  if (perturbed_) return;
  orig_lower_.assign(lower_.begin(), lower_.begin() + structural_);
  orig_upper_.assign(upper_.begin(), upper_.begin() + structural_);
  for (int j = 0; j < structural_; ++j) {
    if (lower_[j] == upper_[j]) continue;  // keep fixed variables exact
    const double u1 = 0.5 + 0.5 * (static_cast<double>(mix64(j) >> 11) * 0x1.0p-53);
    const double u2 =
        0.5 + 0.5 * (static_cast<double>(mix64(~static_cast<std::uint64_t>(j)) >> 11) *
                     0x1.0p-53);
    if (std::isfinite(lower_[j])) lower_[j] -= 1e-10 * u1;
    if (std::isfinite(upper_[j])) upper_[j] += 1e-10 * u2;
    if (state_[j] == VarState::NonbasicLower && std::isfinite(lower_[j]))
      value_[j] = lower_[j];
    else if (state_[j] == VarState::NonbasicUpper && std::isfinite(upper_[j]))
      value_[j] = upper_[j];
  }
  perturbed_ = true;
}

void Simplex::restore_bounds() {
  if (!perturbed_) return;
  for (int j = 0; j < structural_; ++j) {
    lower_[j] = orig_lower_[j];
    upper_[j] = orig_upper_[j];
    if (state_[j] == VarState::NonbasicLower)
      value_[j] = std::isfinite(lower_[j]) ? lower_[j] : value_[j];
    else if (state_[j] == VarState::NonbasicUpper)
      value_[j] = std::isfinite(upper_[j]) ? upper_[j] : value_[j];
  }
  perturbed_ = false;
}

void Simplex::crash_basis() {
  basis_.assign(rows_, -1);
  std::fill(basic_slot_.begin(), basic_slot_.end(), -1);
  bland_mode_ = false;
  degenerate_streak_ = 0;

  for (int j = 0; j < total_; ++j) {
    if (std::isfinite(lower_[j])) {
      state_[j] = VarState::NonbasicLower;
      value_[j] = lower_[j];
    } else if (std::isfinite(upper_[j])) {
      state_[j] = VarState::NonbasicUpper;
      value_[j] = upper_[j];
    } else {
      state_[j] = VarState::NonbasicFree;
      value_[j] = 0.0;
    }
  }

  std::vector<double> residual(rhs_);
  for (int j = 0; j < structural_; ++j) {
    const double xj = value_[j];
    if (xj == 0.0) continue;
    for (int t = col_start_[j]; t < col_start_[j + 1]; ++t)
      residual[col_row_[t]] -= col_val_[t] * xj;
  }

  // Singleton structural columns give a diagonal, primal-feasible start
  // wherever they can absorb the row residual; remaining rows get signed
  // artificials (phase 1 drives those to zero).
  std::vector<int> chosen(rows_, -1);
  for (int j = 0; j < structural_; ++j) {
    if (col_start_[j + 1] - col_start_[j] != 1) continue;
    const int t = col_start_[j];
    const int r = col_row_[t];
    if (chosen[r] >= 0) continue;
    const double target = value_[j] + residual[r] / col_val_[t];
    if (target >= lower_[j] - 1e-12 && target <= upper_[j] + 1e-12) chosen[r] = j;
  }
  for (int r = 0; r < rows_; ++r) {
    if (chosen[r] >= 0) {
      const int j = chosen[r];
      const int t = col_start_[j];
      basis_[r] = j;
      basic_slot_[j] = r;
      state_[j] = VarState::Basic;
      value_[j] = std::clamp(value_[j] + residual[r] / col_val_[t], lower_[j], upper_[j]);
    } else {
      const int art = structural_ + r;
      const double sign = residual[r] < 0.0 ? -1.0 : 1.0;
      art_sign_[r] = sign;
      col_val_[col_start_[art]] = sign;
      lower_[art] = 0.0;
      upper_[art] = kInfinity;
      basis_[r] = art;
      basic_slot_[art] = r;
      state_[art] = VarState::Basic;
      value_[art] = std::abs(residual[r]);
    }
  }
}

void Simplex::gather_basis_column(int slot, SparseColumn& out) const {
  out.index.clear();
  out.value.clear();
  const int j = basis_[slot];
  for (int t = col_start_[j]; t < col_start_[j + 1]; ++t) {
    out.index.push_back(col_row_[t]);
    out.value.push_back(col_val_[t]);
  }
}

bool Simplex::refactorize() {
  for (int attempt = 0;; ++attempt) {
    const int bad_slot = lu_.factor(
        rows_, [this](int slot, SparseColumn& out) { gather_basis_column(slot, out); });
    if (bad_slot < 0) break;
    if (attempt > rows_) return false;
    // Basis repair: demote the dependent variable and promote an artificial
    // covering a row no other basis column touches.
    std::vector<char> covered(rows_, 0);
    for (int slot = 0; slot < rows_; ++slot) {
      if (slot == bad_slot) continue;
      for (int t = col_start_[basis_[slot]]; t < col_start_[basis_[slot] + 1]; ++t)
        covered[col_row_[t]] = 1;
    }
    int uncovered = -1;
    for (int r = 0; r < rows_; ++r)
      if (!covered[r]) {
        uncovered = r;
        break;
      }
    if (uncovered < 0) {
      // No structurally uncovered row: fall back to the dependent column's
      // own first row.
      uncovered = col_start_[basis_[bad_slot]] < col_start_[basis_[bad_slot] + 1]
                      ? col_row_[col_start_[basis_[bad_slot]]]
                      : 0;
    }
    const int art = structural_ + uncovered;
    if (basic_slot_[art] >= 0 && basic_slot_[art] != bad_slot) return false;
    const int old = basis_[bad_slot];
    basic_slot_[old] = -1;
    state_[old] = std::isfinite(lower_[old])   ? VarState::NonbasicLower
                  : std::isfinite(upper_[old]) ? VarState::NonbasicUpper
                                               : VarState::NonbasicFree;
    value_[old] = nonbasic_start_value(old);
    basis_[bad_slot] = art;
    basic_slot_[art] = bad_slot;
    state_[art] = VarState::Basic;
    upper_[art] = kInfinity;
  }
  etas_.clear();
  eta_nnz_ = 0;
  if (banned_count_ > 0) {
    std::fill(banned_.begin(), banned_.end(), 0);
    banned_count_ = 0;
  }
  compute_basic_values();
  return true;
}

void Simplex::compute_basic_values() {
  for (int r = 0; r < rows_; ++r) work_[r] = rhs_[r];
  for (int j = 0; j < total_; ++j) {
    if (state_[j] == VarState::Basic) continue;
    const double xj = value_[j];
    if (xj == 0.0) continue;
    for (int t = col_start_[j]; t < col_start_[j + 1]; ++t)
      work_[col_row_[t]] -= col_val_[t] * xj;
  }
  lu_.ftran(work_, scratch_);
  apply_etas_ftran(work_);
  for (int slot = 0; slot < rows_; ++slot) {
    value_[basis_[slot]] = work_[slot];
    work_[slot] = 0.0;
  }
}

void Simplex::apply_etas_ftran(std::vector<double>& x) const {
  for (const Eta& e : etas_) {
    const double t = x[e.slot] / e.pivot;
    x[e.slot] = t;
    if (t == 0.0) continue;
    for (size_t k = 0; k < e.index.size(); ++k) x[e.index[k]] -= e.value[k] * t;
  }
}

void Simplex::apply_etas_btran(std::vector<double>& y) const {
  for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
    double t = y[it->slot];
    for (size_t k = 0; k < it->index.size(); ++k) t -= it->value[k] * y[it->index[k]];
    y[it->slot] = t / it->pivot;
  }
}

void Simplex::ftran_column(int j, std::vector<double>& w) {
  std::fill(w.begin(), w.end(), 0.0);
  for (int t = col_start_[j]; t < col_start_[j + 1]; ++t)
    w[col_row_[t]] = col_val_[t];
  lu_.ftran(w, scratch_);
  apply_etas_ftran(w);
}

void Simplex::compute_duals_and_reduced_costs(Phase phase) {
  for (int slot = 0; slot < rows_; ++slot)
    work_[slot] = effective_cost(basis_[slot], phase);
  apply_etas_btran(work_);
  lu_.btran(work_, scratch_);
  duals_ = work_;
  for (int j = 0; j < total_; ++j) {
    if (state_[j] == VarState::Basic) {
      dual_edge_[j] = 0.0;
      continue;
    }
    double d = effective_cost(j, phase);
    for (int t = col_start_[j]; t < col_start_[j + 1]; ++t)
      d -= duals_[col_row_[t]] * col_val_[t];
    dual_edge_[j] = d;
  }
  std::fill(work_.begin(), work_.end(), 0.0);
}

double Simplex::effective_cost(int j, Phase phase) const {
  if (phase == Phase::One) return j >= structural_ ? 1.0 : 0.0;
  return j >= structural_ ? 0.0 : cost_[j];
}

bool Simplex::eligible(int j, double tol) const {
  switch (state_[j]) {
    case VarState::NonbasicLower:
      return dual_edge_[j] < -tol && upper_[j] > lower_[j];
    case VarState::NonbasicUpper:
      return dual_edge_[j] > tol && upper_[j] > lower_[j];
    case VarState::NonbasicFree:
      return std::abs(dual_edge_[j]) > tol;
    case VarState::Basic:
      return false;
  }
  return false;
}

double Simplex::violation(int j) const {
  switch (state_[j]) {
    case VarState::NonbasicLower:
      return -dual_edge_[j];
    case VarState::NonbasicUpper:
      return dual_edge_[j];
    case VarState::NonbasicFree:
      return std::abs(dual_edge_[j]);
    default:
      return 0.0;
  }
}

int Simplex::price(double tol) {
  if (bland_mode_) {
    for (int j = 0; j < total_; ++j)
      if (!banned_[j] && eligible(j, tol)) return j;
    return -1;
  }
  // Devex: steepest-edge surrogate d_j^2 / w_j over the full column set.
  int best = -1;
  double best_score = 0.0;
  for (int j = 0; j < total_; ++j) {
    if (banned_[j] || !eligible(j, tol)) continue;
    const double d = dual_edge_[j];
    const double score = d * d / devex_weight_[j];
    if (score > best_score || (score == best_score && best >= 0 && j < best)) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

Simplex::IterationOutcome Simplex::iterate(Phase phase) {
  const int entering = price(pricing_tol_);
  if (entering < 0) return IterationOutcome::Optimal;

  const double direction =
      state_[entering] == VarState::NonbasicUpper
          ? -1.0
          : (state_[entering] == VarState::NonbasicFree && dual_edge_[entering] > 0.0
                 ? -1.0
                 : 1.0);

  ftran_column(entering, work_);

  // Harris two-pass ratio test: pass 1 computes the largest step at which
  // every basic variable stays within its bound relaxed by the feasibility
  // tolerance, pass 2 picks the numerically largest pivot among the rows
  // whose exact ratio fits under that cap. The chosen row then leaves
  // exactly on its bound; other basics may overshoot by at most the
  // relaxation.
  const double own_range = upper_[entering] - lower_[entering];
  const double relax = opts_.feasibility_tol * 0.01;
  double theta_max = own_range;
  bool any_limit = false;
  for (int slot = 0; slot < rows_; ++slot) {
    const double w = work_[slot];
    if (std::abs(w) < kPivotZero) continue;
    const int b = basis_[slot];
    const double move = direction * w;
    double dist;
    if (move > 0.0)
      dist = std::isfinite(lower_[b]) ? value_[b] - lower_[b] : kInfinity;
    else
      dist = std::isfinite(upper_[b]) ? upper_[b] - value_[b] : kInfinity;
    if (!std::isfinite(dist)) continue;
    if (dist < 0.0) dist = 0.0;
    any_limit = true;
    theta_max = std::min(theta_max, (dist + relax) / std::abs(move));
  }

  if (!std::isfinite(theta_max)) {
    std::fill(work_.begin(), work_.end(), 0.0);
    return IterationOutcome::Unbounded;
  }

  int leaving_slot = -1;
  int leaving_var_index = -1;
  double step = own_range;
  if (any_limit) {
    double best_pivot = 0.0;
    double best_ratio = 0.0;
    for (int slot = 0; slot < rows_; ++slot) {
      const double w = work_[slot];
      if (std::abs(w) < kPivotZero) continue;
      const int b = basis_[slot];
      const double move = direction * w;
      double dist;
      if (move > 0.0)
        dist = std::isfinite(lower_[b]) ? value_[b] - lower_[b] : kInfinity;
      else
        dist = std::isfinite(upper_[b]) ? upper_[b] - value_[b] : kInfinity;
      if (!std::isfinite(dist)) continue;
      if (dist < 0.0) dist = 0.0;
      const double ratio = dist / std::abs(move);
      if (ratio > theta_max) continue;
      const double mag = std::abs(w);
      bool better;
      if (bland_mode_)
        better = leaving_slot < 0 || b < leaving_var_index;
      else
        better = mag > best_pivot ||
                 (mag == best_pivot && leaving_slot >= 0 && b < leaving_var_index);
      if (better) {
        best_pivot = mag;
        best_ratio = ratio;
        leaving_slot = slot;
        leaving_var_index = b;
      }
    }
    if (leaving_slot >= 0 && best_ratio < own_range) step = best_ratio;
    if (leaving_slot >= 0 && own_range <= best_ratio) {
      // The entering variable reaches its opposite bound first: bound flip.
      leaving_slot = -1;
      step = own_range;
    }
  }

  if (!std::isfinite(step)) {
    std::fill(work_.begin(), work_.end(), 0.0);
    return IterationOutcome::Unbounded;
  }

  ++iterations_;

  if (leaving_slot >= 0) {
    const double pivot_mag = std::abs(work_[leaving_slot]);
    if (pivot_mag < kPivotReject) {
      if (!etas_.empty()) {
        // Retry against fresh factors first.
        std::fill(work_.begin(), work_.end(), 0.0);
        if (!refactorize()) return IterationOutcome::Singular;
        compute_duals_and_reduced_costs(phase);
        return IterationOutcome::Refactorized;
      }
      // Fresh factors and still tiny: shelve this column until the next
      // refactorization instead of destabilizing the basis.
      std::fill(work_.begin(), work_.end(), 0.0);
      banned_[entering] = 1;
      ++banned_count_;
      ++iterations_;
      return IterationOutcome::Continue;
    }
  }

  ++iterations_;

  if (leaving_slot < 0) {
    ++stat_flips_;
    // Bound flip; the basis and the reduced costs stay unchanged.
    for (int slot = 0; slot < rows_; ++slot) {
      const double w = work_[slot];
      if (w != 0.0) value_[basis_[slot]] -= direction * step * w;
    }
    value_[entering] += direction * step;
    state_[entering] = state_[entering] == VarState::NonbasicLower
                           ? VarState::NonbasicUpper
                           : VarState::NonbasicLower;
    std::fill(work_.begin(), work_.end(), 0.0);
    degenerate_streak_ = 0;
    return IterationOutcome::Continue;
  }

  const double pivot = work_[leaving_slot];

  // Reduced-cost update through the pivot row:
  //   rho = B^{-T} e_r,  alpha_j = rho' A_j,  d_j -= (d_q / pivot) alpha_j.
  std::fill(scratch2_.begin(), scratch2_.end(), 0.0);
  scratch2_[leaving_slot] = 1.0;
  apply_etas_btran(scratch2_);
  lu_.btran(scratch2_, scratch_);

  const double theta_dual = dual_edge_[entering] / pivot;
  alpha_touched_.clear();
  for (int r = 0; r < rows_; ++r) {
    const double rho = scratch2_[r];
    if (rho == 0.0) continue;
    scratch2_[r] = 0.0;
    for (int t = row_start_[r]; t < row_start_[r + 1]; ++t) {
      const int j = row_col_[t];
      if (alpha_sparse_[j] == 0.0) alpha_touched_.push_back(j);
      alpha_sparse_[j] += rho * row_val_[t];
    }
    const int art = structural_ + r;
    if (alpha_sparse_[art] == 0.0) alpha_touched_.push_back(art);
    alpha_sparse_[art] += rho * art_sign_[r];
  }
  const double entering_weight = devex_weight_[entering];
  const double pivot_sq = pivot * pivot;
  for (int j : alpha_touched_) {
    if (state_[j] != VarState::Basic && j != entering) {
      dual_edge_[j] -= theta_dual * alpha_sparse_[j];
      const double candidate =
          (alpha_sparse_[j] * alpha_sparse_[j] / pivot_sq) * entering_weight;
      if (candidate > devex_weight_[j]) devex_weight_[j] = candidate;
    }
    alpha_sparse_[j] = 0.0;
  }
  alpha_touched_.clear();
  devex_max_ = std::max(devex_max_, entering_weight / pivot_sq);

  const int leaving = basis_[leaving_slot];
  for (int slot = 0; slot < rows_; ++slot) {
    const double w = work_[slot];
    if (w != 0.0) value_[basis_[slot]] -= direction * step * w;
  }
  value_[entering] += direction * step;

  const double leave_move = direction * pivot;
  if (leave_move > 0.0 || !std::isfinite(upper_[leaving])) {
    state_[leaving] = VarState::NonbasicLower;
    value_[leaving] = lower_[leaving];
  } else {
    state_[leaving] = VarState::NonbasicUpper;
    value_[leaving] = upper_[leaving];
  }
  if (phase == Phase::One && leaving >= structural_)
    upper_[leaving] = 0.0;  // departed artificial stays fixed at zero
  basic_slot_[leaving] = -1;
  dual_edge_[leaving] = -theta_dual;
  devex_weight_[leaving] = std::max(entering_weight / pivot_sq, 1.0);
  basis_[leaving_slot] = entering;
  basic_slot_[entering] = leaving_slot;
  state_[entering] = VarState::Basic;
  dual_edge_[entering] = 0.0;

  Eta eta;
  eta.slot = leaving_slot;
  eta.pivot = pivot;
  for (int slot = 0; slot < rows_; ++slot) {
    const double w = work_[slot];
    if (slot != leaving_slot && w != 0.0) {
      eta.index.push_back(slot);
      eta.value.push_back(w);
    }
  }
  eta_nnz_ += static_cast<long>(eta.index.size()) + 1;
  etas_.push_back(std::move(eta));
  std::fill(work_.begin(), work_.end(), 0.0);

  if (step <= kDegenerateStep) {
    ++stat_degenerate_;
    if (++degenerate_streak_ > kBlandTrigger) bland_mode_ = true;
  } else {
    degenerate_streak_ = 0;
    bland_mode_ = false;
  }
  if (std::getenv("RGIO_LP_DEBUG") && iterations_ % 4000 == 0) {
    double obj = 0.0;
    for (int j = 0; j < structural_; ++j) obj += cost_[j] * value_[j];
    std::fprintf(stderr, "[lp] it=%ld obj=%.6g degen=%ld flips=%ld bland=%d\n",
                 iterations_, obj, stat_degenerate_, stat_flips_, int(bland_mode_));
  }

  if (devex_max_ > 1e8) {
    devex_weight_.assign(total_, 1.0);
    devex_max_ = 1.0;
  }
  if (static_cast<long>(etas_.size()) >= refactor_interval_ ||
      eta_nnz_ > 12L * rows_ + 4096) {
    if (!refactorize()) return IterationOutcome::Singular;
    compute_duals_and_reduced_costs(phase);
    return IterationOutcome::Refactorized;
  }
  return IterationOutcome::Continue;
}

LpStatus Simplex::run_phase(Phase phase) {
  compute_duals_and_reduced_costs(phase);
  devex_weight_.assign(total_, 1.0);
  devex_max_ = 1.0;
  bland_mode_ = false;
  degenerate_streak_ = 0;
  while (iterations_ < max_iterations_) {
    switch (iterate(phase)) {
      case IterationOutcome::Optimal:
        if (banned_count_ > 0 && ban_rounds_ < 3) {
          ++ban_rounds_;
          if (!refactorize()) return LpStatus::NumericalFailure;
          compute_duals_and_reduced_costs(phase);
          if (iterate(phase) == IterationOutcome::Optimal) {
            ban_rounds_ = 0;
            return LpStatus::Optimal;
          }
          break;
        }
        ban_rounds_ = 0;
        return LpStatus::Optimal;
      case IterationOutcome::Unbounded:
        return LpStatus::Unbounded;
      case IterationOutcome::Singular:
        return LpStatus::NumericalFailure;
      case IterationOutcome::Refactorized:
      case IterationOutcome::Continue:
        break;
    }
  }
  return LpStatus::IterationLimit;
}

double Simplex::phase_one_infeasibility() const {
  double total = 0.0;
  for (int r = 0; r < rows_; ++r) total += std::abs(value_[structural_ + r]);
  return total;
}

double Simplex::rhs_norm() const {
  double norm = 0.0;
  for (double b : rhs_) norm = std::max(norm, std::abs(b));
  return norm;
}

LpResult Simplex::solve() {
  LpResult res;
  for (int restart = 0; restart < 3; ++restart) {
    res = solve_once();
    if (res.status != LpStatus::NumericalFailure) break;
    for (int r = 0; r < rows_; ++r) {
      lower_[structural_ + r] = 0.0;
      upper_[structural_ + r] = 0.0;
    }
  }
  solved_once_ = true;
  last_status_ = res.status;
  return res;
}

LpResult Simplex::solve_once() {
  pricing_tol_ = opts_.optimality_tol;
  banned_.assign(total_, 0);
  banned_count_ = 0;
  ban_rounds_ = 0;
  force_tiny_pivot_ = false;
  perturb_bounds();
  bool crashed = opts_.use_basis_hint && crash_basis_from_hints();
  if (!crashed) {
    crash_basis();
    if (!refactorize())
      return finish(LpStatus::NumericalFailure, "initial basis singular");
  }

  LpStatus status;
  if (phase_one_infeasibility() > opts_.feasibility_tol * (1.0 + rhs_norm())) {
    status = run_phase(Phase::One);
    if (status == LpStatus::Unbounded)
      return finish(LpStatus::NumericalFailure, "phase 1 claimed unbounded");
    if (status != LpStatus::Optimal) return finish(status, "phase 1 incomplete");
    if (!refactorize())
      return finish(LpStatus::NumericalFailure, "refactor after phase 1 failed");
    if (phase_one_infeasibility() > 1e-7 * (1.0 + rhs_norm())) {
      compute_duals_and_reduced_costs(Phase::One);
      return finish(LpStatus::Infeasible, "phase 1 optimum positive");
    }
  }
  for (int r = 0; r < rows_; ++r) upper_[structural_ + r] = 0.0;

  pricing_tol_ = opts_.optimality_tol;
  perturb_bounds();
  status = run_phase(Phase::Two);
  restore_bounds();
  if (!refactorize()) return finish(LpStatus::NumericalFailure, "refactor after restore");
  if (status == LpStatus::Optimal) status = polish_phase_two();
  return finish(status, {});
}

// Cleanup rounds with a tightened pricing tolerance: residual reduced-cost
// violations at the default tolerance each admit a duality-gap contribution
// of tol times the bound range, which would swamp near-zero objectives.
LpStatus Simplex::polish_phase_two() {
  pricing_tol_ = opts_.optimality_tol;
  LpStatus status = LpStatus::Optimal;
  for (int round = 0; round < 6; ++round) {
    if (!refactorize()) {
      status = LpStatus::NumericalFailure;
      break;
    }
    compute_duals_and_reduced_costs(Phase::Two);
    bool clean = true;
    for (int j = 0; j < total_ && clean; ++j)
      if (!banned_[j] && eligible(j, pricing_tol_)) clean = false;
    if (clean) break;
    status = run_phase(Phase::Two);
    if (status != LpStatus::Optimal) break;
  }
  pricing_tol_ = opts_.optimality_tol;
  return status;
}

LpResult Simplex::finish(LpStatus status, const std::string& note) {
  LpResult res;
  res.status = status;
  res.iterations = iterations_;
  res.note = note;
  res.z = Eigen::VectorXd::Zero(structural_);
  for (int j = 0; j < structural_; ++j) res.z(j) = value_[j];
  res.duals = Eigen::VectorXd::Zero(rows_);
  if (!duals_.empty())
    for (int r = 0; r < rows_; ++r) res.duals(r) = duals_[r];
  res.reduced_costs = Eigen::VectorXd::Zero(structural_);
  for (int j = 0; j < structural_; ++j) res.reduced_costs(j) = dual_edge_[j];
  double obj = 0.0;
  for (int j = 0; j < structural_; ++j) obj += cost_[j] * value_[j];
  res.objective_value = obj;

  std::vector<double> ax(rows_, 0.0);
  for (int j = 0; j < total_; ++j) {
    const double xj = value_[j];
    if (xj == 0.0 || (j >= structural_ && state_[j] != VarState::Basic)) continue;
    for (int t = col_start_[j]; t < col_start_[j + 1]; ++t)
      ax[col_row_[t]] += col_val_[t] * xj;
  }
  double primal = 0.0;
  int worst_row = -1, worst_col = -1;
  for (int r = 0; r < rows_; ++r)
    if (std::abs(ax[r] - rhs_[r]) > primal) {
      primal = std::abs(ax[r] - rhs_[r]);
      worst_row = r;
    }
  for (int j = 0; j < structural_; ++j) {
    const double v = std::max(std::isfinite(lower_[j]) ? lower_[j] - value_[j] : 0.0,
                              std::isfinite(upper_[j]) ? value_[j] - upper_[j] : 0.0);
    if (v > primal) {
      primal = v;
      worst_col = j;
      worst_row = -1;
    }
  }
  if (std::getenv("RGIO_LP_DEBUG") && primal > opts_.feasibility_tol)
    std::fprintf(stderr,
                 "[lp] worst primal %.3g at %s %d (state %d lb %.17g ub %.17g val %.17g)\n",
                 primal, worst_row >= 0 ? "row" : "col",
                 worst_row >= 0 ? worst_row : worst_col,
                 worst_col >= 0 ? int(state_[worst_col]) : -1,
                 worst_col >= 0 ? lower_[worst_col] : 0.0,
                 worst_col >= 0 ? upper_[worst_col] : 0.0,
                 worst_col >= 0 ? value_[worst_col] : 0.0);
  res.primal_residual = primal;

  if (status == LpStatus::Optimal) {
    const double scale = 1.0 + rhs_norm();
    double dual_violation = 0.0;
    double comp = 0.0;
    double dual_obj = 0.0;
    for (int r = 0; r < rows_; ++r) dual_obj += res.duals(r) * rhs_[r];
    for (int j = 0; j < structural_; ++j) {
      const double d = res.reduced_costs(j);
      if (d == 0.0) continue;
      // Dual certificate: reduced costs priced at each variable's active
      // bound. Sign violations against that bound are reported separately.
      switch (state_[j]) {
        case VarState::NonbasicLower:
          dual_obj += d * lower_[j];
          if (d < 0.0 && upper_[j] > lower_[j]) dual_violation = std::max(dual_violation, -d);
          break;
        case VarState::NonbasicUpper:
          dual_obj += d * upper_[j];
          if (d > 0.0 && upper_[j] > lower_[j]) dual_violation = std::max(dual_violation, d);
          break;
        case VarState::NonbasicFree:
          dual_violation = std::max(dual_violation, std::abs(d));
          break;
        case VarState::Basic:
          comp = std::max(comp, std::abs(d));
          break;
      }
      if (d > 0.0 && std::isfinite(lower_[j]))
        comp = std::max(comp, d * std::min(1.0, value_[j] - lower_[j]));
      if (d < 0.0 && std::isfinite(upper_[j]))
        comp = std::max(comp, -d * std::min(1.0, upper_[j] - value_[j]));
    }
    res.dual_residual = dual_violation;
    res.complementarity = comp;
    res.duality_gap = std::abs(obj - dual_obj) / (1.0 + std::abs(obj));
    if (res.primal_residual > opts_.feasibility_tol * scale ||
        res.duality_gap > opts_.optimality_tol ||
        comp > opts_.optimality_tol * scale ||
        dual_violation > opts_.optimality_tol * scale) {
      res.status = LpStatus::NumericalFailure;
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "optimality checks failed: primal=%.3g gap=%.3g comp=%.3g dual=%.3g",
                    res.primal_residual, res.duality_gap, comp, dual_violation);
      res.note = buf;
    }
  }
  return res;
}

LpResult Simplex::resolve_with_objective(const Eigen::VectorXd& objective) {
  if (objective.size() != structural_) throw Error("resolve objective has wrong dimension");
  for (int j = 0; j < structural_; ++j) cost_[j] = objective(j);
  if (!solved_once_ || last_status_ != LpStatus::Optimal) return solve();
  if (!refactorize()) return finish(LpStatus::NumericalFailure, "refactor on resolve failed");
  pricing_tol_ = opts_.optimality_tol;
  perturb_bounds();
  LpStatus status = run_phase(Phase::Two);
  restore_bounds();
  if (!refactorize()) return finish(LpStatus::NumericalFailure, "refactor after restore");
  if (status == LpStatus::Optimal) status = polish_phase_two();
  LpResult res = finish(status, {});
  last_status_ = res.status;
  return res;
}

}  // namespace rgio::lp_detail
