#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "rgio/equilibrium.hpp"
#include "rgio/errors.hpp"
#include "rgio/lp.hpp"

namespace rgio {

namespace {

// Feasible-set LP over stacked flows plus capacity slacks:
//   D x_i = f_i per player,  sum_i x_i + s = alpha,  x >= 0, s >= 0.
LinearProgram polytope_lp(const GameInstance& instance) {
  const int n = instance.network.arc_count();
  const int m = instance.network.node_count();
  const int players = instance.players;
  const Eigen::VectorXd f = demand_vector(instance.network, instance.od);

  LpBuilder builder;
  for (int i = 0; i < players; ++i)
    for (int a = 0; a < n; ++a) builder.add_variable(0.0, kInfinity);
  const int slack0 = players * n;
  for (int a = 0; a < n; ++a) builder.add_variable(0.0, kInfinity);
  for (int i = 0; i < players; ++i)
    for (int p = 0; p < m; ++p) builder.add_row(f(p));
  for (int a = 0; a < n; ++a) builder.add_row(instance.capacity(a));
  for (int a = 0; a < n; ++a) {
    const Arc& arc = instance.network.arc(a);
    for (int i = 0; i < players; ++i) {
      builder.add_entry(i * m + arc.tail - 1, i * n + a, -1.0);
      builder.add_entry(i * m + arc.head - 1, i * n + a, 1.0);
      builder.add_entry(players * m + a, i * n + a, 1.0);
    }
    builder.add_entry(players * m + a, slack0 + a, 1.0);
  }
  return builder.build();
}

struct Atom {
  Eigen::VectorXd point;  // stacked flows only
  double weight = 0.0;
};

// Active-set polish: minimize the quadratic potential with the support and
// tight-capacity pattern of `x` fixed, recover multipliers, and verify the
// full KKT system. Returns true and overwrites the iterate on success.
bool polish_active_set(const GameInstance& instance, const CostParameterization& params,
                       Eigen::VectorXd& x, double& potential_out) {
  const int n = instance.network.arc_count();
  const int m = instance.network.node_count();
  const int players = instance.players;
  const double support_tol = 1e-7;

  for (int round = 0; round < 6; ++round) {
    std::vector<int> support;
    for (int k = 0; k < n * players; ++k)
      if (x(k) > support_tol) support.push_back(k);
    Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < players; ++i) total += x.segment(i * n, n);
    std::vector<int> tight;
    for (int a = 0; a < n; ++a)
      if (instance.capacity(a) - total(a) < support_tol) tight.push_back(a);

    // Equality rows: per player the first m-1 conservation rows restricted
    // to the support, plus one row per tight arc.
    const int s = static_cast<int>(support.size());
    const int rows = players * (m - 1) + static_cast<int>(tight.size());
    Eigen::MatrixXd a_eq = Eigen::MatrixXd::Zero(rows, s);
    Eigen::VectorXd b_eq = Eigen::VectorXd::Zero(rows);
    const Eigen::VectorXd f = demand_vector(instance.network, instance.od);
    for (int i = 0; i < players; ++i)
      for (int p = 0; p < m - 1; ++p) b_eq(i * (m - 1) + p) = f(p);
    for (size_t ti = 0; ti < tight.size(); ++ti)
      b_eq(players * (m - 1) + ti) = instance.capacity(tight[ti]);
    std::vector<int> tight_row(n, -1);
    for (size_t ti = 0; ti < tight.size(); ++ti)
      tight_row[tight[ti]] = players * (m - 1) + static_cast<int>(ti);
    for (int col = 0; col < s; ++col) {
      const int k = support[col];
      const int i = k / n;
      const int a = k % n;
      const Arc& arc = instance.network.arc(a);
      if (arc.tail - 1 < m - 1) a_eq(i * (m - 1) + arc.tail - 1, col) = -1.0;
      if (arc.head - 1 < m - 1) a_eq(i * (m - 1) + arc.head - 1, col) = 1.0;
      if (tight_row[a] >= 0) a_eq(tight_row[a], col) = 1.0;
    }

    // KKT system of min 1/2 z' M_ss z + c_s' z  s.t.  A z = b.
    const Eigen::MatrixXd big_m = interaction_matrix(params, players);
    Eigen::MatrixXd m_ss(s, s);
    Eigen::VectorXd c_s(s);
    for (int r = 0; r < s; ++r) {
      c_s(r) = params.c_base[support[r] / n](support[r] % n);
      for (int c = 0; c < s; ++c) m_ss(r, c) = big_m(support[r], support[c]);
    }
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(s + rows, s + rows);
    kkt.topLeftCorner(s, s) = m_ss;
    kkt.topRightCorner(s, rows) = a_eq.transpose();
    kkt.bottomLeftCorner(rows, s) = a_eq;
    Eigen::VectorXd rhs(s + rows);
    rhs.head(s) = -c_s;
    rhs.tail(rows) = b_eq;
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(kkt);
    const Eigen::VectorXd sol = cod.solve(rhs);
    if (!sol.allFinite() || (kkt * sol - rhs).lpNorm<Eigen::Infinity>() >
                                1e-8 * (1.0 + rhs.lpNorm<Eigen::Infinity>()))
      return false;

    Eigen::VectorXd candidate = Eigen::VectorXd::Zero(n * players);
    for (int col = 0; col < s; ++col) candidate(support[col]) = sol(col);

    EquilibriumSolution probe;
    probe.flows.resize(players);
    probe.duals_v.resize(players);
    probe.duals_u.resize(players);
    probe.dual_capacity = Eigen::VectorXd::Zero(n);
    for (size_t ti = 0; ti < tight.size(); ++ti)
      probe.dual_capacity(tight[ti]) = sol(s + players * (m - 1) + ti);
    for (int i = 0; i < players; ++i) {
      probe.flows[i] = candidate.segment(i * n, n);
      Eigen::VectorXd vi = Eigen::VectorXd::Zero(m);
      vi.head(m - 1) = sol.segment(s + i * (m - 1), m - 1);
      probe.duals_v[i] = vi;
    }
    const Eigen::VectorXd f_map = eval_F(params, candidate, players);
    for (int i = 0; i < players; ++i) {
      Eigen::VectorXd ui = f_map.segment(i * n, n) + probe.dual_capacity;
      for (int a = 0; a < n; ++a) {
        const Arc& arc = instance.network.arc(a);
        ui(a) += probe.duals_v[i](arc.head - 1) - probe.duals_v[i](arc.tail - 1);
      }
      probe.duals_u[i] = ui;
    }
    const KktResidualReport report = kkt_residuals(instance, params, probe);
    if (report.max() <= 1e-9) {
      x = candidate;
      potential_out = potential_value(params, x, players);
      return true;
    }

    // Refine the guessed pattern from the failed probe and retry.
    bool changed = false;
    for (int k = 0; k < n * players; ++k) {
      if (candidate(k) < -1e-12 && x(k) > support_tol) {
        x(k) = 0.0;  // drop from support
        changed = true;
      }
    }
    for (size_t ti = 0; ti < tight.size(); ++ti) {
      if (probe.dual_capacity(tight[ti]) < -1e-12) {
        // Capacity row held with a negative price: treat as slack by nudging
        // the iterate off the bound.
        changed = true;
      }
    }
    if (!changed) return false;
  }
  return false;
}

}  // namespace

OracleResult solve_potential_oracle(const GameInstance& instance,
                                    const CostParameterization& params,
                                    double gap_tolerance) {
  instance.validate();
  params.validate();
  if (params.mode != CostMode::SharedAcrossPlayers)
    throw Error("potential oracle requires shared cost mode");
  if (params.players() != instance.players)
    throw Error("cost parameterization does not cover all players");
  if (gap_tolerance <= 0.0) throw Error("gap tolerance must be positive");

  const int n = instance.network.arc_count();
  const int players = instance.players;
  const int dim = n * players;

  const LinearProgram lp = polytope_lp(instance);
  LpResolver resolver(lp);
  const LpResult& first = resolver.solve();
  OracleResult out;
  if (first.status != LpStatus::Optimal) {
    out.converged = false;
    return out;  // infeasible or numerically hopeless polytope
  }

  const Eigen::MatrixXd big_m = interaction_matrix(params, players);
  Eigen::VectorXd cbar_stack(dim);
  for (int i = 0; i < players; ++i) cbar_stack.segment(i * n, n) = params.c_base[i];

  std::vector<Atom> atoms;
  atoms.push_back({first.z.head(dim), 1.0});
  Eigen::VectorXd x = atoms[0].point;

  const int max_iterations = 20000;
  double gap = std::numeric_limits<double>::infinity();
  int iter = 0;
  for (; iter < max_iterations; ++iter) {
    const Eigen::VectorXd grad = big_m * x + cbar_stack;
    Eigen::VectorXd lp_objective = Eigen::VectorXd::Zero(lp.num_vars());
    lp_objective.head(dim) = grad;
    const LpResult& sub = resolver.resolve(lp_objective);
    if (sub.status != LpStatus::Optimal) break;
    const Eigen::VectorXd vertex = sub.z.head(dim);
    gap = grad.dot(x - vertex);
    if (gap <= gap_tolerance) break;

    // Away atom: the active vertex most aligned with the gradient.
    int away = -1;
    double away_score = -std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < atoms.size(); ++k) {
      const double score = grad.dot(atoms[k].point);
      if (score > away_score) {
        away_score = score;
        away = static_cast<int>(k);
      }
    }

    const double fw_gain = grad.dot(x - vertex);
    const double away_gain = away_score - grad.dot(x);
    Eigen::VectorXd direction;
    double max_step;
    bool is_away;
    if (away >= 0 && away_gain > fw_gain) {
      direction = x - atoms[away].point;
      const double lam = atoms[away].weight;
      max_step = lam >= 1.0 ? std::numeric_limits<double>::infinity() : lam / (1.0 - lam);
      is_away = true;
    } else {
      direction = vertex - x;
      max_step = 1.0;
      is_away = false;
    }

    const double curvature = direction.dot(big_m * direction);
    const double slope = grad.dot(direction);
    double step = max_step;
    if (curvature > 0.0) step = std::min(max_step, -slope / curvature);
    if (step <= 0.0) break;  // no descent available: numerical floor reached

    if (is_away) {
      const double scale = 1.0 + step;
      for (Atom& atom : atoms) atom.weight *= scale;
      atoms[away].weight -= step;
    } else {
      for (Atom& atom : atoms) atom.weight *= 1.0 - step;
      int hit = -1;
      for (size_t k = 0; k < atoms.size(); ++k)
        if ((atoms[k].point - vertex).lpNorm<Eigen::Infinity>() < 1e-12) {
          hit = static_cast<int>(k);
          break;
        }
      if (hit >= 0)
        atoms[hit].weight += step;
      else
        atoms.push_back({vertex, step});
    }
    x += step * direction;

    // Drop exhausted atoms; resynchronize the iterate now and then.
    atoms.erase(std::remove_if(atoms.begin(), atoms.end(),
                               [](const Atom& a) { return a.weight < 1e-15; }),
                atoms.end());
    if ((iter + 1) % 128 == 0) {
      Eigen::VectorXd rebuilt = Eigen::VectorXd::Zero(dim);
      double total = 0.0;
      for (const Atom& atom : atoms) {
        rebuilt += atom.weight * atom.point;
        total += atom.weight;
      }
      if (std::abs(total - 1.0) < 1e-9) x = rebuilt;
    }
  }

  out.iterations = iter;
  out.linearization_gap = gap;
  out.converged = gap <= gap_tolerance;
  out.potential = potential_value(params, x, players);
  out.polished = polish_active_set(instance, params, x, out.potential);
  out.stacked_flows = x;
  if (!out.polished) out.potential = potential_value(params, x, players);
  return out;
}

}  // namespace rgio
