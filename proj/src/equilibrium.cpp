#include "rgio/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <queue>

#include "rgio/analysis.hpp"
#include "rgio/errors.hpp"
#include "rgio/lp.hpp"

namespace rgio {

void SolverSettings::validate() const {
  if (tolerance <= 0.0) throw Error("solver tolerance must be positive");
  if (max_iterations < 1) throw Error("max_iterations must be positive");
  if (start_points.empty()) throw Error("at least one start point is required");
  if (line_search_shrink <= 0.0 || line_search_shrink >= 1.0)
    throw Error("line_search_shrink must lie in (0,1)");
  if (armijo_constant <= 0.0 || armijo_constant >= 1.0)
    throw Error("armijo_constant must lie in (0,1)");
}

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Converged: return "converged";
    case SolveStatus::DidNotConverge: return "did-not-converge";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

namespace {

// Fischer-Burmeister function with a generalized-derivative selection; at
// the origin kink both partials take the same fixed value.
inline void fb(double a, double b, double& phi, double& da, double& db) {
  const double r = std::hypot(a, b);
  phi = r - a - b;
  if (r > 1e-14) {
    da = a / r - 1.0;
    db = b / r - 1.0;
  } else {
    constexpr double kOriginSlope = 0.70710678118654752 - 1.0;
    da = kOriginSlope;
    db = kOriginSlope;
  }
}

struct NewtonWorkspace {
  const GameInstance* instance = nullptr;
  const CostParameterization* params = nullptr;
  int n = 0, m = 0, players = 0;
  Eigen::VectorXd demand;

  // State: stacked flows x (n*players), potentials v (m*players), ubar (n).
  Eigen::VectorXd x, v, ubar;

  Eigen::VectorXd total;
  Eigen::VectorXd w;  // complementarity partners, stacked like x
  Eigen::VectorXd phi_x, da_x, db_x;
  Eigen::VectorXd phi_u, da_u, db_u;

  void bind(const GameInstance& inst, const CostParameterization& p) {
    instance = &inst;
    params = &p;
    n = inst.network.arc_count();
    m = inst.network.node_count();
    players = inst.players;
    demand = demand_vector(inst.network, inst.od);
  }

  int unknowns() const { return n * players + m * players + n; }

  // Row order: [FB x (n*players)] [per player: conservation nodes 0..m-2,
  // then the pinned-potential row] [FB capacity (n)].
  Eigen::VectorXd residual() {
    const Network& net = instance->network;
    total = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < players; ++i) total += x.segment(i * n, n);
    w.resize(n * players);
    for (int i = 0; i < players; ++i) {
      w.segment(i * n, n) =
          params->c_int[i].cwiseProduct(x.segment(i * n, n) + total) +
          params->c_base[i] + ubar;
      const auto vi = v.segment(i * m, m);
      for (int a = 0; a < n; ++a) {
        const Arc& arc = net.arc(a);
        w(i * n + a) += vi(arc.head - 1) - vi(arc.tail - 1);
      }
    }
    Eigen::VectorXd out(unknowns());
    phi_x.resize(n * players);
    da_x.resize(n * players);
    db_x.resize(n * players);
    for (int k = 0; k < n * players; ++k) fb(x(k), w(k), phi_x(k), da_x(k), db_x(k));
    out.head(n * players) = phi_x;

    int row = n * players;
    for (int i = 0; i < players; ++i) {
      Eigen::VectorXd net_flow = Eigen::VectorXd::Zero(m);
      for (int a = 0; a < n; ++a) {
        const Arc& arc = net.arc(a);
        net_flow(arc.tail - 1) -= x(i * n + a);
        net_flow(arc.head - 1) += x(i * n + a);
      }
      out.segment(row, m - 1) = (net_flow - demand).head(m - 1);
      out(row + m - 1) = v(i * m + m - 1);
      row += m;
    }

    const Eigen::VectorXd slack = instance->capacity - total;
    phi_u.resize(n);
    da_u.resize(n);
    db_u.resize(n);
    for (int a = 0; a < n; ++a) fb(ubar(a), slack(a), phi_u(a), da_u(a), db_u(a));
    out.tail(n) = phi_u;
    return out;
  }

  // Newton direction via block elimination: the (x, ubar) unknowns couple
  // only within one arc, so eliminating them leaves a dense system in the
  // per-player node potentials.
  bool newton_direction(const Eigen::VectorXd& rhs, Eigen::VectorXd& delta) {
    const Network& net = instance->network;
    const int np = players;
    const int vdim = m * np;
    Eigen::MatrixXd schur = Eigen::MatrixXd::Zero(vdim, vdim);
    Eigen::VectorXd t = Eigen::VectorXd::Zero(vdim);

    int row = n * np;
    for (int i = 0; i < np; ++i) {
      t.segment(i * m, m - 1) = rhs.segment(row, m - 1);
      t(i * m + m - 1) = rhs(row + m - 1);
      schur(i * m + m - 1, i * m + m - 1) = 1.0;
      row += m;
    }

    std::vector<Eigen::MatrixXd> tinv(n);
    std::vector<Eigen::VectorXd> tinv_r(n);
    for (int a = 0; a < n; ++a) {
      Eigen::MatrixXd block = Eigen::MatrixXd::Zero(np + 1, np + 1);
      Eigen::VectorXd r(np + 1);
      for (int i = 0; i < np; ++i) {
        const int k = i * n + a;
        for (int j = 0; j < np; ++j)
          block(i, j) = db_x(k) * params->c_int[i](a) * (i == j ? 2.0 : 1.0);
        block(i, i) += da_x(k);
        block(i, np) = db_x(k);
        r(i) = rhs(k);
      }
      for (int j = 0; j < np; ++j) block(np, j) = -db_u(a);
      block(np, np) = da_u(a);
      r(np) = rhs(n * np + m * np + a);

      Eigen::FullPivLU<Eigen::MatrixXd> lu(block);
      if (!lu.isInvertible()) return false;
      tinv[a] = lu.inverse();
      tinv_r[a] = tinv[a] * r;

      const int tail = net.arc(a).tail - 1;
      const int head = net.arc(a).head - 1;
      for (int i = 0; i < np; ++i) {
        for (const auto& [node, dcoef] :
             {std::pair<int, double>{tail, -1.0}, std::pair<int, double>{head, 1.0}}) {
          if (node == m - 1) continue;  // replaced by the pin row
          const int srow = i * m + node;
          t(srow) -= dcoef * tinv_r[a](i);
          for (int j = 0; j < np; ++j) {
            const double base = dcoef * tinv[a](i, j) * db_x(j * n + a);
            schur(srow, j * m + tail) += base;
            schur(srow, j * m + head) -= base;
          }
        }
      }
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> slu(schur);
    const Eigen::VectorXd dv = slu.solve(t);
    if (!dv.allFinite()) return false;
    if ((schur * dv - t).lpNorm<Eigen::Infinity>() >
        1e-6 * (1.0 + t.lpNorm<Eigen::Infinity>()))
      return false;

    delta.resize(unknowns());
    delta.segment(n * np, vdim) = dv;
    for (int a = 0; a < n; ++a) {
      const int tail = net.arc(a).tail - 1;
      const int head = net.arc(a).head - 1;
      Eigen::VectorXd uv = Eigen::VectorXd::Zero(np + 1);
      for (int i = 0; i < np; ++i)
        uv(i) = db_x(i * n + a) * (dv(i * m + head) - dv(i * m + tail));
      const Eigen::VectorXd g = tinv_r[a] - tinv[a] * uv;
      for (int i = 0; i < np; ++i) delta(i * n + a) = g(i);
      delta(n * np + vdim + a) = g(np);
    }
    return true;
  }

  // Reference dense Jacobian, for the damped fallback and for tests.
  Eigen::MatrixXd dense_jacobian() const {
    const Network& net = instance->network;
    const int np = players;
    const int dim = unknowns();
    const int voff = n * np;
    const int uoff = n * np + m * np;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(dim, dim);
    for (int i = 0; i < np; ++i)
      for (int a = 0; a < n; ++a) {
        const int k = i * n + a;
        for (int j = 0; j < np; ++j)
          jac(k, j * n + a) = db_x(k) * params->c_int[i](a) * (i == j ? 2.0 : 1.0);
        jac(k, k) += da_x(k);
        const Arc& arc = net.arc(a);
        jac(k, voff + i * m + arc.head - 1) += db_x(k);
        jac(k, voff + i * m + arc.tail - 1) -= db_x(k);
        jac(k, uoff + a) = db_x(k);
      }
    int row = voff;
    for (int i = 0; i < np; ++i) {
      for (int a = 0; a < n; ++a) {
        const Arc& arc = net.arc(a);
        if (arc.tail - 1 < m - 1) jac(row + arc.tail - 1, i * n + a) -= 1.0;
        if (arc.head - 1 < m - 1) jac(row + arc.head - 1, i * n + a) += 1.0;
      }
      jac(row + m - 1, voff + i * m + m - 1) = 1.0;
      row += m;
    }
    for (int a = 0; a < n; ++a) {
      for (int j = 0; j < np; ++j) jac(uoff + a, j * n + a) = -db_u(a);
      jac(uoff + a, uoff + a) = da_u(a);
    }
    return jac;
  }

  EquilibriumSolution snapshot() const {
    EquilibriumSolution sol;
    sol.flows.resize(players);
    sol.duals_v.resize(players);
    sol.duals_u.resize(players);
    for (int i = 0; i < players; ++i) {
      sol.flows[i] = x.segment(i * n, n);
      sol.duals_v[i] = v.segment(i * m, m);
      sol.duals_u[i] = w.segment(i * n, n);  // stationarity defines u
    }
    sol.dual_capacity = ubar;
    return sol;
  }
};

// --- start points ----------------------------------------------------------

Eigen::VectorXd min_norm_conservation_flow(const Network& net, const Eigen::VectorXd& f) {
  const Eigen::MatrixXd d = incidence_matrix(net).cast<double>();
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(d);
  return cod.solve(f);
}

// Even split of the unit demand over the shortest-hop DAG between the OD
// endpoints.
Eigen::VectorXd shortest_hop_split(const Network& net, const OdPair& od) {
  const int m = net.node_count();
  const int n = net.arc_count();
  auto bfs = [&](int source, bool reverse) {
    std::vector<int> dist(m, -1);
    std::queue<int> queue;
    dist[source - 1] = 0;
    queue.push(source);
    while (!queue.empty()) {
      const int node = queue.front();
      queue.pop();
      for (int a : reverse ? net.in_arcs(node) : net.out_arcs(node)) {
        const int next = reverse ? net.arc(a).tail : net.arc(a).head;
        if (dist[next - 1] < 0) {
          dist[next - 1] = dist[node - 1] + 1;
          queue.push(next);
        }
      }
    }
    return dist;
  };
  const std::vector<int> from_origin = bfs(od.origin, false);
  const std::vector<int> to_destination = bfs(od.destination, true);
  const int length = from_origin[od.destination - 1];
  if (length < 0) throw Error("destination unreachable from origin");

  Eigen::VectorXd flow = Eigen::VectorXd::Zero(n);
  std::vector<double> inflow(m, 0.0);
  inflow[od.origin - 1] = 1.0;
  std::vector<int> order(m);
  for (int i = 0; i < m; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return from_origin[a] < from_origin[b]; });
  for (int node0 : order) {
    if (inflow[node0] <= 0.0 || node0 == od.destination - 1) continue;
    std::vector<int> dag_arcs;
    for (int a : net.out_arcs(node0 + 1)) {
      const int head = net.arc(a).head - 1;
      if (to_destination[head] >= 0 &&
          from_origin[node0] + 1 + to_destination[head] == length &&
          from_origin[head] == from_origin[node0] + 1)
        dag_arcs.push_back(a);
    }
    if (dag_arcs.empty()) continue;
    const double share = inflow[node0] / static_cast<double>(dag_arcs.size());
    for (int a : dag_arcs) {
      flow(a) += share;
      inflow[net.arc(a).head - 1] += share;
    }
  }
  return flow;
}

// One unit on the per-player cheapest path with interactions ignored
// (arc weight: interaction cost plus base cost of a lone unit).
Eigen::VectorXd myopic_path_flow(const Network& net, const OdPair& od,
                                 const Eigen::VectorXd& weight) {
  const int m = net.node_count();
  std::vector<double> dist(m, std::numeric_limits<double>::infinity());
  std::vector<int> parent_arc(m, -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<Item>> heap;
  dist[od.origin - 1] = 0.0;
  heap.push({0.0, od.origin - 1});
  while (!heap.empty()) {
    const auto [d0, node0] = heap.top();
    heap.pop();
    if (d0 > dist[node0]) continue;
    for (int a : net.out_arcs(node0 + 1)) {
      const int next = net.arc(a).head - 1;
      const double nd = d0 + weight(a);
      if (nd < dist[next] - 1e-15) {
        dist[next] = nd;
        parent_arc[next] = a;
        heap.push({nd, next});
      }
    }
  }
  Eigen::VectorXd flow = Eigen::VectorXd::Zero(net.arc_count());
  int node = od.destination - 1;
  while (node != od.origin - 1) {
    const int a = parent_arc[node];
    if (a < 0) throw Error("destination unreachable from origin");
    flow(a) = 1.0;
    node = net.arc(a).tail - 1;
  }
  return flow;
}

Eigen::VectorXd make_start(const GameInstance& instance,
                           const CostParameterization& params, StartPoint kind) {
  const int n = instance.network.arc_count();
  const int players = instance.players;
  Eigen::VectorXd x(n * players);
  switch (kind) {
    case StartPoint::Zeros: {
      // All-zeros flows, then equality-feasibility restoration by the
      // minimum-norm conservation solve.
      const Eigen::VectorXd f = demand_vector(instance.network, instance.od);
      const Eigen::VectorXd restored = min_norm_conservation_flow(instance.network, f);
      for (int i = 0; i < players; ++i) x.segment(i * n, n) = restored;
      break;
    }
    case StartPoint::UniformShortestHopSplit: {
      const Eigen::VectorXd split = shortest_hop_split(instance.network, instance.od);
      for (int i = 0; i < players; ++i) x.segment(i * n, n) = split;
      break;
    }
    case StartPoint::MyopicShortestPath: {
      for (int i = 0; i < players; ++i)
        x.segment(i * n, n) = myopic_path_flow(instance.network, instance.od,
                                               params.c_int[i] + params.c_base[i]);
      break;
    }
  }
  return x;
}

struct StartOutcome {
  bool converged = false;
  double residual = std::numeric_limits<double>::infinity();
  int iterations = 0;
  EquilibriumSolution solution;
};

StartOutcome run_newton(NewtonWorkspace& ws, const GameInstance& instance,
                        const CostParameterization& params,
                        const SolverSettings& settings, StartPoint start) {
  const int n = ws.n, m = ws.m, players = ws.players;
  ws.x = make_start(instance, params, start);
  ws.v = Eigen::VectorXd::Zero(m * players);
  ws.ubar = Eigen::VectorXd::Zero(n);

  StartOutcome best;
  Eigen::VectorXd residual = ws.residual();
  double merit = 0.5 * residual.squaredNorm();

  const auto apply = [&](const Eigen::VectorXd& z0, const Eigen::VectorXd& d, double t) {
    ws.x = z0.head(n * players) + t * d.head(n * players);
    ws.v = z0.segment(n * players, m * players) + t * d.segment(n * players, m * players);
    ws.ubar = z0.tail(n) + t * d.tail(n);
  };

  for (int iter = 0; iter < settings.max_iterations; ++iter) {
    // Convergence is judged on the scored KKT report, not the FB merit.
    EquilibriumSolution candidate = ws.snapshot();
    const double scored = kkt_residuals(instance, params, candidate).max();
    if (settings.trace)
      (*settings.trace) << "iter " << iter << " merit " << merit << " kkt " << scored
                        << "\n";
    if (scored < best.residual) {
      best.residual = scored;
      best.solution = std::move(candidate);
      best.iterations = iter;
    }
    if (scored <= settings.tolerance) {
      best.converged = true;
      return best;
    }

    Eigen::VectorXd direction;
    bool have_direction = ws.newton_direction(-residual, direction);
    if (!have_direction) {
      Eigen::MatrixXd jac = ws.dense_jacobian();
      jac.diagonal().array() += 1e-8 * (1.0 + jac.cwiseAbs().maxCoeff());
      direction = jac.partialPivLu().solve(-residual);
      have_direction = direction.allFinite();
      if (!have_direction) break;
    }

    Eigen::VectorXd z0(ws.unknowns());
    z0 << ws.x, ws.v, ws.ubar;

    double t = 1.0;
    bool accepted = false;
    while (t >= 1e-12) {
      apply(z0, direction, t);
      residual = ws.residual();
      const double new_merit = 0.5 * residual.squaredNorm();
      if (new_merit <= (1.0 - 2.0 * settings.armijo_constant * t) * merit) {
        merit = new_merit;
        accepted = true;
        break;
      }
      t *= settings.line_search_shrink;
    }
    if (!accepted) {
      // Steepest descent on the merit function as a safeguard.
      apply(z0, direction, 0.0);
      residual = ws.residual();
      const Eigen::MatrixXd jac = ws.dense_jacobian();
      Eigen::VectorXd grad = jac.transpose() * residual;
      const double gnorm = grad.norm();
      if (gnorm < 1e-14) break;
      const Eigen::VectorXd d = -grad / gnorm;
      double tg = 1.0;
      bool grad_ok = false;
      while (tg >= 1e-14) {
        apply(z0, d, tg);
        residual = ws.residual();
        const double new_merit = 0.5 * residual.squaredNorm();
        if (new_merit < merit - settings.armijo_constant * tg * gnorm) {
          merit = new_merit;
          grad_ok = true;
          break;
        }
        tg *= settings.line_search_shrink;
      }
      if (!grad_ok) break;  // stalled: let the next start try
    }
  }

  EquilibriumSolution candidate = ws.snapshot();
  const double scored = kkt_residuals(instance, params, candidate).max();
  if (scored < best.residual) {
    best.residual = scored;
    best.solution = std::move(candidate);
    best.iterations = settings.max_iterations;
  }
  best.converged = best.residual <= settings.tolerance;
  return best;
}

}  // namespace

EquilibriumResult solve_equilibrium(const GameInstance& instance,
                                    const CostParameterization& params,
                                    const SolverSettings& settings) {
  settings.validate();
  instance.validate();
  params.validate();
  if (params.players() != instance.players)
    throw Error("cost parameterization does not cover all players");
  if (params.arc_count() != instance.network.arc_count())
    throw Error("cost parameterization arc count mismatch");

  EquilibriumResult result;
  const SpectralReport spectral = spectral_check(params, instance.players);
  result.info.min_eig_symmetric = spectral.min_eig_symmetric_part;
  result.info.uniqueness_expected = spectral.is_positive_definite;

  const FeasibilityReport feas = feasibility_check(instance);
  if (!feas.feasible) {
    result.info.status = SolveStatus::Infeasible;
    result.info.best_residual = std::numeric_limits<double>::infinity();
    return result;
  }

  NewtonWorkspace ws;
  ws.bind(instance, params);

  StartOutcome best;
  std::vector<StartOutcome> all;
  all.reserve(settings.start_points.size());
  for (size_t s = 0; s < settings.start_points.size(); ++s) {
    all.push_back(run_newton(ws, instance, params, settings, settings.start_points[s]));
    const StartOutcome& outcome = all.back();
    if (outcome.residual < best.residual) {
      best = outcome;
      result.info.start_used = static_cast<int>(s);
    }
    if (outcome.converged && !settings.run_all_starts) break;
  }
  if (settings.run_all_starts) {
    double agreement = 0.0;
    int count = 0;
    for (size_t i = 0; i < all.size(); ++i) {
      if (!all[i].converged) continue;
      ++count;
      for (size_t j = i + 1; j < all.size(); ++j) {
        if (!all[j].converged) continue;
        for (int p = 0; p < instance.players; ++p)
          agreement = std::max(agreement,
                               (all[i].solution.flows[p] - all[j].solution.flows[p])
                                   .lpNorm<Eigen::Infinity>());
      }
    }
    result.info.start_agreement_inf_norm = agreement;
    result.info.converged_starts = count;
  }

  result.solution = best.solution;
  result.solution.kkt_residual = best.residual;
  result.info.best_residual = best.residual;
  result.info.newton_iterations = best.iterations;
  result.info.status = best.converged ? SolveStatus::Converged : SolveStatus::DidNotConverge;
  return result;
}

FeasibilityReport feasibility_check(const GameInstance& instance) {
  instance.validate();
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
  const LpResult res = solve_lp(builder.build());
  FeasibilityReport report;
  report.feasible = res.status == LpStatus::Optimal;
  report.infeasibility = report.feasible ? 0.0 : res.primal_residual;
  report.certificate = res.duals;
  return report;
}

}  // namespace rgio
