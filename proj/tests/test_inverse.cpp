#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <doctest.h>

#include "rgio/equilibrium.hpp"
#include "rgio/errors.hpp"
#include "rgio/inverse.hpp"

using namespace rgio;

namespace {

Eigen::VectorXd random_vector(std::mt19937_64& rng, int n, double lo, double hi) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i)
    v(i) = lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  return v;
}

// Observations generated by the forward solver over every OD pair.
ObservationSet make_observations(const Network& net, const CostParameterization& params,
                                 int players, double alpha_per_arc) {
  ObservationSet obs;
  obs.network = net;
  obs.players = players;
  obs.capacity = Eigen::VectorXd::Constant(net.arc_count(), alpha_per_arc);
  GameInstance inst;
  inst.network = net;
  inst.players = players;
  inst.capacity = obs.capacity;
  for (const OdPair& od : enumerate_od_pairs(net)) {
    inst.od = od;
    const EquilibriumResult res = solve_equilibrium(inst, params);
    REQUIRE(res.info.status == SolveStatus::Converged);
    obs.od_pairs.push_back(od);
    std::vector<Eigen::VectorXd> x = res.solution.flows;
    for (auto& xi : x) xi = xi.cwiseMax(0.0);  // clip solver-level noise
    obs.flows.push_back(std::move(x));
  }
  return obs;
}

}  // namespace

TEST_CASE("variable counts by construction: N=1, K=1, n=2, m=2 gives 18") {
  ObservationSet obs;
  obs.network = Network(2, {{1, 2}, {1, 2}}, "parallel");
  obs.players = 1;
  obs.capacity = Eigen::VectorXd::Constant(2, 2.0);
  obs.od_pairs = {{1, 2}};
  Eigen::VectorXd x(2);
  x << 0.5, 0.5;
  obs.flows = {{x}};

  const auto bounds = ParameterBounds::uniform(2, 1, 5, 5, 20);
  const ResidualProgram program =
      build_residual_program(obs, bounds, CostMode::SharedAcrossPlayers);
  const VariableCountBreakdown b = actual_variable_count(program);
  CHECK(b.v == 2);
  CHECK(b.u == 2);
  CHECK(b.ubar == 2);
  CHECK(b.c_int == 2);
  CHECK(b.c_base == 2);
  CHECK(b.l1_split == 8);  // stationarity 4, comp#1 2, comp#2 2
  CHECK(b.total() == 18);
  CHECK(program.lp.num_vars() == 18);

  // Doubling K doubles every per-k family.
  obs.od_pairs.push_back({2, 1});
  Eigen::VectorXd back(2);
  back << 0.0, 0.0;
  // Route the reverse demand by adding reverse-direction flow; on this
  // network both arcs run 1 -> 2, so the reverse pair is infeasible. Use a
  // two-way network instead.
  obs.network = Network(2, {{1, 2}, {2, 1}}, "two-way");
  Eigen::VectorXd fwd(2), rev(2);
  fwd << 1.0, 0.0;
  rev << 0.0, 1.0;
  obs.flows = {{fwd}, {rev}};
  const ResidualProgram doubled =
      build_residual_program(obs, bounds, CostMode::SharedAcrossPlayers);
  const VariableCountBreakdown b2 = actual_variable_count(doubled);
  CHECK(b2.v == 2 * b.v);
  CHECK(b2.u == 2 * b.u);
  CHECK(b2.ubar == 2 * b.ubar);
  CHECK(b2.l1_split == 2 * b.l1_split);
  CHECK(b2.c_int == b.c_int);  // shared parameters do not scale with K

  // Shared vs per-player differ only in the cost families.
  ObservationSet two_player = obs;
  two_player.players = 2;
  two_player.capacity = Eigen::VectorXd::Constant(2, 4.0);
  two_player.flows = {{fwd, fwd}, {rev, rev}};
  const auto shared_b = actual_variable_count(
      build_residual_program(two_player, bounds, CostMode::SharedAcrossPlayers));
  const auto pp_b = actual_variable_count(
      build_residual_program(two_player, bounds, CostMode::PerPlayer));
  CHECK(pp_b.c_int == 2 * shared_b.c_int);
  CHECK(pp_b.c_base == 2 * shared_b.c_base);
  CHECK(pp_b.v == shared_b.v);
  CHECK(pp_b.u == shared_b.u);
  CHECK(pp_b.ubar == shared_b.ubar);
  CHECK(pp_b.l1_split == shared_b.l1_split);
}

TEST_CASE("predicted variable counts reproduce the published polynomials") {
  using Mode = CostMode;
  struct Row {
    long long m, n;
    long long grid_shared, grid_pp, gen_shared, gen_pp;
  };
  // Frozen against an independent evaluation of the closed forms.
  const Row table[] = {
      {4, 2, 1056, 1248, 1056, 1248},
      {4, 5, 2064, 2832, 2064, 2832},
      {4, 10, 3744, 5472, 3744, 5472},
      {9, 2, 18576, 22032, 18576, 22032},
      {9, 5, 36072, 49896, 36072, 49896},
      {9, 10, 65232, 96336, 65232, 96336},
      {16, 2, 122880, 145920, 122880, 145920},
      {16, 5, 238080, 330240, 238080, 330240},
      {16, 10, 430080, 637440, 430080, 637440},
      {25, 2, 510000, 606000, 510000, 606000},
      {25, 5, 987000, 1371000, 987000, 1371000},
      {25, 10, 1782000, 2646000, 1782000, 2646000},
  };
  for (const Row& row : table) {
    const long long side = static_cast<long long>(std::sqrt(static_cast<double>(row.m)));
    const long long grid_arcs = (side - 1) * side * 4;
    CHECK(predicted_variable_count(row.m, row.n, 0, Mode::SharedAcrossPlayers,
                                   GraphKind::Grid) == row.grid_shared);
    CHECK(predicted_variable_count(row.m, row.n, 0, Mode::PerPlayer, GraphKind::Grid) ==
          row.grid_pp);
    CHECK(predicted_variable_count(row.m, row.n, grid_arcs, Mode::SharedAcrossPlayers,
                                   GraphKind::General) == row.gen_shared);
    CHECK(predicted_variable_count(row.m, row.n, grid_arcs, Mode::PerPlayer,
                                   GraphKind::General) == row.gen_pp);
  }
  // The grid polynomials are the general ones with the grid arc count
  // substituted, so the table columns coincide pairwise.
  CHECK_THROWS_AS(
      predicted_variable_count(5, 2, 0, Mode::SharedAcrossPlayers, GraphKind::Grid),
      Error);

  // Asymptotics: doubling m with grid-like arc density scales the count by
  // ~8 (cubic growth).
  const long long m_big = 1 << 16;
  const double r = static_cast<double>(predicted_variable_count(
                       2 * m_big, 10, 8 * m_big, Mode::SharedAcrossPlayers,
                       GraphKind::General)) /
                   static_cast<double>(predicted_variable_count(
                       m_big, 10, 4 * m_big, Mode::SharedAcrossPlayers,
                       GraphKind::General));
  CHECK(r == doctest::Approx(8.0).epsilon(0.01));
}

TEST_CASE("compiled stationarity rows equal the direct expression") {
  std::mt19937_64 rng(2020);
  const Network net = build_grid(2);
  const int n = net.arc_count();
  auto params = CostParameterization::shared(random_vector(rng, n, 1, 5),
                                             random_vector(rng, n, 5, 20), 2);
  const ObservationSet obs = make_observations(net, params, 2, 2.0);
  const auto bounds = ParameterBounds::uniform(n, 1, 5, 5, 20);
  const ResidualProgram program =
      build_residual_program(obs, bounds, CostMode::SharedAcrossPlayers);
  const auto& layout = program.layout;
  const Eigen::MatrixXd dense(program.lp.constraints);

  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd z = random_vector(rng, program.lp.num_vars(), -2, 4);
    const int k = static_cast<int>(rng() % obs.od_pairs.size());
    const int i = static_cast<int>(rng() % 2);
    const int a = static_cast<int>(rng() % n);
    // Direct evaluation of the stationarity expression at z.
    Eigen::VectorXd total = Eigen::VectorXd::Zero(n);
    for (int p = 0; p < 2; ++p) total += obs.flows[k][p];
    const Arc& arc = net.arc(a);
    const double direct =
        z(layout.c_int_var(i, a)) * (obs.flows[k][i](a) + total(a)) +
        z(layout.c_base_var(i, a)) + z(layout.v_var(k, i, arc.head - 1)) -
        z(layout.v_var(k, i, arc.tail - 1)) - z(layout.u_var(k, i, a)) +
        z(layout.ubar_var(k, a));
    const double via_row = dense.row(layout.stationarity_row(k, i, a)).dot(z) +
                           z(layout.stationarity_plus(k, i, a)) -
                           z(layout.stationarity_minus(k, i, a));
    CHECK(via_row == doctest::Approx(direct).epsilon(1e-10));
  }

  // Exactly one shared capacity dual per observation: every player's
  // stationarity row for arc a references the same ubar column.
  for (int i = 0; i < 2; ++i)
    for (int a = 0; a < n; ++a)
      CHECK(dense(layout.stationarity_row(2, i, a), layout.ubar_var(2, a)) == 1.0);
}

TEST_CASE("zero data annihilates complementarity entries") {
  ObservationSet obs;
  obs.network = Network(2, {{1, 2}, {1, 2}}, "parallel");
  obs.players = 1;
  obs.capacity = Eigen::VectorXd::Constant(2, 1.0);
  obs.od_pairs = {{1, 2}};
  Eigen::VectorXd x(2);
  x << 1.0, 0.0;  // arc 1 unused, arc 0 exactly at capacity
  obs.flows = {{x}};
  const auto bounds = ParameterBounds::uniform(2, 1, 5, 5, 20);
  const ResidualProgram program =
      build_residual_program(obs, bounds, CostMode::SharedAcrossPlayers);
  const Eigen::MatrixXd dense(program.lp.constraints);
  const auto& layout = program.layout;

  // comp#1 row: only the used arc's u appears.
  CHECK(dense(layout.comp1_row(0, 0), layout.u_var(0, 0, 0)) == 1.0);
  CHECK(dense(layout.comp1_row(0, 0), layout.u_var(0, 0, 1)) == 0.0);
  // comp#2 row: arc 0 is tight (slack 0), so only arc 1's ubar appears.
  CHECK(dense(layout.comp2_row(0), layout.ubar_var(0, 0)) == 0.0);
  CHECK(dense(layout.comp2_row(0), layout.ubar_var(0, 1)) == 1.0);
}

TEST_CASE("recovery from exact observations reaches a tiny objective") {
  std::mt19937_64 rng(808017);
  const Network net = build_grid(2);
  const int n = net.arc_count();
  auto params = CostParameterization::shared(random_vector(rng, n, 1.5, 4.5),
                                             random_vector(rng, n, 6, 19), 2);
  const ObservationSet obs = make_observations(net, params, 2, 2.0);
  const auto bounds = ParameterBounds::uniform(n, 1, 5, 5, 20);
  const RecoveredParameters rec =
      recover_parameters(obs, bounds, CostMode::SharedAcrossPlayers);
  REQUIRE(rec.status == LpStatus::Optimal);
  CHECK(rec.io_objective <= 1e-5);
  CHECK(rec.objective_nonnegative);
  CHECK(rec.io_objective >= -1e-9);
  // Recovered parameters live inside the bounds.
  for (int i = 0; i < 2; ++i) {
    CHECK(rec.params.c_int[i].minCoeff() >= 1.0 - 1e-12);
    CHECK(rec.params.c_int[i].maxCoeff() <= 5.0 + 1e-12);
    CHECK(rec.params.c_base[i].minCoeff() >= 5.0 - 1e-12);
    CHECK(rec.params.c_base[i].maxCoeff() <= 20.0 + 1e-12);
  }
  // Dual estimates respect their signs.
  for (const auto& per_k : rec.duals_u)
    for (const auto& u : per_k) CHECK(u.minCoeff() >= -1e-12);
  for (const auto& ub : rec.duals_capacity) CHECK(ub.minCoeff() >= -1e-12);
}

TEST_CASE("single-observation round trip reproduces the observed flow") {
  const Network net(2, {{1, 2}, {1, 2}}, "parallel");
  GameInstance inst;
  inst.network = net;
  inst.players = 1;
  inst.capacity = Eigen::VectorXd::Constant(2, 2.0);
  inst.od = {1, 2};
  Eigen::VectorXd c_int(2), c_base(2);
  c_int << 2.0, 3.0;
  c_base << 7.0, 6.0;  // interior split: 4x + 7 = 6(1-x) + 6 at x ~ 0.5
  auto params = CostParameterization::shared(c_int, c_base, 1);
  const EquilibriumResult forward = solve_equilibrium(inst, params);
  REQUIRE(forward.info.status == SolveStatus::Converged);
  REQUIRE(forward.solution.flows[0].minCoeff() > 0.05);  // interior

  ObservationSet obs;
  obs.network = net;
  obs.players = 1;
  obs.capacity = inst.capacity;
  obs.od_pairs = {inst.od};
  obs.flows = {{forward.solution.flows[0].cwiseMax(0.0)}};
  const auto bounds = ParameterBounds::uniform(2, 1, 5, 5, 20);
  const RecoveredParameters rec =
      recover_parameters(obs, bounds, CostMode::SharedAcrossPlayers);
  REQUIRE(rec.status == LpStatus::Optimal);
  CHECK(rec.io_objective <= 1e-6);

  const EquilibriumResult replay = solve_equilibrium(inst, rec.params);
  REQUIRE(replay.info.status == SolveStatus::Converged);
  CHECK((replay.solution.flows[0] - forward.solution.flows[0]).lpNorm<Eigen::Infinity>() <=
        1e-4);
}

TEST_CASE("io objective is invariant under observation permutations") {
  std::mt19937_64 rng(13);
  const Network net = build_grid(2);
  const int n = net.arc_count();
  auto params = CostParameterization::shared(random_vector(rng, n, 1, 5),
                                             random_vector(rng, n, 5, 20), 2);
  ObservationSet obs = make_observations(net, params, 2, 2.0);
  const auto bounds = ParameterBounds::uniform(n, 1, 5, 5, 20);
  const RecoveredParameters base =
      recover_parameters(obs, bounds, CostMode::SharedAcrossPlayers);
  REQUIRE(base.status == LpStatus::Optimal);

  ObservationSet shuffled = obs;
  std::vector<size_t> perm(obs.od_pairs.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (size_t k = 0; k < perm.size(); ++k) {
    shuffled.od_pairs[k] = obs.od_pairs[perm[k]];
    shuffled.flows[k] = obs.flows[perm[k]];
  }
  const RecoveredParameters permuted =
      recover_parameters(shuffled, bounds, CostMode::SharedAcrossPlayers);
  REQUIRE(permuted.status == LpStatus::Optimal);
  CHECK(std::abs(base.io_objective - permuted.io_objective) <= 1e-9);
}

TEST_CASE("observation invariants are enforced at the gate") {
  ObservationSet obs;
  obs.network = Network(2, {{1, 2}, {1, 2}}, "parallel");
  obs.players = 1;
  obs.capacity = Eigen::VectorXd::Constant(2, 1.0);
  obs.od_pairs = {{1, 2}};
  Eigen::VectorXd x(2);
  x << 0.5, 0.5;
  obs.flows = {{x}};
  CHECK_NOTHROW(obs.validate());

  ObservationSet negative = obs;
  negative.flows[0][0](0) = -0.1;
  negative.flows[0][0](1) = 1.1;
  CHECK_THROWS_AS(negative.validate(), Error);

  ObservationSet overloaded = obs;
  overloaded.capacity = Eigen::VectorXd::Constant(2, 0.4);
  CHECK_THROWS_AS(overloaded.validate(), Error);

  ObservationSet zeroed = obs;
  zeroed.flows[0][0].setZero();
  CHECK_THROWS_AS(zeroed.validate(), Error);

  ObservationSet unbalanced = obs;
  unbalanced.flows[0][0](0) = 0.75;  // conservation broken
  CHECK_THROWS_AS(unbalanced.validate(), Error);
}

TEST_CASE("observation csv + sidecar round trip") {
  std::mt19937_64 rng(4);
  const Network net = build_grid(2);
  auto params = CostParameterization::shared(random_vector(rng, 8, 1, 5),
                                             random_vector(rng, 8, 5, 20), 2);
  const ObservationSet obs = make_observations(net, params, 2, 2.0);
  save_observation_set(obs, "/tmp/rgio_obs.csv", "/tmp/rgio_obs.json");
  const ObservationSet back = load_observation_set("/tmp/rgio_obs.csv", "/tmp/rgio_obs.json");
  REQUIRE(back.observation_count() == obs.observation_count());
  REQUIRE(back.players == obs.players);
  for (int k = 0; k < obs.observation_count(); ++k)
    for (int i = 0; i < obs.players; ++i)
      CHECK((back.flows[k][i] - obs.flows[k][i]).lpNorm<Eigen::Infinity>() == 0.0);
}
