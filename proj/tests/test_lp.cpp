#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <vector>

#include <doctest.h>

#include "rgio/lp.hpp"

using namespace rgio;

namespace {

// Independent oracle: enumerate every basis subset and every nonbasic bound
// assignment, keeping the best feasible vertex. Exponential, so only for
// tiny programs; free variables must end up basic at any vertex, which the
// enumeration respects by skipping assignments that would pin them.
struct BruteForceResult {
  bool feasible = false;
  double objective = 0.0;
};

BruteForceResult brute_force_lp(const LinearProgram& lp) {
  const int n = lp.num_vars();
  BruteForceResult best;

  // Row-reduce [A | b] so redundant equalities do not hide vertices; an
  // inconsistent reduced row certifies infeasibility outright.
  Eigen::MatrixXd ab(lp.num_rows(), n + 1);
  ab.leftCols(n) = Eigen::MatrixXd(lp.constraints);
  ab.col(n) = lp.rhs;
  int rank = 0;
  for (int col = 0; col < n && rank < ab.rows(); ++col) {
    int pivot = -1;
    double mag = 1e-9;
    for (int r = rank; r < ab.rows(); ++r)
      if (std::abs(ab(r, col)) > mag) {
        mag = std::abs(ab(r, col));
        pivot = r;
      }
    if (pivot < 0) continue;
    ab.row(rank).swap(ab.row(pivot));
    for (int r = 0; r < ab.rows(); ++r)
      if (r != rank && ab(r, col) != 0.0)
        ab.row(r) -= ab(r, col) / ab(rank, col) * ab.row(rank);
    ++rank;
  }
  for (int r = rank; r < ab.rows(); ++r)
    if (std::abs(ab(r, n)) > 1e-7) return best;  // 0 = nonzero: infeasible

  const Eigen::MatrixXd a = ab.topRows(rank).leftCols(n);
  const Eigen::VectorXd b_reduced = ab.topRows(rank).col(n);
  const Eigen::MatrixXd a_full = Eigen::MatrixXd(lp.constraints);
  const int m = rank;

  std::vector<int> combo(m);
  std::function<void(int, int)> visit = [&](int start, int depth) {
    if (depth == m) {
      Eigen::MatrixXd basis(m, m);
      for (int k = 0; k < m; ++k) basis.col(k) = a.col(combo[k]);
      Eigen::FullPivLU<Eigen::MatrixXd> lu(basis);
      if (!lu.isInvertible()) return;
      std::vector<int> nonbasic;
      for (int j = 0; j < n; ++j)
        if (std::find(combo.begin(), combo.end(), j) == combo.end())
          nonbasic.push_back(j);
      const int nn = static_cast<int>(nonbasic.size());
      for (long mask = 0; mask < (1L << nn); ++mask) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
        bool valid = true;
        for (int k = 0; k < nn && valid; ++k) {
          const int j = nonbasic[k];
          const double bound = (mask >> k) & 1 ? lp.upper(j) : lp.lower(j);
          if (!std::isfinite(bound)) valid = false;
          x(j) = bound;
        }
        if (!valid) continue;
        Eigen::VectorXd rhs = b_reduced;
        for (int j : nonbasic) rhs -= a.col(j) * x(j);
        const Eigen::VectorXd xb = lu.solve(rhs);
        for (int k = 0; k < m; ++k) x(combo[k]) = xb(k);
        bool ok = true;
        for (int j = 0; j < n && ok; ++j)
          ok = x(j) >= lp.lower(j) - 1e-8 && x(j) <= lp.upper(j) + 1e-8;
        if (ok) ok = (a_full * x - lp.rhs).lpNorm<Eigen::Infinity>() < 1e-7;
        if (!ok) continue;
        const double obj = lp.objective.dot(x);
        if (!best.feasible || obj < best.objective) {
          best.feasible = true;
          best.objective = obj;
        }
      }
      return;
    }
    for (int j = start; j < n; ++j) {
      combo[depth] = j;
      visit(j + 1, depth + 1);
    }
  };
  if (m == 0) {
    // Objective minimized by pushing each variable to its favorable bound.
    best.feasible = true;
    for (int j = 0; j < n; ++j) {
      const double c = lp.objective(j);
      if (c > 0) best.objective += c * lp.lower(j);
      if (c < 0) best.objective += c * lp.upper(j);
    }
    return best;
  }
  visit(0, 0);
  return best;
}

LinearProgram make_lp(const std::vector<double>& obj,
                      const std::vector<std::vector<double>>& rows,
                      const std::vector<double>& rhs,
                      const std::vector<double>& lo,
                      const std::vector<double>& hi) {
  LpBuilder b;
  for (size_t j = 0; j < obj.size(); ++j) b.add_variable(lo[j], hi[j], obj[j]);
  for (size_t r = 0; r < rows.size(); ++r) {
    std::vector<LinearTerm> terms;
    for (size_t j = 0; j < rows[r].size(); ++j)
      if (rows[r][j] != 0.0) terms.push_back({static_cast<int>(j), rows[r][j]});
    b.add_equality(terms, rhs[r]);
  }
  return b.build();
}

}  // namespace

TEST_CASE("pinned variable: min z with z = 1, 0 <= z <= 2") {
  const LinearProgram lp = make_lp({1.0}, {{1.0}}, {1.0}, {0.0}, {2.0});
  const LpResult res = solve_lp(lp);
  REQUIRE(res.status == LpStatus::Optimal);
  CHECK(res.z(0) == doctest::Approx(1.0));
  CHECK(res.objective_value == doctest::Approx(1.0));
}

TEST_CASE("unbounded below is detected") {
  // z free below with only an upper bound.
  const LinearProgram lp = make_lp({1.0}, {}, {}, {-kInfinity}, {1.0});
  CHECK(solve_lp(lp).status == LpStatus::Unbounded);

  // Same variable but maximizing it hits the bound instead.
  const LinearProgram lp2 = make_lp({-1.0}, {}, {}, {-kInfinity}, {1.0});
  const LpResult res2 = solve_lp(lp2);
  REQUIRE(res2.status == LpStatus::Optimal);
  CHECK(res2.z(0) == doctest::Approx(1.0));

  // Unboundedness through a constraint: x - y = 0, minimize x with both free above.
  const LinearProgram lp3 =
      make_lp({1.0, 0.0}, {{1.0, -1.0}}, {0.0}, {-kInfinity, -kInfinity},
              {kInfinity, kInfinity});
  CHECK(solve_lp(lp3).status == LpStatus::Unbounded);
}

TEST_CASE("infeasible box: x + y = 6 with 0 <= x,y <= 2") {
  const LinearProgram lp =
      make_lp({1.0, 1.0}, {{1.0, 1.0}}, {6.0}, {0.0, 0.0}, {2.0, 2.0});
  const LpResult res = solve_lp(lp);
  CHECK(res.status == LpStatus::Infeasible);
}

TEST_CASE("2x2 transportation toy matches basis enumeration") {
  // Assignment with costs [[4,6],[2,5]]: identity = 9, swap = 8.
  LpBuilder b;
  const int z11 = b.add_variable(0, kInfinity, 4);
  const int z12 = b.add_variable(0, kInfinity, 6);
  const int z21 = b.add_variable(0, kInfinity, 2);
  const int z22 = b.add_variable(0, kInfinity, 5);
  b.add_equality({{z11, 1}, {z12, 1}}, 1);
  b.add_equality({{z21, 1}, {z22, 1}}, 1);
  b.add_equality({{z11, 1}, {z21, 1}}, 1);
  b.add_equality({{z12, 1}, {z22, 1}}, 1);
  const LinearProgram lp = b.build();

  // The two feasible bases are the two permutation assignments.
  const double identity_cost = 4 + 5;
  const double swap_cost = 6 + 2;
  const double enumerated = std::min(identity_cost, swap_cost);

  const LpResult res = solve_lp(lp);
  REQUIRE(res.status == LpStatus::Optimal);
  CHECK(res.objective_value == doctest::Approx(enumerated));
  CHECK(res.z(z12) == doctest::Approx(1.0));
  CHECK(res.z(z21) == doctest::Approx(1.0));

  const BruteForceResult oracle = brute_force_lp(lp);
  REQUIRE(oracle.feasible);
  CHECK(res.objective_value == doctest::Approx(oracle.objective));
}

TEST_CASE("random bounded programs agree with the vertex enumeration oracle") {
  std::mt19937_64 rng(20240817);
  auto uniform = [&](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  };
  int solved = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 3 + static_cast<int>(rng() % 5);
    const int m = 1 + static_cast<int>(rng() % 3);
    std::vector<double> lo(n), hi(n), obj(n);
    for (int j = 0; j < n; ++j) {
      lo[j] = uniform(-2.0, 0.0);
      hi[j] = lo[j] + uniform(0.5, 3.0);
      obj[j] = std::round(uniform(-5.0, 5.0));
    }
    std::vector<std::vector<double>> rows(m, std::vector<double>(n, 0.0));
    for (int r = 0; r < m; ++r)
      for (int j = 0; j < n; ++j)
        if (rng() % 3 != 0) rows[r][j] = std::round(uniform(-3.0, 3.0));
    // Right-hand side from an interior point so the program is feasible.
    std::vector<double> rhs(m, 0.0);
    for (int r = 0; r < m; ++r)
      for (int j = 0; j < n; ++j)
        rhs[r] += rows[r][j] * (0.5 * (lo[j] + hi[j]));
    const LinearProgram lp = make_lp(obj, rows, rhs, lo, hi);
    const BruteForceResult oracle = brute_force_lp(lp);
    const LpResult res = solve_lp(lp);
    REQUIRE(oracle.feasible);
    REQUIRE(res.status == LpStatus::Optimal);
    CHECK(res.objective_value == doctest::Approx(oracle.objective).epsilon(1e-8));
    CHECK(res.primal_residual <= 1e-9 * (1.0 + lp.rhs.cwiseAbs().maxCoeff()));
    CHECK(res.duality_gap <= 1e-9);
    CHECK(res.complementarity <= 1e-8);
    ++solved;
  }
  CHECK(solved == 40);
}

TEST_CASE("redundant equality rows are tolerated") {
  // Same row twice: consistent, rank deficient.
  const LinearProgram lp = make_lp({1.0, 2.0}, {{1.0, 1.0}, {1.0, 1.0}}, {1.0, 1.0},
                                   {0.0, 0.0}, {5.0, 5.0});
  const LpResult res = solve_lp(lp);
  REQUIRE(res.status == LpStatus::Optimal);
  CHECK(res.objective_value == doctest::Approx(1.0));
  CHECK(res.z(0) == doctest::Approx(1.0));
}

TEST_CASE("l1 split groups price the absolute value") {
  SUBCASE("expression fixed at -2 splits into (0, 2)") {
    LpBuilder b;
    const int fixed = b.add_variable(-2.0, -2.0, 0.0);
    const L1SplitGroup g =
        linearize_l1_group(b, {AffineExpression{{{fixed, 1.0}}, 0.0}});
    const LpResult res = solve_lp(b.build());
    REQUIRE(res.status == LpStatus::Optimal);
    CHECK(res.z(g.plus_variables[0]) == doctest::Approx(0.0));
    CHECK(res.z(g.minus_variables[0]) == doctest::Approx(2.0));
    CHECK(res.objective_value == doctest::Approx(2.0));
  }
  SUBCASE("zero expression contributes nothing") {
    LpBuilder b;
    const int fixed = b.add_variable(0.0, 0.0, 0.0);
    linearize_l1_group(b, {AffineExpression{{{fixed, 1.0}}, 0.0}});
    const LpResult res = solve_lp(b.build());
    REQUIRE(res.status == LpStatus::Optimal);
    CHECK(res.objective_value == doctest::Approx(0.0));
  }
  SUBCASE("random fixed expressions reproduce the exact l1 norm") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 10; ++trial) {
      LpBuilder b;
      std::vector<AffineExpression> exprs;
      double norm = 0.0;
      const int q = 1 + static_cast<int>(rng() % 6);
      for (int k = 0; k < q; ++k) {
        const double val = (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5) * 8.0;
        const int v = b.add_variable(val, val, 0.0);
        const double c = 1.0 + static_cast<double>(rng() % 3);
        const double shift = (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5) * 2.0;
        exprs.push_back(AffineExpression{{{v, c}}, shift});
        norm += std::abs(c * val + shift);
      }
      const L1SplitGroup g = linearize_l1_group(b, exprs);
      const LpResult res = solve_lp(b.build());
      REQUIRE(res.status == LpStatus::Optimal);
      CHECK(res.objective_value == doctest::Approx(norm).epsilon(1e-9));
      for (size_t k = 0; k < g.plus_variables.size(); ++k) {
        const double prod =
            res.z(g.plus_variables[k]) * res.z(g.minus_variables[k]);
        CHECK(prod <= 1e-9);  // no simultaneous positive split
      }
    }
  }
}

TEST_CASE("identical input yields identical output (determinism)") {
  std::mt19937_64 rng(5150);
  auto uniform = [&](double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  };
  const int n = 8, m = 3;
  std::vector<double> lo(n), hi(n), obj(n);
  for (int j = 0; j < n; ++j) {
    lo[j] = 0.0;
    hi[j] = uniform(1.0, 4.0);
    obj[j] = std::round(uniform(-4.0, 4.0));
  }
  std::vector<std::vector<double>> rows(m, std::vector<double>(n, 0.0));
  std::vector<double> rhs(m, 0.0);
  for (int r = 0; r < m; ++r)
    for (int j = 0; j < n; ++j) {
      rows[r][j] = std::round(uniform(-2.0, 2.0));
      rhs[r] += rows[r][j] * 0.25 * hi[j];
    }
  const LinearProgram lp = make_lp(obj, rows, rhs, lo, hi);
  const LpResult a = solve_lp(lp);
  const LpResult b = solve_lp(lp);
  REQUIRE(a.status == LpStatus::Optimal);
  REQUIRE(b.status == LpStatus::Optimal);
  CHECK(a.iterations == b.iterations);
  CHECK((a.z - b.z).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(a.objective_value == b.objective_value);
}

TEST_CASE("resolver warm restarts match fresh solves") {
  LpBuilder b;
  for (int j = 0; j < 4; ++j) b.add_variable(0.0, 2.0, 1.0);
  b.add_equality({{0, 1}, {1, 1}, {2, 1}, {3, 1}}, 3.0);
  const LinearProgram lp = b.build();

  LpResolver resolver(lp);
  const LpResult& first = resolver.solve();
  REQUIRE(first.status == LpStatus::Optimal);

  std::mt19937_64 rng(321);
  for (int round = 0; round < 8; ++round) {
    Eigen::VectorXd c(4);
    for (int j = 0; j < 4; ++j)
      c(j) = std::round((static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5) * 10.0);
    const LpResult& warm = resolver.resolve(c);
    LinearProgram fresh = lp;
    fresh.objective = c;
    const LpResult cold = solve_lp(fresh);
    REQUIRE(warm.status == LpStatus::Optimal);
    REQUIRE(cold.status == LpStatus::Optimal);
    CHECK(warm.objective_value == doctest::Approx(cold.objective_value).epsilon(1e-10));
  }
}

TEST_CASE("lp file export writes the fixed textual format") {
  LpBuilder b;
  b.add_variable(0.0, 2.0, 1.0, "alpha");
  b.add_variable(-kInfinity, kInfinity, -2.0, "beta");
  b.add_equality({{0, 1.0}, {1, -1.0}}, 0.5);
  write_lp_file(b.build(), "/tmp/rgio_export.lp");
  std::ifstream in("/tmp/rgio_export.lp");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("Minimize") != std::string::npos);
  CHECK(text.find("alpha") != std::string::npos);
  CHECK(text.find("beta free") != std::string::npos);
  CHECK(text.find("= 0.5") != std::string::npos);
}
