#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "povmsim/conic/problem.hpp"
#include "povmsim/conic/solver.hpp"
#include "povmsim/constructions.hpp"

using namespace povmsim;
using namespace povmsim::conic;

TEST_CASE("realification isometry") {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int rep = 0; rep < 50; ++rep) {
    int k = 2 + static_cast<int>(rng() % 4);
    Mat a(k, k), b(k, k);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        a(i, j) = cxd(u(rng), u(rng));
        b(i, j) = cxd(u(rng), u(rng));
      }
    a = Mat((a + a.adjoint()) / 2.0);
    b = Mat((b + b.adjoint()) / 2.0);
    double frob = frobenius_inner(a, b).real();
    double dot = svec(a).dot(svec(b));
    CHECK(frob == Catch::Approx(dot).margin(1e-13));
    CHECK(max_abs(Mat(smat(svec(a), k) - a)) < 1e-15);
  }
}

TEST_CASE("maximize v with v*I <= I") {
  // variables: v free, slack S psd 2x2; rows: v*I + S = I
  ConicProblem prob;
  prob.maximize = true;
  int v = prob.add_free();
  int S = prob.add_psd_block(2);
  prob.set_objective(v, 0, 1.0);
  for (int coord = 0; coord < 4; ++coord) {
    int row = prob.new_row(coord < 2 ? 1.0 : 0.0);  // svec(I) = (1,1,0,0)
    prob.add_entry(row, v, 0, coord < 2 ? 1.0 : 0.0);
    prob.add_entry(row, S, coord, 1.0);
  }
  ConicSolution sol = solve(prob);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.objective == Catch::Approx(1.0).margin(1e-7));
  CHECK(sol.scalar_value(prob, v) == Catch::Approx(1.0).margin(1e-7));
}

TEST_CASE("small LP via nonneg scalars") {
  // max x0 + 2 x1  s.t. x0 + x1 + slack = 1, x >= 0  -> optimum 2
  ConicProblem prob;
  prob.maximize = true;
  int x0 = prob.add_nonneg(), x1 = prob.add_nonneg(), sl = prob.add_nonneg();
  prob.set_objective(x0, 0, 1.0);
  prob.set_objective(x1, 0, 2.0);
  int row = prob.new_row(1.0);
  prob.add_entry(row, x0, 0, 1.0);
  prob.add_entry(row, x1, 0, 1.0);
  prob.add_entry(row, sl, 0, 1.0);
  ConicSolution sol = solve(prob);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.objective == Catch::Approx(2.0).margin(1e-7));
}

TEST_CASE("LP with a free variable uses the dense path") {
  // max v s.t. v - x = 0, x + s = 3, x,s >= 0  -> v = 3
  ConicProblem prob;
  prob.maximize = true;
  int v = prob.add_free();
  int x = prob.add_nonneg(), s = prob.add_nonneg();
  prob.set_objective(v, 0, 1.0);
  int r0 = prob.new_row(0.0);
  prob.add_entry(r0, v, 0, 1.0);
  prob.add_entry(r0, x, 0, -1.0);
  int r1 = prob.new_row(3.0);
  prob.add_entry(r1, x, 0, 1.0);
  prob.add_entry(r1, s, 0, 1.0);
  ConicSolution sol = solve(prob);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.objective == Catch::Approx(3.0).margin(1e-7));
}

TEST_CASE("primal infeasibility detected with certificate") {
  // S psd, tr(S) = -1: infeasible
  ConicProblem prob;
  int S = prob.add_psd_block(2);
  int row = prob.new_row(-1.0);
  prob.add_entry(row, S, 0, 1.0);
  prob.add_entry(row, S, 1, 1.0);
  ConicSolution sol = solve(prob);
  CHECK(sol.status == SolveStatus::PrimalInfeasible);
}

TEST_CASE("dual infeasibility (unbounded objective) detected") {
  ConicProblem prob;
  prob.maximize = true;
  int t = prob.add_free();
  int s = prob.add_nonneg();
  prob.set_objective(t, 0, 1.0);
  int row = prob.new_row(0.0);
  prob.add_entry(row, s, 0, 1.0);  // s = 0; t unconstrained
  (void)t;
  ConicSolution sol = solve(prob);
  CHECK(sol.status == SolveStatus::DualInfeasible);
}

TEST_CASE("presolve") {
  SECTION("zero-trace psd block pinned") {
    ConicProblem prob;
    int S = prob.add_psd_block(2);
    int T = prob.add_psd_block(2);
    (void)S;
    (void)T;
    int r0 = prob.new_row(0.0);  // tr(S) = 0 -> S = 0
    prob.add_entry(r0, 0, 0, 1.0);
    prob.add_entry(r0, 0, 1, 1.0);
    int r1 = prob.new_row(1.0);  // tr(T) = 1
    prob.add_entry(r1, 1, 0, 1.0);
    prob.add_entry(r1, 1, 1, 1.0);
    PresolveResult pre = presolve(prob);
    CHECK(!pre.infeasible);
    CHECK(pre.var_map[0] == -1);
    CHECK(pre.var_map[1] == 0);
    CHECK(pre.reduced.num_rows() == 1);
  }
  SECTION("duplicate rows merged, conflicting duplicates infeasible") {
    ConicProblem prob;
    int x = prob.add_nonneg();
    int y = prob.add_nonneg();
    int r0 = prob.new_row(1.0);
    prob.add_entry(r0, x, 0, 1.0);
    prob.add_entry(r0, y, 0, 1.0);
    int r1 = prob.new_row(1.0);
    prob.add_entry(r1, x, 0, 1.0);
    prob.add_entry(r1, y, 0, 1.0);
    PresolveResult pre = presolve(prob);
    CHECK(pre.reduced.num_rows() == 1);

    ConicProblem bad = prob;
    bad.rhs[1] = 2.0;
    PresolveResult pre2 = presolve(bad);
    CHECK(pre2.infeasible);
  }
  SECTION("fixed scalar eliminated and mapped back") {
    ConicProblem prob;
    prob.maximize = true;
    int v = prob.add_free();
    int x = prob.add_nonneg();
    prob.set_objective(v, 0, 1.0);
    int r0 = prob.new_row(0.25);  // v = 0.25 fixed
    prob.add_entry(r0, v, 0, 1.0);
    int r1 = prob.new_row(1.0);
    prob.add_entry(r1, x, 0, 1.0);
    ConicSolution sol = solve(prob);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(sol.objective == Catch::Approx(0.25).margin(1e-7));
    CHECK(sol.x(0) == Catch::Approx(0.25));
  }
}

TEST_CASE("dump format") {
  ConicProblem prob;
  prob.maximize = true;
  int v = prob.add_free();
  int S = prob.add_psd_block(2);
  prob.set_objective(v, 0, 1.0);
  int row = prob.new_row(1.0);
  prob.add_entry(row, v, 0, 1.0);
  prob.add_entry(row, S, 0, 1.0);
  std::ostringstream os;
  dump_problem(prob, os);
  std::string s = os.str();
  CHECK(s.find("sense maximize") != std::string::npos);
  CHECK(s.find("var 1 psd 2") != std::string::npos);
  CHECK(s.find("A 0 0 1") != std::string::npos);
  CHECK(s.find("rhs 0 1") != std::string::npos);
}

TEST_CASE("determinism: identical solves produce identical iterates") {
  ConicProblem prob;
  prob.maximize = true;
  int v = prob.add_free();
  int S = prob.add_psd_block(3);
  prob.set_objective(v, 0, 1.0);
  Mat target = Mat::Zero(3, 3);
  target(0, 0) = 1.0;
  target(1, 1) = 0.5;
  target(2, 2) = 0.25;
  target(0, 1) = cxd(0.1, 0.2);
  target(1, 0) = std::conj(target(0, 1));
  // v * I + S = target  (so v* = min eig of target)
  Eigen::VectorXd tv = svec(target);
  for (int coord = 0; coord < 9; ++coord) {
    int row = prob.new_row(tv(coord));
    prob.add_entry(row, v, 0, coord < 3 ? 1.0 : 0.0);
    prob.add_entry(row, S, coord, 1.0);
  }
  ConicSolution a = solve(prob), b = solve(prob);
  REQUIRE(a.status == SolveStatus::Optimal);
  CHECK(a.iterations == b.iterations);
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.objective == Catch::Approx(min_eigenvalue(target)).margin(1e-7));
}

TEST_CASE("weak duality and dual feasibility of extracted multipliers") {
  ConicProblem prob;
  prob.maximize = true;
  int v = prob.add_free();
  int S = prob.add_psd_block(2);
  prob.set_objective(v, 0, 1.0);
  Mat target(2, 2);
  target << 2.0, cxd(0.3, -0.1), cxd(0.3, 0.1), 1.0;
  Eigen::VectorXd tv = svec(target);
  for (int coord = 0; coord < 4; ++coord) {
    int row = prob.new_row(tv(coord));
    prob.add_entry(row, v, 0, coord < 2 ? 1.0 : 0.0);
    prob.add_entry(row, S, coord, 1.0);
  }
  ConicSolution sol = solve(prob);
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.gap <= 1e-6);
  CHECK(sol.objective == Catch::Approx(min_eigenvalue(target)).margin(1e-7));
  // dual feasibility of the extracted multipliers: c_int - A^T y - P^T z = 0
  Eigen::VectorXd cint(prob.num_coords);
  for (int i = 0; i < prob.num_coords; ++i) cint(i) = -prob.objective[static_cast<size_t>(i)];
  Eigen::VectorXd resid = cint;
  for (const auto& e : prob.entries) resid(e.col) -= e.val * sol.eq_dual(e.row);
  resid -= sol.cone_dual;
  CHECK(resid.cwiseAbs().maxCoeff() < 1e-6);
  // z psd
  CHECK(min_eigenvalue(sol.block_dual(prob, S)) > -1e-8);
}
