#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "stride/errors.hpp"
#include "stride/qp.hpp"

using namespace stride;
using namespace stride::testing;

namespace {

QuadraticProgram random_qp(std::mt19937_64& rng, int n, int n_ineq,
                           int n_eq = 0) {
  std::normal_distribution<double> normal(0.0, 1.0);
  auto randn = [&](int r, int c) {
    MatX m(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) m(i, j) = normal(rng);
    }
    return m;
  };
  QuadraticProgram qp;
  const MatX g = randn(n, n);
  qp.hessian = g.transpose() * g + 1e-3 * MatX::Identity(n, n);
  qp.gradient = randn(n, 1);
  if (n_eq > 0) {
    qp.a_eq = randn(n_eq, n);
    qp.b_eq = randn(n_eq, 1);
  }
  if (n_ineq > 0) {
    qp.a_in = randn(n_ineq, n);
    // keep a point feasible: bound each row below by its value at a feasible z
    VecX z_feas = VecX::Zero(n);
    if (n_eq > 0) {
      z_feas = qp.a_eq.completeOrthogonalDecomposition().solve(qp.b_eq);
    }
    qp.b_in = qp.a_in * z_feas + randn(n_ineq, 1).cwiseAbs();
  }
  qp.finish();
  return qp;
}

}  // namespace

TEST_CASE("unconstrained minimum") {
  QuadraticProgram qp;
  qp.hessian = MatX::Identity(3, 3);
  VecX c(3);
  c << 1.0, -2.0, 0.5;
  qp.gradient = -c;
  qp.finish();
  const QpSolution sol = solve_qp(qp);
  REQUIRE(sol.status == QpStatus::kOptimal);
  CHECK((sol.z - c).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("symmetric equality projection") {
  // min |z|^2 s.t. z1 + z2 = 1
  QuadraticProgram qp;
  qp.hessian = 2.0 * MatX::Identity(2, 2);
  qp.gradient = VecX::Zero(2);
  qp.a_eq = MatX::Ones(1, 2);
  qp.b_eq = VecX::Ones(1);
  qp.finish();
  const QpSolution sol = solve_equality_qp(qp);
  REQUIRE(sol.status == QpStatus::kOptimal);
  CHECK(sol.z(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(sol.z(1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("equality KKT residual on random consistent problems") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const QuadraticProgram qp = random_qp(rng, 6, 0, 2);
    const QpSolution sol = solve_equality_qp(qp);
    REQUIRE(sol.status == QpStatus::kOptimal);
    const VecX stat =
        qp.hessian * sol.z + qp.gradient + qp.a_eq.transpose() * sol.eq_duals;
    CHECK(stat.cwiseAbs().maxCoeff() < 1e-10);
    CHECK((qp.a_eq * sol.z - qp.b_eq).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("singular equality KKT reports degenerate with condition estimate") {
  QuadraticProgram qp;
  qp.hessian = MatX::Zero(2, 2);  // singular along the constraint nullspace
  qp.gradient = VecX::Ones(2);
  qp.a_eq = MatX::Zero(1, 2);
  qp.a_eq(0, 0) = 1.0;
  qp.b_eq = VecX::Zero(1);
  qp.finish();
  const QpSolution sol = solve_equality_qp(qp);
  CHECK(sol.status == QpStatus::kDegenerate);
  CHECK(sol.condition_estimate > 1e10);
}

TEST_CASE("clamped 1-d minimum has a positive dual") {
  // min (z-2)^2 s.t. z <= 1
  QuadraticProgram qp;
  qp.hessian = 2.0 * MatX::Identity(1, 1);
  VecX b(1);
  b << -4.0;
  qp.gradient = b;
  qp.a_in = MatX::Ones(1, 1);
  qp.b_in = VecX::Ones(1);
  qp.finish();
  const QpSolution sol = solve_qp(qp);
  REQUIRE(sol.status == QpStatus::kOptimal);
  CHECK(sol.z(0) == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(sol.ineq_duals(0) > 0.0);
  CHECK(sol.active_set == std::vector<int>{0});
}

TEST_CASE("inactive constraints reproduce the equality solution") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    QuadraticProgram qp = random_qp(rng, 5, 0, 2);
    // loose box constraints that cannot be active at the optimum
    QuadraticProgram eq = qp;
    qp.a_in = MatX::Identity(5, 5);
    qp.b_in = VecX::Constant(5, 1e4);
    qp.finish();
    const QpSolution sol = solve_qp(qp);
    const QpSolution ref = solve_equality_qp(eq);
    REQUIRE(sol.status == QpStatus::kOptimal);
    REQUIRE(ref.status == QpStatus::kOptimal);
    CHECK((sol.z - ref.z).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(sol.active_set.empty());
  }
}

TEST_CASE("matches brute-force active-set enumeration on random QPs") {
  std::mt19937_64 rng(7);
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 5);       // 2..6
    const int mi = 1 + static_cast<int>(rng() % 8);      // 1..8
    const int me = static_cast<int>(rng() % 2);          // 0..1
    const QuadraticProgram qp = random_qp(rng, n, mi, me);
    const QpSolution oracle = enumerate_qp_oracle(qp);
    if (oracle.status != QpStatus::kOptimal) continue;
    const QpSolution sol = solve_qp(qp);
    REQUIRE(sol.status == QpStatus::kOptimal);
    CHECK((sol.z - oracle.z).cwiseAbs().maxCoeff() < 1e-7);
    const double obj_sol = 0.5 * sol.z.dot(qp.hessian * sol.z) +
                           qp.gradient.dot(sol.z);
    const double obj_oracle = 0.5 * oracle.z.dot(qp.hessian * oracle.z) +
                              qp.gradient.dot(oracle.z);
    CHECK(obj_sol <= obj_oracle + 1e-7);
    ++solved;
  }
  CHECK(solved > 150);  // the generator keeps almost every instance feasible
}

TEST_CASE("KKT tolerances hold at reported optima") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const QuadraticProgram qp = random_qp(rng, 6, 6, 1);
    const QpSolution sol = solve_qp(qp);
    REQUIRE(sol.status == QpStatus::kOptimal);
    // primal feasibility
    CHECK((qp.a_eq * sol.z - qp.b_eq).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((qp.a_in * sol.z - qp.b_in).maxCoeff() < 1e-8);
    // stationarity
    const VecX stat = qp.hessian * sol.z + qp.gradient +
                      qp.a_eq.transpose() * sol.eq_duals +
                      qp.a_in.transpose() * sol.ineq_duals;
    CHECK(stat.cwiseAbs().maxCoeff() < 1e-7);
    // dual feasibility and complementary slackness
    CHECK(sol.ineq_duals.minCoeff() > -1e-9);
    const VecX slack = qp.b_in - qp.a_in * sol.z;
    CHECK((sol.ineq_duals.array() * slack.array()).abs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("infeasible problems are reported") {
  QuadraticProgram qp;
  qp.hessian = MatX::Identity(1, 1);
  qp.gradient = VecX::Zero(1);
  qp.a_in = MatX::Zero(2, 1);
  qp.a_in << 1.0, -1.0;
  qp.b_in = VecX::Zero(2);
  qp.b_in << -1.0, -1.0;  // z <= -1 and z >= 1
  qp.finish();
  const QpSolution sol = solve_qp(qp);
  CHECK(sol.status == QpStatus::kInfeasible);
}

TEST_CASE("warm-started identical re-solve terminates in at most 2 iterations") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const QuadraticProgram qp = random_qp(rng, 6, 8, 1);
    const QpSolution cold = solve_qp(qp);
    if (cold.status != QpStatus::kOptimal) continue;
    const QpSolution warm = solve_qp(qp, &cold.active_set);
    REQUIRE(warm.status == QpStatus::kOptimal);
    CHECK(warm.iterations <= 2);
    CHECK((warm.z - cold.z).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("deterministic: identical inputs give bitwise-identical outputs") {
  std::mt19937_64 rng(17);
  const QuadraticProgram qp = random_qp(rng, 6, 8, 1);
  const QpSolution a = solve_qp(qp);
  const QpSolution b = solve_qp(qp);
  REQUIRE(a.status == b.status);
  CHECK(memcmp(a.z.data(), b.z.data(), sizeof(double) * a.z.size()) == 0);
  CHECK(a.active_set == b.active_set);
}

TEST_CASE("indefinite hessian is rejected") {
  QuadraticProgram qp;
  qp.hessian = -MatX::Identity(2, 2);
  qp.gradient = VecX::Zero(2);
  qp.finish();
  CHECK_THROWS_AS(solve_qp(qp), std::invalid_argument);
}

TEST_CASE("dimension mismatches raise assembly errors") {
  QuadraticProgram qp;
  qp.hessian = MatX::Identity(3, 3);
  qp.gradient = VecX::Zero(2);
  CHECK_THROWS_AS(qp.finish(), AssemblyError);
}
