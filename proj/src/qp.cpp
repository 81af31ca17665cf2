#include "stride/qp.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "stride/errors.hpp"

namespace stride {
namespace {

constexpr double kFeasTol = 1e-9;
constexpr double kDualTol = 1e-9;
constexpr double kStepTol = 1e-11;

struct KktResult {
  VecX step;
  VecX duals;
  bool ok = false;
  double condition = 0.0;
};

// min 1/2 p^T H p + g^T p  s.t.  C p = d, via one dense factorization.
KktResult solve_kkt(const MatX& h, const VecX& g, const MatX& c,
                    const VecX& d) {
  const int n = static_cast<int>(h.rows());
  const int m = static_cast<int>(c.rows());
  MatX kkt = MatX::Zero(n + m, n + m);
  kkt.topLeftCorner(n, n) = h;
  if (m > 0) {
    kkt.topRightCorner(n, m) = c.transpose();
    kkt.bottomLeftCorner(m, n) = c;
  }
  VecX rhs(n + m);
  rhs.head(n) = -g;
  rhs.tail(m) = d;

  Eigen::FullPivLU<MatX> lu(kkt);
  lu.setThreshold(1e-12);
  KktResult out;
  if (!lu.isInvertible()) {
    Eigen::JacobiSVD<MatX> svd(kkt);
    const VecX sv = svd.singularValues();
    out.condition = sv(sv.size() - 1) > 0.0
                        ? sv(0) / sv(sv.size() - 1)
                        : std::numeric_limits<double>::infinity();
    return out;
  }
  const VecX sol = lu.solve(rhs);
  out.step = sol.head(n);
  out.duals = sol.tail(m);
  out.ok = true;
  return out;
}

struct LoopResult {
  VecX z;
  VecX eq_duals;
  VecX ineq_duals;
  std::vector<int> active;
  QpStatus status = QpStatus::kMaxIterations;
  int iterations = 0;
  double condition = 0.0;
};

// Primal active-set iteration from a feasible point. The working set keeps
// ascending row order; ties among blocking constraints go to the lowest row
// index so the iteration is deterministic.
LoopResult active_set_loop(const MatX& h, const VecX& b, const MatX& a_eq,
                           const MatX& a_in, const VecX& b_in,
                           VecX z, std::vector<int> working,
                           int max_iterations) {
  const int n = static_cast<int>(h.rows());
  const int n_eq = static_cast<int>(a_eq.rows());
  const int m = static_cast<int>(a_in.rows());
  std::sort(working.begin(), working.end());

  LoopResult out;
  for (int iter = 1; iter <= max_iterations; ++iter) {
    out.iterations = iter;
    const int k = static_cast<int>(working.size());
    MatX c(n_eq + k, n);
    if (n_eq > 0) c.topRows(n_eq) = a_eq;
    for (int i = 0; i < k; ++i) c.row(n_eq + i) = a_in.row(working[i]);

    const VecX g = h * z + b;
    KktResult kkt = solve_kkt(h, g, c, VecX::Zero(n_eq + k));
    if (!kkt.ok) {
      // Degenerate working set; retry with a tiny ridge before giving up.
      const double ridge = 1e-12 * (1.0 + h.cwiseAbs().maxCoeff());
      kkt = solve_kkt(h + ridge * MatX::Identity(n, n), g, c,
                      VecX::Zero(n_eq + k));
      if (!kkt.ok) {
        out.z = z;
        out.status = QpStatus::kDegenerate;
        out.condition = kkt.condition;
        return out;
      }
    }
    const VecX& p = kkt.step;

    if (p.cwiseAbs().maxCoeff() <= kStepTol * (1.0 + z.cwiseAbs().maxCoeff())) {
      // Stationary on the working set: check inequality duals.
      int drop = -1;
      double most_negative = -kDualTol;
      for (int i = 0; i < k; ++i) {
        const double dual = kkt.duals(n_eq + i);
        if (dual < most_negative) {
          most_negative = dual;
          drop = i;
        }
      }
      if (drop < 0) {
        out.z = z;
        out.eq_duals = kkt.duals.head(n_eq);
        out.ineq_duals = VecX::Zero(m);
        for (int i = 0; i < k; ++i) {
          out.ineq_duals(working[i]) = kkt.duals(n_eq + i);
        }
        out.active = working;
        out.status = QpStatus::kOptimal;
        return out;
      }
      working.erase(working.begin() + drop);
      continue;
    }

    // Longest feasible step along p.
    double alpha = 1.0;
    int block = -1;
    for (int i = 0; i < m; ++i) {
      if (std::binary_search(working.begin(), working.end(), i)) continue;
      const double s = a_in.row(i).dot(p);
      if (s <= 1e-12) continue;
      const double ai = std::max(0.0, (b_in(i) - a_in.row(i).dot(z)) / s);
      if (ai < alpha - 1e-12) {
        alpha = ai;
        block = i;
      } else if (block >= 0 && ai <= alpha + 1e-12 && i < block) {
        block = i;  // lowest index enters on ties
      }
    }
    z += alpha * p;
    if (block >= 0 && alpha < 1.0 - 1e-12) {
      working.insert(
          std::upper_bound(working.begin(), working.end(), block), block);
    }
  }
  out.z = z;
  out.status = QpStatus::kMaxIterations;
  return out;
}

bool primal_feasible(const QuadraticProgram& qp, const VecX& z, double tol) {
  if (qp.a_eq.rows() > 0 &&
      (qp.a_eq * z - qp.b_eq).cwiseAbs().maxCoeff() > tol) {
    return false;
  }
  if (qp.a_in.rows() > 0 && (qp.a_in * z - qp.b_in).maxCoeff() > tol) {
    return false;
  }
  return true;
}

std::vector<int> tight_rows(const QuadraticProgram& qp, const VecX& z,
                            double tol) {
  std::vector<int> rows;
  for (int i = 0; i < qp.a_in.rows(); ++i) {
    if (std::abs(qp.a_in.row(i).dot(z) - qp.b_in(i)) <= tol) rows.push_back(i);
  }
  return rows;
}

}  // namespace

const char* to_string(QpStatus status) {
  switch (status) {
    case QpStatus::kOptimal: return "optimal";
    case QpStatus::kInfeasible: return "infeasible";
    case QpStatus::kMaxIterations: return "max-iterations";
    case QpStatus::kDegenerate: return "degenerate";
  }
  return "?";
}

void QuadraticProgram::finish() {
  const int n = static_cast<int>(hessian.rows());
  if (hessian.cols() != n) throw AssemblyError("hessian is not square");
  if (gradient.size() != n) throw AssemblyError("gradient size mismatch");
  if (a_eq.rows() != b_eq.size() || (a_eq.rows() > 0 && a_eq.cols() != n)) {
    throw AssemblyError("equality block dimension mismatch");
  }
  if (a_in.rows() != b_in.size() || (a_in.rows() > 0 && a_in.cols() != n)) {
    throw AssemblyError("inequality block dimension mismatch");
  }
  if (a_eq.rows() == 0) {
    a_eq.resize(0, n);
    b_eq.resize(0);
  }
  if (a_in.rows() == 0) {
    a_in.resize(0, n);
    b_in.resize(0);
  }
  hessian = 0.5 * (hessian + hessian.transpose()).eval();
}

QpSolution solve_equality_qp(const QuadraticProgram& qp) {
  const auto start = std::chrono::steady_clock::now();
  if (qp.a_in.rows() > 0) {
    throw std::invalid_argument("solve_equality_qp: inequalities present");
  }
  QpSolution out;
  const KktResult kkt = solve_kkt(qp.hessian, qp.gradient, qp.a_eq,
                                  qp.b_eq.size() ? qp.b_eq : VecX::Zero(0));
  if (!kkt.ok) {
    out.status = QpStatus::kDegenerate;
    out.condition_estimate = kkt.condition;
  } else {
    out.z = kkt.step;
    out.eq_duals = kkt.duals;
    out.ineq_duals = VecX::Zero(0);
    out.status = QpStatus::kOptimal;
    out.iterations = 1;
  }
  out.solve_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return out;
}

QpSolution solve_qp(const QuadraticProgram& qp,
                    const std::vector<int>* warm_start, int max_iterations) {
  const auto start = std::chrono::steady_clock::now();
  const int n = qp.num_vars();
  const int m = static_cast<int>(qp.a_in.rows());
  const int n_eq = static_cast<int>(qp.a_eq.rows());
  if (max_iterations <= 0) max_iterations = 10 * n;

  MatX h = qp.hessian;
  {
    Eigen::SelfAdjointEigenSolver<MatX> eig(h, Eigen::EigenvaluesOnly);
    const double min_eig = eig.eigenvalues().minCoeff();
    if (min_eig < -1e-10 * std::max(1.0, eig.eigenvalues().maxCoeff())) {
      throw std::invalid_argument("solve_qp: hessian is indefinite");
    }
    if (min_eig < 0.0) h += 1e-10 * MatX::Identity(n, n);
  }

  QpSolution out;
  auto finish_with = [&](const LoopResult& loop) {
    out.z = loop.z;
    out.eq_duals = loop.eq_duals;
    out.ineq_duals = loop.ineq_duals.size() ? loop.ineq_duals : VecX::Zero(m);
    out.active_set = loop.active;
    out.status = loop.status;
    out.iterations += loop.iterations;
    out.condition_estimate = loop.condition;
    out.solve_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
  };

  // Warm start: rebuild the candidate point from the previous active set. If
  // it is still feasible this skips phase 1 entirely, and an unchanged
  // problem terminates on the first stationarity check.
  if (warm_start != nullptr && !warm_start->empty()) {
    std::vector<int> ws;
    for (int i : *warm_start) {
      if (i >= 0 && i < m) ws.push_back(i);
    }
    std::sort(ws.begin(), ws.end());
    ws.erase(std::unique(ws.begin(), ws.end()), ws.end());
    MatX c(n_eq + ws.size(), n);
    VecX d(n_eq + ws.size());
    if (n_eq > 0) {
      c.topRows(n_eq) = qp.a_eq;
      d.head(n_eq) = qp.b_eq;
    }
    for (size_t i = 0; i < ws.size(); ++i) {
      c.row(n_eq + i) = qp.a_in.row(ws[i]);
      d(n_eq + i) = qp.b_in(ws[i]);
    }
    const KktResult kkt = solve_kkt(h, qp.gradient, c, d);
    if (kkt.ok && primal_feasible(qp, kkt.step, 1e-8)) {
      const LoopResult loop = active_set_loop(
          h, qp.gradient, qp.a_eq, qp.a_in, qp.b_in, kkt.step, ws,
          max_iterations);
      finish_with(loop);
      return out;
    }
  }

  // Phase 1: least-norm point on the equalities, then, if inequalities are
  // violated, minimize slack variables with the same active-set loop.
  VecX z0 = VecX::Zero(n);
  if (n_eq > 0) {
    z0 = qp.a_eq.completeOrthogonalDecomposition().solve(qp.b_eq);
    if ((qp.a_eq * z0 - qp.b_eq).cwiseAbs().maxCoeff() >
        1e-8 * (1.0 + qp.b_eq.cwiseAbs().maxCoeff())) {
      out.status = QpStatus::kInfeasible;
      out.z = z0;
      out.solve_time = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - start)
                           .count();
      return out;
    }
  }

  std::vector<int> working;
  if (!primal_feasible(qp, z0, kFeasTol)) {
    // Slack problem over (z, t): min eps/2 |z - z0|^2 + 1^T t + delta/2 |t|^2
    // s.t. A_eq z = b_eq, A_in z - t <= b_in, -t <= 0. Feasible start:
    // t_i = max(violation_i, 0). Re-centered and repeated so the quadratic
    // tie-break term cannot hold the slacks away from zero.
    const double eps = 1e-8, delta = 1e-6;
    for (int round = 0; round < 3 && !primal_feasible(qp, z0, kFeasTol);
         ++round) {
      const int nt = n + m;
      MatX ph = MatX::Zero(nt, nt);
      ph.topLeftCorner(n, n) = eps * MatX::Identity(n, n);
      ph.bottomRightCorner(m, m) = delta * MatX::Identity(m, m);
      VecX pb(nt);
      pb.head(n) = -eps * z0;
      pb.tail(m) = VecX::Ones(m);

      MatX p_eq = MatX::Zero(n_eq, nt);
      if (n_eq > 0) p_eq.leftCols(n) = qp.a_eq;
      MatX p_in = MatX::Zero(2 * m, nt);
      VecX p_bin(2 * m);
      p_in.topLeftCorner(m, n) = qp.a_in;
      p_in.topRightCorner(m, m) = -MatX::Identity(m, m);
      p_bin.head(m) = qp.b_in;
      p_in.bottomRightCorner(m, m) = -MatX::Identity(m, m);
      p_bin.tail(m) = VecX::Zero(m);

      VecX zt(nt);
      zt.head(n) = z0;
      std::vector<int> pw;
      for (int i = 0; i < m; ++i) {
        const double viol = qp.a_in.row(i).dot(z0) - qp.b_in(i);
        zt(n + i) = std::max(viol, 0.0);
        if (viol <= 0.0) pw.push_back(m + i);  // -t_i <= 0 is tight
      }
      const LoopResult loop =
          active_set_loop(ph, pb, p_eq, p_in, p_bin, zt, pw, 10 * (n + m));
      if (loop.status != QpStatus::kOptimal &&
          loop.status != QpStatus::kMaxIterations) {
        finish_with(loop);
        return out;
      }
      z0 = loop.z.head(n);
    }
    if (!primal_feasible(qp, z0, 1e-8)) {
      out.status = QpStatus::kInfeasible;
      out.z = z0;
      out.solve_time = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - start)
                           .count();
      return out;
    }
    working = tight_rows(qp, z0, 1e-10);
  }

  const LoopResult loop = active_set_loop(h, qp.gradient, qp.a_eq, qp.a_in,
                                          qp.b_in, z0, working, max_iterations);
  finish_with(loop);
  return out;
}

}  // namespace stride
