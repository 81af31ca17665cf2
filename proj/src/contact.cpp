#include "stride/contact.hpp"

#include <Eigen/SVD>
#include <sstream>

#include "stride/errors.hpp"

namespace stride {
namespace {

// Relative singular-value cutoff for "full row rank" judgments. Constraint
// Jacobians here are well scaled (meters, radians).
constexpr double kRankTol = 1e-8;

std::string offending_rows(const MatX& null_vectors,
                           const std::vector<std::string>& labels) {
  // Rows with large weight in any null vector are the dependent ones.
  std::ostringstream msg;
  bool first = true;
  for (int r = 0; r < null_vectors.rows(); ++r) {
    if (null_vectors.row(r).cwiseAbs().maxCoeff() > 0.1) {
      if (!first) msg << ", ";
      msg << (r < static_cast<int>(labels.size()) ? labels[r]
                                                  : "row " + std::to_string(r));
      first = false;
    }
  }
  return msg.str();
}

}  // namespace

int ConstraintSet::dimension() const {
  int n = 0;
  for (const Constraint& c : constraints) n += c.dim();
  return n;
}

int ConstraintSet::unambiguous_dimension() const {
  int n = 0;
  for (const Constraint& c : constraints) {
    if (c.unambiguous) n += c.dim();
  }
  return n;
}

std::vector<std::string> ConstraintSet::row_labels() const {
  std::vector<std::string> labels;
  for (const Constraint& c : constraints) {
    if (c.kind == Constraint::Kind::kPointContact) {
      labels.push_back(c.label() + ":t");
      labels.push_back(c.label() + ":n");
    } else {
      labels.push_back(c.label());
    }
  }
  return labels;
}

std::vector<int> ConstraintSet::contact_row_offsets() const {
  std::vector<int> offsets;
  int row = 0;
  for (const Constraint& c : constraints) {
    if (c.kind == Constraint::Kind::kPointContact) offsets.push_back(row);
    row += c.dim();
  }
  return offsets;
}

StackedJacobian stacked_jacobian(const ConstraintSet& set,
                                 const RobotModel& model, ConstVecRef q,
                                 ConstVecRef v) {
  const int n_q = model.n_q();
  const int n_c = set.dimension();
  StackedJacobian out;
  out.j_full = MatX::Zero(n_c, n_q);
  out.jdot_v = VecX::Zero(n_c);
  out.position_error = VecX::Zero(n_c);
  out.j_unambiguous = MatX::Zero(set.unambiguous_dimension(), n_q);

  int row = 0, row_h = 0;
  for (const Constraint& c : set.constraints) {
    if (c.kind == Constraint::Kind::kPointContact) {
      const FrameKinematics fk = frame_kinematics(model, q, v, c.frame);
      out.j_full.middleRows(row, 2) = fk.jacobian;
      out.jdot_v.segment(row, 2) = fk.jdot_times_v;
      out.position_error.segment(row, 2) = fk.position - c.anchor;
      if (c.unambiguous) {
        out.j_unambiguous.middleRows(row_h, 2) = fk.jacobian;
        row_h += 2;
      }
      row += 2;
    } else {
      out.j_full(row, c.joint) = 1.0;
      out.position_error(row) = q[c.joint] - c.lock_value;
      if (c.unambiguous) {
        out.j_unambiguous(row_h, c.joint) = 1.0;
        row_h += 1;
      }
      row += 1;
    }
  }
  return out;
}

ImpactResult impact_map(const RobotModel& model, ConstVecRef q,
                        ConstVecRef v_minus, ConstMatRef j_full,
                        const std::vector<std::string>& row_labels) {
  const int n_c = static_cast<int>(j_full.rows());
  ImpactResult out;
  if (n_c == 0) {
    out.v_plus = v_minus;
    out.impulse = VecX();
    return out;
  }
  const MatX m = mass_matrix(model, q);
  const MatX g = m.llt().solve(j_full.transpose());  // M^-1 J^T
  const MatX w = j_full * g;                         // J M^-1 J^T, SPD if J full rank

  Eigen::JacobiSVD<MatX> svd(w, Eigen::ComputeFullU);
  const VecX sv = svd.singularValues();
  const double cutoff = kRankTol * sv(0);
  if (sv(n_c - 1) <= cutoff) {
    int rank = 0;
    while (rank < n_c && sv(rank) > cutoff) ++rank;
    const MatX null_u = svd.matrixU().rightCols(n_c - rank);
    throw SingularConstraintError(
        "impact constraint block is rank deficient (rank " +
        std::to_string(rank) + " of " + std::to_string(n_c) +
        "); dependent constraints: " + offending_rows(null_u, row_labels));
  }

  out.impulse = -w.ldlt().solve(j_full * v_minus);
  out.v_plus = v_minus + g * out.impulse;
  return out;
}

InvariantBasis invariant_basis(const RobotModel& model, ConstVecRef q,
                               ConstMatRef j_full) {
  const int n_q = model.n_q();
  const int n_c = static_cast<int>(j_full.rows());
  InvariantBasis out;
  if (n_c == 0) {
    out.basis = MatX::Identity(n_q, n_q);
    out.projector = MatX::Identity(n_q, n_q);
    out.rank = 0;
    return out;
  }
  const MatX m = mass_matrix(model, q);
  const MatX g = m.llt().solve(j_full.transpose());

  Eigen::JacobiSVD<MatX> svd(g, Eigen::ComputeFullU);
  const VecX sv = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > kRankTol * sv(0)) ++rank;
  }
  if (rank < n_c) {
    throw SingularConstraintError(
        "constraint Jacobian is rank deficient: rank " + std::to_string(rank) +
        " of " + std::to_string(n_c));
  }
  out.basis = svd.matrixU().rightCols(n_q - rank).transpose();
  out.projector = out.basis.transpose() * out.basis;
  out.rank = rank;
  return out;
}

ProjectedVelocity projected_velocity(const RobotModel& model, ConstVecRef q,
                                     ConstVecRef v, ConstMatRef j_full,
                                     ConstMatRef j_unambiguous,
                                     ConstMatRef j_output,
                                     ConstVecRef ydot_des) {
  const int n_c = static_cast<int>(j_full.rows());
  const int n_h = static_cast<int>(j_unambiguous.rows());
  const int n_y = static_cast<int>(j_output.rows());
  ProjectedVelocity out;
  if (n_c == 0) {
    out.impulse = VecX();
    out.holonomic_multiplier = VecX();
    out.v_proj = v;
    return out;
  }
  if (ydot_des.size() != n_y) {
    throw std::invalid_argument("ydot_des dimension does not match j_output");
  }

  const MatX m = mass_matrix(model, q);
  const MatX g = m.llt().solve(j_full.transpose());  // impulse -> velocity map
  const MatX a = j_output * g;                       // n_y x n_c
  const MatX b = j_unambiguous * g;                  // n_h x n_c

  MatX kkt = MatX::Zero(n_c + n_h, n_c + n_h);
  kkt.topLeftCorner(n_c, n_c) = a.transpose() * a;
  if (n_h > 0) {
    kkt.topRightCorner(n_c, n_h) = b.transpose();
    kkt.bottomLeftCorner(n_h, n_c) = b;
  }
  VecX rhs(n_c + n_h);
  rhs.head(n_c) = a.transpose() * (ydot_des - j_output * v);
  if (n_h > 0) rhs.tail(n_h) = -(j_unambiguous * v);

  Eigen::CompleteOrthogonalDecomposition<MatX> cod(kkt);
  const VecX sol = cod.solve(rhs);
  const double scale = std::max(1.0, rhs.norm());
  if ((kkt * sol - rhs).norm() > 1e-8 * scale) {
    throw DegenerateProjectionError(
        "projection KKT system is inconsistent (the holonomic rows cannot be "
        "satisfied within the impulse range space)");
  }

  VecX lambda = sol.head(n_c);
  out.holonomic_multiplier = sol.tail(n_h);

  // When the minimizer is not unique, resolve the slack directions (kernel of
  // [A; B]) by minimizing ||v_proj||. Unlike a minimum-norm lambda, this pick
  // commutes with shifting v by any impulse through M^-1 J^T, which keeps
  // v_proj invariant even in the degenerate case.
  MatX ab(n_y + n_h, n_c);
  ab.topRows(n_y) = a;
  if (n_h > 0) ab.bottomRows(n_h) = b;
  Eigen::JacobiSVD<MatX> svd(ab, Eigen::ComputeFullV);
  int rank = 0;
  const VecX sv = svd.singularValues();
  const double sv0 = sv.size() > 0 ? sv(0) : 0.0;
  for (int i = 0; i < sv.size(); ++i) {
    if (sv(i) > std::max(kRankTol * sv0, 1e-14)) ++rank;
  }
  if (rank < n_c) {
    const MatX kernel = svd.matrixV().rightCols(n_c - rank);
    const MatX d = g * kernel;
    const VecX eta =
        d.completeOrthogonalDecomposition().solve(-(v + g * lambda));
    lambda += kernel * eta;
  }

  out.impulse = lambda;
  out.v_proj = v + g * lambda;
  if (n_h > 0) {
    const double violation = (j_unambiguous * out.v_proj).cwiseAbs().maxCoeff();
    if (violation > 1e-9 * std::max(1.0, v.cwiseAbs().maxCoeff())) {
      throw DegenerateProjectionError(
          "projected velocity violates the unambiguous constraints (residual " +
          std::to_string(violation) + ")");
    }
  }
  return out;
}

}  // namespace stride
