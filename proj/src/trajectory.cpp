#include "stride/trajectory.hpp"

#include <algorithm>
#include <stdexcept>

namespace stride {

PiecewisePolynomial::PiecewisePolynomial(std::vector<double> breaks,
                                         std::vector<MatX> coefficients)
    : breaks_(std::move(breaks)), coeffs_(std::move(coefficients)) {
  if (breaks_.size() < 2 || coeffs_.size() != breaks_.size() - 1) {
    throw std::invalid_argument("piecewise polynomial: bad break/segment count");
  }
  for (size_t i = 1; i < breaks_.size(); ++i) {
    if (!(breaks_[i] > breaks_[i - 1])) {
      throw std::invalid_argument("piecewise polynomial: breaks not increasing");
    }
  }
  dim_ = static_cast<int>(coeffs_[0].rows());
  for (const MatX& c : coeffs_) {
    if (c.rows() != dim_ || c.cols() != 4) {
      throw std::invalid_argument("piecewise polynomial: segment shape");
    }
  }
}

PiecewisePolynomial PiecewisePolynomial::constant(const VecX& value, double t0,
                                                  double t1) {
  MatX c = MatX::Zero(value.size(), 4);
  c.col(0) = value;
  return PiecewisePolynomial({t0, t1}, {c});
}

PiecewisePolynomial PiecewisePolynomial::cubic_hermite(
    const std::vector<double>& times, const std::vector<VecX>& values,
    const std::vector<VecX>& derivatives) {
  if (times.size() < 2 || values.size() != times.size() ||
      derivatives.size() != times.size()) {
    throw std::invalid_argument("cubic_hermite: knot count mismatch");
  }
  const int dim = static_cast<int>(values[0].size());
  std::vector<MatX> coeffs;
  for (size_t k = 0; k + 1 < times.size(); ++k) {
    const double h = times[k + 1] - times[k];
    if (!(h > 0.0)) throw std::invalid_argument("cubic_hermite: bad knot order");
    const VecX& v0 = values[k];
    const VecX& v1 = values[k + 1];
    const VecX& d0 = derivatives[k];
    const VecX& d1 = derivatives[k + 1];
    MatX c(dim, 4);
    c.col(0) = v0;
    c.col(1) = d0;
    c.col(2) = (3.0 * (v1 - v0) / (h * h)) - (2.0 * d0 + d1) / h;
    c.col(3) = (2.0 * (v0 - v1) / (h * h * h)) + (d0 + d1) / (h * h);
    coeffs.push_back(c);
  }
  return PiecewisePolynomial(times, coeffs);
}

bool PiecewisePolynomial::defined_at(double t) const {
  return !empty() && t >= breaks_.front() - 1e-12 && t <= breaks_.back() + 1e-12;
}

int PiecewisePolynomial::segment_index(double t) const {
  if (!defined_at(t)) {
    throw std::out_of_range("trajectory query at t=" + std::to_string(t) +
                            " outside [" + std::to_string(breaks_.front()) +
                            ", " + std::to_string(breaks_.back()) + "]");
  }
  const auto it = std::upper_bound(breaks_.begin(), breaks_.end(), t);
  int seg = static_cast<int>(it - breaks_.begin()) - 1;
  seg = std::clamp(seg, 0, static_cast<int>(coeffs_.size()) - 1);
  return seg;
}

VecX PiecewisePolynomial::value(double t) const {
  const int seg = segment_index(t);
  const double s = t - breaks_[seg];
  const MatX& c = coeffs_[seg];
  return c.col(0) + s * (c.col(1) + s * (c.col(2) + s * c.col(3)));
}

VecX PiecewisePolynomial::derivative(double t) const {
  const int seg = segment_index(t);
  const double s = t - breaks_[seg];
  const MatX& c = coeffs_[seg];
  return c.col(1) + s * (2.0 * c.col(2) + 3.0 * s * c.col(3));
}

VecX PiecewisePolynomial::second_derivative(double t) const {
  const int seg = segment_index(t);
  const double s = t - breaks_[seg];
  const MatX& c = coeffs_[seg];
  return 2.0 * c.col(2) + 6.0 * s * c.col(3);
}

void PiecewisePolynomial::concatenate(const PiecewisePolynomial& tail) {
  if (empty()) {
    *this = tail;
    return;
  }
  if (tail.empty()) return;
  if (tail.dim() != dim_) {
    throw std::invalid_argument("concatenate: dimension mismatch");
  }
  const double shift = breaks_.back() - tail.breaks_.front();
  for (size_t i = 1; i < tail.breaks_.size(); ++i) {
    breaks_.push_back(tail.breaks_[i] + shift);
  }
  coeffs_.insert(coeffs_.end(), tail.coeffs_.begin(), tail.coeffs_.end());
}

double PiecewisePolynomial::max_value_discontinuity() const {
  double worst = 0.0;
  for (size_t seg = 0; seg + 1 < coeffs_.size(); ++seg) {
    const double s = breaks_[seg + 1] - breaks_[seg];
    const MatX& c = coeffs_[seg];
    const VecX end = c.col(0) + s * (c.col(1) + s * (c.col(2) + s * c.col(3)));
    const VecX begin = coeffs_[seg + 1].col(0);
    worst = std::max(worst, (end - begin).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace stride
