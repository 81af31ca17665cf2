#pragma once

#include <vector>

#include "stride/types.hpp"

namespace stride {

/// Vector-valued piecewise polynomial with segment degree <= 3. Values are
/// continuous at interior breaks for position trajectories; derivatives may
/// jump at breaks that were declared discontinuous by the generator (impact
/// instants). Queries at a break evaluate the right segment, so derivative(t)
/// returns the post-break rate at a velocity discontinuity.
class PiecewisePolynomial {
 public:
  PiecewisePolynomial() = default;

  /// coefficients[segment] is dim x 4 holding (c0, c1, c2, c3) per row with
  /// value(t) = c0 + c1 s + c2 s^2 + c3 s^3, s = t - breaks[segment].
  PiecewisePolynomial(std::vector<double> breaks, std::vector<MatX> coefficients);

  /// Constant value on [t0, t1].
  static PiecewisePolynomial constant(const VecX& value, double t0, double t1);

  /// Cubic Hermite interpolation through (times[k], values[k]) with the given
  /// knot derivatives.
  static PiecewisePolynomial cubic_hermite(const std::vector<double>& times,
                                           const std::vector<VecX>& values,
                                           const std::vector<VecX>& derivatives);

  int dim() const { return dim_; }
  bool empty() const { return breaks_.size() < 2; }
  double start_time() const { return breaks_.front(); }
  double end_time() const { return breaks_.back(); }
  const std::vector<double>& breaks() const { return breaks_; }

  bool defined_at(double t) const;

  /// Value / derivatives; throws std::out_of_range outside [start, end].
  VecX value(double t) const;
  VecX derivative(double t) const;
  VecX second_derivative(double t) const;

  /// Appends another trajectory starting where this one ends (the other's
  /// breaks are shifted so its start coincides with this end). Values should
  /// match at the seam for position trajectories; derivatives may jump.
  void concatenate(const PiecewisePolynomial& tail);

  /// Largest |value(b^-) - value(b^+)| over interior breaks.
  double max_value_discontinuity() const;

 private:
  int segment_index(double t) const;

  int dim_ = 0;
  std::vector<double> breaks_;
  std::vector<MatX> coeffs_;  // per segment, dim x 4
};

}  // namespace stride
