#pragma once

#include <Eigen/Dense>

namespace stride {

// Planar world frame: x forward, z up, rotations counterclockwise (positive
// pitch tips the +x axis toward +z). 2-vectors store (x, z).
using Vec2 = Eigen::Vector2d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using RowVecX = Eigen::RowVectorXd;

using ConstVecRef = Eigen::Ref<const Eigen::VectorXd>;
using ConstMatRef = Eigen::Ref<const Eigen::MatrixXd>;

/// Counterclockwise quarter turn in the x-z plane: (x, z) -> (-z, x).
inline Vec2 perp(const Vec2& a) { return {-a.y(), a.x()}; }

/// Planar cross product a x b (moment about the out-of-plane axis).
inline double cross2(const Vec2& a, const Vec2& b) {
  return a.x() * b.y() - a.y() * b.x();
}

/// Unit vector along a link at absolute angle theta. Zero angle points
/// straight down, so legs hang at theta = 0 and positive theta swings the
/// distal end forward (+x).
inline Vec2 axis_dir(double theta) { return {std::sin(theta), -std::cos(theta)}; }

/// d(axis_dir)/dtheta, also the direction a point on the link moves under
/// positive angular rate.
inline Vec2 axis_normal(double theta) { return {std::cos(theta), std::sin(theta)}; }

}  // namespace stride
