#pragma once

// Levi-Civita geometry on a single chart.
//
// Curvature convention: R(X,Y) = nabla_X nabla_Y - nabla_Y nabla_X - nabla_[X,Y].
//   mixed(l, i, j, k)   = (R(d_i, d_j) d_k)^l
//   lowered(i, j, k, l) = g(R(d_i, d_j) d_l, d_k),  so lowered(0,1,0,1) = K det g in 2D
//   Omega(f)(X, Y)(a, b) = g(R(X, Y) f_b, f_a)

#include "upstairs/chart.hpp"
#include "upstairs/ode.hpp"

#include <functional>

namespace upstairs {

/// Orthonormal positively oriented frame at a point; column j is f_j.
struct FramePoint {
  Vec x;
  Mat f;
};

struct TangentAtPoint {
  Vec x;
  Vec v;
};

/// Curve on a chart, given by position and velocity on [t0, t1].
struct BaseCurve {
  double t0 = 0.0;
  double t1 = 1.0;
  std::function<Vec(double)> position;
  std::function<Vec(double)> velocity;

  static BaseCurve line(const Vec& x0, const Vec& velocity, double t0, double t1);
  /// Piecewise cubic Hermite through samples, slopes from finite differences.
  static BaseCurve from_samples(const std::vector<double>& t, const std::vector<Vec>& x);
  /// Components [offset, offset + count) of a trajectory's dense output.
  static BaseCurve from_trajectory(const Trajectory& traj, int offset, int count);
  /// Same geometric curve traversed with time s -> phi(s) (phi increasing, dphi its derivative).
  [[nodiscard]] BaseCurve reparametrized(std::function<double(double)> phi,
                                         std::function<double(double)> dphi, double s0,
                                         double s1) const;
};

/// Gamma(k, i, j) = Gamma^k_ij.
Tensor3 christoffel(const ChartMetric& chart, const Vec& x);
/// dGamma(m) holds d Gamma / d x_m, using the chart's second partials.
std::vector<Tensor3> christoffel_derivative(const ChartMetric& chart, const Vec& x);

/// Matrix Gamma(v)^k_j = sum_i Gamma^k_ij v^i, so that nabla_v W = dW + Gamma(v) W.
Mat contract_christoffel(const Tensor3& gamma, const Vec& v);
/// Gamma(v, w)^k = sum_ij Gamma^k_ij v^i w^j.
Vec christoffel_quadratic(const Tensor3& gamma, const Vec& v, const Vec& w);

struct Riemann {
  Tensor4 mixed;
  Tensor4 lowered;
};

Riemann riemann(const ChartMetric& chart, const Vec& x);

/// Endomorphism R(X, Y) as a matrix in chart components.
Mat curvature_operator(const Riemann& r, const Vec& X, const Vec& Y);
Mat curvature_operator(const ChartMetric& chart, const Vec& x, const Vec& X, const Vec& Y);

/// Omega(f)(X, Y), an n x n skew matrix.
Mat curvature_form_in_frame(const ChartMetric& chart, const FramePoint& fp, const Vec& X, const Vec& Y);
/// Checked variant: throws GeometryError if X or Y is not based at fp.x.
Mat curvature_form_in_frame(const ChartMetric& chart, const FramePoint& fp, const TangentAtPoint& X,
                            const TangentAtPoint& Y);

/// K(a, b, c, d) = Omega(f)(f_c, f_d)(a, b), all frame indices.
Tensor4 frame_curvature(const ChartMetric& chart, const Vec& x, const Mat& f);
Tensor4 frame_curvature(const Riemann& r, const Mat& g, const Mat& f);

double gauss_curvature(const ChartMetric& chart, const Vec& x);

Vec flat(const ChartMetric& chart, const Vec& x, const Vec& v);
Vec sharp(const ChartMetric& chart, const Vec& x, const Vec& covector);

/// Gram-Schmidt of seed columns against g(x); the last column is flipped if needed
/// so det(f) > 0. Throws GeometryError on a degenerate seed.
FramePoint orthonormal_frame_at(const ChartMetric& chart, const Vec& x, const Mat& seed);
FramePoint orthonormal_frame_at(const ChartMetric& chart, const Vec& x);

/// max |f^T g f - I|.
double frame_defect(const ChartMetric& chart, const Vec& x, const Mat& f);

/// Transports the columns of v0 along the curve; state is the column-major matrix.
Trajectory parallel_transport(const ChartMetric& chart, const BaseCurve& curve, const Mat& v0,
                              const OdeOptions& options = {});

/// Geodesic with state [x, xdot].
Trajectory geodesic_flow(const ChartMetric& chart, const Vec& x0, const Vec& v0, double T,
                         const OdeOptions& options = {});

/// sup over step midpoints of |xddot + Gamma(xdot, xdot)|, from dense output.
double geodesic_residual(const ChartMetric& chart, const Trajectory& traj);

/// Curve length sum of |dx|_g on a fine resampling of a sampled path.
double path_length(const ChartMetric& chart, const std::function<Vec(double)>& path, double t0,
                   double t1, int samples = 2000);

}  // namespace upstairs
