#pragma once

// Rolling of M on Mhat without slipping or twisting.
//
// A configuration stores the frame pair (f, fhat); the isometry is
// q = fhat f^{-1} in chart components.

#include "upstairs/geometry.hpp"
#include "upstairs/submersion.hpp"

#include <json.hpp>

#include <iosfwd>

namespace upstairs {

struct RollingConfiguration {
  ChartPtr M;
  ChartPtr Mhat;
  Vec x, xhat;
  Mat f, fhat;

  [[nodiscard]] int dim() const { return M->dim(); }
  /// q as a chart-component matrix T_x M -> T_xhat Mhat.
  [[nodiscard]] Mat q() const { return fhat * f.inverse(); }
  /// Throws GeometryError if a frame is not orthonormal and positive, or q is not isometric.
  void validate(double tol = 1e-8) const;
};

/// Configuration with Gram-Schmidt frames from the identity seed; fhat is
/// additionally rotated by `rotation` (an n x n special orthogonal matrix, identity if empty).
RollingConfiguration make_configuration(ChartPtr M, ChartPtr Mhat, const Vec& x, const Vec& xhat,
                                        const Mat& rotation = Mat());

nlohmann::json to_json(const RollingConfiguration& cfg);
RollingConfiguration configuration_from_json(const nlohmann::json& j);

/// Local orthonormal frame field x -> e(x).
using FrameField = std::function<Mat(const Vec&)>;
FrameField gram_schmidt_field(ChartPtr chart);

/// omega(v)(a, b) = g(e_a, nabla_v e_b) for a frame field, derivative by central differences.
Mat connection_matrix(const ChartMetric& chart, const FrameField& e, const Vec& x, const Vec& v);

/// Matrix of q in the frames e(x), ehat(xhat): q e_b = sum_a Q(a, b) ehat_a.
Mat reference_frame_matrix(const RollingConfiguration& cfg, const FrameField& e, const FrameField& ehat);

struct DistributionDirection {
  Vec dx;     // velocity on M
  Vec dxhat;  // velocity on Mhat
  Mat fiber;  // so(n) part E, acting as Qdot = Q E
};

std::vector<DistributionDirection> distribution_basis(const RollingConfiguration& cfg, const FrameField& e,
                                                      const FrameField& ehat);

/// Gram matrix of directions under the lifted metric h(v, w) = g(pi_* v, pi_* w).
Mat lifted_metric_gram(const RollingConfiguration& cfg, const std::vector<DistributionDirection>& dirs);

/// Integrates the basis directions with coefficients e^{-1} gamma-dot; state [x, xhat, Q].
Trajectory basis_development(const RollingConfiguration& cfg0, const BaseCurve& curve, const FrameField& e,
                             const FrameField& ehat, const OdeOptions& options = {});

/// State layout [x, xhat, f, fhat] (frames column-major).
struct RollingPath {
  ChartPtr M;
  ChartPtr Mhat;
  Trajectory traj;

  [[nodiscard]] int dim() const { return M->dim(); }
  [[nodiscard]] RollingConfiguration config(std::size_t node) const;
  [[nodiscard]] RollingConfiguration config_at(double t) const;
};

Vec pack_configuration(const RollingConfiguration& cfg);
RollingConfiguration unpack_configuration(ChartPtr M, ChartPtr Mhat, const Vec& state);

/// The rolling over a prescribed curve. Frames are re-orthonormalized when the
/// defect exceeds reproject_threshold.
RollingPath develop(const RollingConfiguration& cfg0, const BaseCurve& curve, const OdeOptions& options = {},
                    double reproject_threshold = 1e-10);

struct SlipTwist {
  double slip = 0.0;
  double twist = 0.0;
  std::vector<double> slip_at_nodes;
  std::vector<double> twist_at_nodes;
};

/// Slip |q xdot - xhat-dot| and twist |nabla-hat (q X)| for parallel X, measured
/// at step midpoints from the dense output.
SlipTwist noslip_notwist_residual(const RollingPath& path);

/// Polar correction f (f^T g f)^{-1/2}. Throws GeometryError if f is far from orthonormal.
Mat so_projection(const Mat& f, const Mat& g);
FramePoint so_projection(const ChartMetric& chart, const FramePoint& fp);

struct CurvatureGap {
  Mat map;
  double min_singular_value = 0.0;
};

CurvatureGap curvature_gap(const RollingConfiguration& cfg);

void write_path_csv(std::ostream& os, const RollingPath& path, const SlipTwist& residuals);

// Frame-bundle realization in 2D: base M, fiber (phi, xhat, phihat), frames
// f = e(x) R(phi), fhat = ehat(xhat) R(phihat) with Gram-Schmidt reference frames.
SubmersionTestbed frame_bundle_testbed(ChartPtr M, ChartPtr Mhat);

/// g(nabla_v e_1, e_2) for the Gram-Schmidt frame of a 2D chart.
double rotation_connection(const ChartMetric& chart, const Vec& x, const Vec& v);

/// Fiber coordinates (phi, xhat, phihat) of a 2D configuration.
Vec frame_bundle_fiber(const RollingConfiguration& cfg);

/// Covector on the frame-bundle testbed matching rolling-geodesic data (u, v, Lambda).
CotangentState frame_bundle_covector(const RollingConfiguration& cfg, const Vec& u, const Vec& v,
                                     const Mat& Lambda);

}  // namespace upstairs
