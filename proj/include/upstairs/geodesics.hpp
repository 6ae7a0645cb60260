#pragma once

// Normal geodesics of the rolling distribution.
//
// Frame coordinates: gamma-dot = f u, V = f v, and a skew matrix Lambda paired
// with so(n) by <A, B> = tr(A^T B) / 2.
//
//   udot_a = -<Lambda, Omega(f)(f u, f_a) - Omegahat(fhat)(fhat u, fhat_a)>
//   vdot_a = -<Lambda, Omegahat(fhat)(fhat u, fhat_a)>
//   Lambdadot = u v^T - v u^T
//
// with both frames parallel along their curves and xhat-dot = fhat u.

#include "upstairs/rolling.hpp"

#include <algorithm>
#include <iosfwd>

namespace upstairs {

struct RollingGeodesicState {
  RollingConfiguration cfg;
  Vec u, v;
  Mat Lambda;
};

/// [x, xhat, f, fhat, u, v, upper(Lambda)]
Vec pack_geodesic(const RollingGeodesicState& s);
RollingGeodesicState unpack_geodesic(ChartPtr M, ChartPtr Mhat, const Vec& state);
int geodesic_state_size(int n);

/// Packed time derivative.
Vec geodesic_rhs(const RollingGeodesicState& s);
void geodesic_rhs(const ChartMetric& M, const ChartMetric& Mhat, const Vec& state, Vec& dstate);

struct GeodesicOptions {
  OdeOptions ode;
  double reproject_threshold = 1e-10;
  // Below this |kappa - kappahat| the 2D pendulum quantities are flagged unavailable.
  double curvature_floor = 1e-3;
};

struct GeodesicRun {
  ChartPtr M;
  ChartPtr Mhat;
  Trajectory traj;

  [[nodiscard]] int dim() const { return M->dim(); }
  [[nodiscard]] RollingGeodesicState state(std::size_t node) const { return unpack_geodesic(M, Mhat, traj.y.at(node)); }
  [[nodiscard]] RollingGeodesicState state_at(double t) const { return unpack_geodesic(M, Mhat, traj.at(t)); }
};

/// Integrates from t = 0 to t = T (T may be negative). Fills channels "speed",
/// and in 2D "theta", "L", "kappa", "kappahat", "rho_singular".
GeodesicRun integrate_geodesic(const RollingGeodesicState& s0, double T, const GeodesicOptions& options = {});

struct GeodesicMonitors {
  double speed_drift = 0.0;
  double frame_defect = 0.0;
  double skew_defect = 0.0;
  double covariant_residual = 0.0;
  double slip = 0.0;
  double twist = 0.0;
  bool rho_singular = false;
};

/// Covariant residuals in chart form, evaluated at step midpoints from dense output.
double covariant_residual(const GeodesicRun& run);
GeodesicMonitors geodesic_monitors(const GeodesicRun& run);

struct VTildeResidual {
  double lambda_identity = 0.0;     // Lambdadot against u vtilde^T - vtilde u^T
  double transport_identity = 0.0;  // nabla Vtilde against -<Lambda, Omega(gamma-dot, .)>
  [[nodiscard]] double max() const { return std::max(lambda_identity, transport_identity); }
};

VTildeResidual vtilde_symmetry_check(const GeodesicRun& run);

// ---- 2D reduction ----

// The single place where the reduced variables are tied to frame data:
//   u = a (cos theta, sin theta),  v = kVSign (b1 e_theta + b2 e_theta_perp),
//   L = kChargeSign * Lambda(0, 1).
inline constexpr double kChargeSign = -1.0;
inline constexpr double kVSign = -1.0;

struct Pendulum2DState {
  RollingConfiguration cfg;
  double theta = 0.0;
  double L = 0.0;
  double b1 = 0.0;
  double b2 = 0.0;
  double a = 1.0;
};

RollingGeodesicState to_geodesic_state(const Pendulum2DState& p);
Pendulum2DState to_pendulum_state(const RollingGeodesicState& s);

/// State [theta, L, b1, b2, x, xhat, f, fhat, Is, Ic] with Is, Ic the running
/// integrals of sin(theta) w and cos(theta) w, w = rho^2 (kappahat-dot kappa - kappahat kappa-dot).
struct ReducedRun {
  ChartPtr M;
  ChartPtr Mhat;
  double a = 1.0;
  Trajectory traj;
  bool rho_singular = false;

  [[nodiscard]] Vec x_at(double t) const { return traj.at(t).segment(4, 2); }
  [[nodiscard]] Vec xhat_at(double t) const { return traj.at(t).segment(6, 2); }
};

ReducedRun reduce_2d(const Pendulum2DState& s0, double T, const GeodesicOptions& options = {});

struct PendulumConstants {
  double A = 0.0;
  double phi0 = 0.0;
};

/// Integration constants of the b-system from the initial data.
PendulumConstants fit_pendulum_constants(const Pendulum2DState& s0);

/// Memory term F = sin(theta) Ic - cos(theta) Is and its companion G = cos(theta) Ic + sin(theta) Is.
double memory_F(const Vec& reduced_state);
double memory_G(const Vec& reduced_state);

/// sup over step midpoints of
///   theta'' + (rho'/rho) theta' - (A/rho) sin(theta - phi0) + (a^2/rho) F.
double pendulum_residual(const ReducedRun& run, const PendulumConstants& c);

struct ClosedFormB {
  std::vector<double> b1, b2;  // at the run's nodes
  double max_error = 0.0;      // against the integrated b1, b2
};

ClosedFormB closed_form_b(const ReducedRun& run, const PendulumConstants& c);

/// sup over a common grid of the base-curve distance between the two formulations.
double reduction_discrepancy(const ReducedRun& reduced, const GeodesicRun& full);

// ---- rolling on R^n ----

struct RnRolling {
  ChartPtr M;
  Trajectory form_a;  // [x, xdot, V, W, Pi]
  Trajectory form_b;  // [y, ydot, x, f]
  Vec xhat0;
  Mat fhat0;

  [[nodiscard]] Vec x_a(double t) const;
  [[nodiscard]] Vec x_b(double t) const;
  [[nodiscard]] Vec xhat_b(double t) const;
};

/// s0.cfg.Mhat must be euclidean(n).
RnRolling rn_rolling_flow(const RollingGeodesicState& s0, double T, const OdeOptions& options = {});

struct RnAgreement {
  double a_vs_b = 0.0;
  double a_vs_general = 0.0;
  double b_vs_general = 0.0;
  [[nodiscard]] double max() const { return std::max({a_vs_b, a_vs_general, b_vs_general}); }
};

RnAgreement rn_agreement(const RnRolling& rn, const GeodesicRun& general);

// ---- charge ----

struct ChargeReport {
  std::vector<double> L;
  std::vector<double> reconstructed;
  double max_error = 0.0;
};

/// L(t) against L(0) + integral of (*flat V)(gamma-dot), on 2D runs with flat Mhat.
ChargeReport charge_monitor(const GeodesicRun& run);

/// Integral of (*flat V)(gamma-dot) along a curve for a given vector field along it.
double charge_line_integral(const ChartMetric& chart, const BaseCurve& curve,
                            const std::function<Vec(double)>& V, int panels = 400);

void write_geodesic_csv(std::ostream& os, const GeodesicRun& run, const ReducedRun* reduced = nullptr,
                        const PendulumConstants* constants = nullptr);

}  // namespace upstairs
