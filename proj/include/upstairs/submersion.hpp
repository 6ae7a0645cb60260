#pragma once

// Coordinate submersions (x, y) -> x with an Ehresmann connection.
//
// The horizontal lift of d/dx_i is d/dx_i + sum_k A(k, i) d/dy_k. Cotangent
// vectors upstairs are written p = sum a_i pi^* dx_i + sum b_k Y^*_k, where
// Y^*_k annihilates the horizontal space. Canonical momenta are related by
// a = P_x + A^T b, b = P_y.

#include "upstairs/geometry.hpp"
#include "upstairs/ode.hpp"

#include <functional>
#include <string>

namespace upstairs {

struct SubmersionTestbed {
  int n = 0;   // base dimension
  int nu = 0;  // fiber dimension
  std::string label;
  // nu x n array of horizontal-lift coefficients.
  std::function<Mat(const Vec& x, const Vec& y)> A;
  std::function<bool(const Vec& x, const Vec& y)> domain;
  // Central-difference step for the derivatives of A, with Richardson extrapolation.
  double fd_step = 1e-3;

  [[nodiscard]] bool in_domain(const Vec& x, const Vec& y) const;
  [[nodiscard]] Mat lift(const Vec& x, const Vec& y) const;
  // dAx[j] = dA/dx_j, dAy[m] = dA/dy_m
  void derivatives(const Vec& x, const Vec& y, std::vector<Mat>& dAx, std::vector<Mat>& dAy) const;
};

struct CotangentState {
  Vec x, y, a, b;
};

struct BaseHamiltonian {
  std::string label;
  std::function<double(const Vec& x, const Vec& p)> H;
  // Optional analytic partials; central differences otherwise.
  std::function<Vec(const Vec& x, const Vec& p)> dH_dx;
  std::function<Vec(const Vec& x, const Vec& p)> dH_dp;

  [[nodiscard]] double value(const Vec& x, const Vec& p) const { return H(x, p); }
  [[nodiscard]] Vec grad_x(const Vec& x, const Vec& p) const;
  [[nodiscard]] Vec grad_p(const Vec& x, const Vec& p) const;

  /// H = 1/2 g^{-1}(p, p) on the chart.
  static BaseHamiltonian riemannian(ChartPtr chart);
  /// H = 1/2 |p|^2.
  static BaseHamiltonian euclidean(int n);
};

struct ConnectionCoefficients {
  // gamma_bar[i](m, k) = Gamma-bar^m_{i k} = d A(m, i) / d y_k
  std::vector<Mat> gamma_bar;
  // curvature[k](i, j) = R^k_ij
  std::vector<Mat> curvature;
};

ConnectionCoefficients connection_coefficients(const SubmersionTestbed& tb, const Vec& x, const Vec& y);

/// Flow of H o pi^2 upstairs, integrated in canonical coordinates [x, y, P_x, P_y].
struct LiftedFlow {
  const SubmersionTestbed* testbed = nullptr;
  Trajectory canonical;

  [[nodiscard]] CotangentState state(const Vec& canonical_state) const;
  [[nodiscard]] CotangentState at(double t) const { return state(canonical.at(t)); }
  [[nodiscard]] CotangentState node(std::size_t k) const { return state(canonical.y[k]); }
};

LiftedFlow lifted_hamiltonian_flow(const SubmersionTestbed& tb, const BaseHamiltonian& H,
                                   const CotangentState& p0, double T, const OdeOptions& options = {});

/// Horizontal lift of a base curve starting at y0; state y.
Trajectory horizontal_lift(const SubmersionTestbed& tb, const BaseCurve& x_curve, const Vec& y0,
                           const OdeOptions& options = {});

/// Transport of an annihilator form along a horizontal curve given by x(t), y(t).
/// Throws InputError if the curve is not horizontal (residual above horizontal_tol).
Trajectory nabla_bar_form_transport(const SubmersionTestbed& tb, const BaseCurve& x_curve,
                                    const BaseCurve& y_curve, const Vec& beta0,
                                    const OdeOptions& options = {}, double horizontal_tol = 1e-6);

/// Base force law with the transported form; state [x, a, y, b].
Trajectory projected_force_flow(const SubmersionTestbed& tb, const BaseHamiltonian& H, const Vec& x0,
                                const Vec& a0, const Vec& y0, const Vec& beta0, double T,
                                const OdeOptions& options = {});

struct ProjectionReport {
  std::string testbed;
  std::string hamiltonian;
  double tol = 0.0;
  double T = 0.0;
  double sup_error_lambda = 0.0;
  double sup_error_beta = 0.0;
  double sup_error_lift = 0.0;
  double energy_drift_lifted = 0.0;
  double energy_drift_projected = 0.0;
  bool truncated = false;
  std::string note;
  double wall_time = 0.0;
};

/// Integrates both flows from matched data and compares them on a common grid.
ProjectionReport verify_projection(const SubmersionTestbed& tb, const BaseHamiltonian& H,
                                   const CotangentState& p0, double T, double tol);

/// "trivial(n,nu)", "heisenberg", "monopole", "frame-bundle(M,Mhat)" (chart names).
SubmersionTestbed make_testbed(const std::string& name);
std::vector<std::string> testbed_catalog();

}  // namespace upstairs
