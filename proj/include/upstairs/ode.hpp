#pragma once

// Adaptive Dormand-Prince 5(4) integrator with 4th-order continuous extension.
//
// The right-hand side may throw DomainError when a stage leaves the chart;
// the stepper then shrinks the step, and if the boundary cannot be avoided
// the run is truncated at the last accepted node with `truncated` set.

#include "upstairs/types.hpp"

#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace upstairs {

using OdeRhs = std::function<void(double t, const Vec& y, Vec& dydt)>;

struct OdeOptions {
  double atol = 1e-9;
  double rtol = 1e-9;
  double initial_step = 0.0;  // 0 selects automatically
  double max_step = std::numeric_limits<double>::infinity();
  std::size_t max_steps = 2'000'000;
};

struct StepHooks {
  // Checked on every accepted state; false truncates the run.
  std::function<bool(const Vec&)> in_domain;
  // May modify the accepted state (drift projection). Returns true if it did.
  std::function<bool(double t, Vec& y)> post_step;
};

/// Accepted nodes plus per-step continuous extension.
class Trajectory {
 public:
  std::vector<double> t;
  std::vector<Vec> y;

  bool truncated = false;
  std::string truncation_reason;
  std::size_t accepted_steps = 0;
  std::size_t rejected_steps = 0;
  std::size_t rhs_evaluations = 0;
  std::size_t projections = 0;

  // Named per-node monitor channels, filled by callers after integration.
  std::map<std::string, std::vector<double>> channels;

  // Optional vector field of the run. When set, derivative_at evaluates it on the
  // dense-output state; it must not hold references into the caller's stack.
  OdeRhs field;

  [[nodiscard]] bool empty() const noexcept { return t.empty(); }
  [[nodiscard]] std::size_t size() const noexcept { return t.size(); }
  [[nodiscard]] double t_begin() const { return t.front(); }
  [[nodiscard]] double t_end() const { return t.back(); }
  [[nodiscard]] const Vec& back() const { return y.back(); }

  /// Dense-output state at time s (clamped to the integrated range).
  [[nodiscard]] Vec at(double s) const;
  /// field(s, at(s)) if a field is attached, else the derivative of the interpolant.
  [[nodiscard]] Vec derivative_at(double s) const;
  /// Midpoints of every accepted step.
  [[nodiscard]] std::vector<double> step_midpoints() const;

  // Continuous-extension coefficients of step k (from t[k] to t[k+1]).
  struct Segment {
    double t0 = 0.0;
    double h = 0.0;
    Vec r1, r2, r3, r4, r5;
  };
  std::vector<Segment> segments;

 private:
  [[nodiscard]] std::size_t locate(double s) const;
};

/// Integrate y' = f(t, y) from t0 to t1 (t1 < t0 integrates backwards).
Trajectory integrate(const OdeRhs& rhs, double t0, const Vec& y0, double t1,
                     const OdeOptions& options = {}, const StepHooks& hooks = {});

/// Composite 5-point Gauss-Legendre quadrature of integrand(t, state) over every step
/// of a trajectory, using its dense output. Returns the running integral at each node.
std::vector<double> cumulative_quadrature(const Trajectory& traj,
                                          const std::function<double(double, const Vec&)>& integrand);

}  // namespace upstairs
