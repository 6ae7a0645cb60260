#pragma once

// Two-point problem for normal rolling geodesics: find (u0 direction, v0, Lambda0)
// with fixed speed a and horizon T whose endpoint matches a target configuration.

#include "upstairs/geodesics.hpp"

#include <array>
#include <cstdint>
#include <string>

namespace upstairs {

struct ShootingControls {
  int max_iterations = 50;
  double damping = 1e-3;       // initial Levenberg-Marquardt parameter
  double tol = 1e-8;           // on configuration_distance
  int multistart = 1;
  std::uint64_t seed = 0;
  double fd_step = 1e-6;
  double gap_floor = 1e-3;
  // Weights on |dx|, |dxhat|, |dQ|_F; a negative entry means 1/n.
  std::array<double, 3> weights = {1.0, 1.0, -1.0};
  // Trial shots needing more steps than this are rejected.
  OdeOptions ode = {1e-11, 1e-11, 0.0, std::numeric_limits<double>::infinity(), 4000};
};

struct ShootingGuess {
  Vec u0;  // direction; normalized internally
  Vec v0;
  Mat Lambda0;
};

struct ShootingProblem {
  RollingConfiguration cfg0, cfg1;
  double T = 1.0;
  double a = 1.0;
  ShootingControls controls;
  std::optional<ShootingGuess> guess;

  /// Throws InputError on chart mismatch, non-positive speed or horizon.
  void validate() const;
};

enum class ShootingStatus { converged, stalled, chart_exit };
std::string to_string(ShootingStatus s);

struct ShootingResult {
  ShootingStatus status = ShootingStatus::stalled;
  Vec u0, v0;
  Mat Lambda0;
  double residual = 0.0;
  int iterations = 0;
  std::vector<double> history;  // residual norm after each accepted step, starting with the initial one
  double length = 0.0;
  double energy = 0.0;
  std::uint64_t seed = 0;
  int start_index = -1;
  std::vector<std::string> warnings;
  std::optional<GeodesicRun> run;
};

/// Endpoint of the geodesic with u(0) = a u0 / |u0|. Throws DomainError on chart exit.
RollingConfiguration endpoint_map(const RollingConfiguration& cfg0, const Vec& u0, const Vec& v0, const Mat& Lambda0,
                                  double T, double a,
                                  const OdeOptions& ode = {1e-11, 1e-11, 0.0,
                                                           std::numeric_limits<double>::infinity(), 4000});

/// w0 |x1 - x2| + w1 |xhat1 - xhat2| + w2 |Q1 - Q2|_F with Q the matrix of q in
/// the Gram-Schmidt reference frames. Throws InputError on chart mismatch.
double configuration_distance(const RollingConfiguration& c1, const RollingConfiguration& c2,
                              std::array<double, 3> weights = {1.0, 1.0, -1.0});

/// Unit vector from n-1 hyperspherical angles, and back.
Vec direction_from_angles(const Vec& angles);
Vec angles_from_direction(const Vec& u);

ShootingResult solve(const ShootingProblem& prob);

nlohmann::json to_json(const ShootingProblem& prob);
ShootingProblem shooting_problem_from_json(const nlohmann::json& j);
/// `trajectory_path` is embedded as a reference; samples are not inlined.
nlohmann::json to_json(const ShootingResult& res, const std::string& trajectory_path = "");

}  // namespace upstairs
