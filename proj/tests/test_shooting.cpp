#include "upstairs/shooting.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace upstairs;

namespace {

Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

Mat skew2(double l) {
  Mat m = Mat::Zero(2, 2);
  m(0, 1) = l;
  m(1, 0) = -l;
  return m;
}

RollingConfiguration sphere_plane_start() {
  return make_configuration(make_chart("sphere(1)"), make_chart("euclidean(2)"), vec({M_PI / 2, 0.0}),
                            vec({0.0, 0.0}));
}

ShootingProblem reachable_problem() {
  ShootingProblem p;
  p.cfg0 = sphere_plane_start();
  p.T = 2.0;
  p.a = 1.0;
  p.cfg1 = endpoint_map(p.cfg0, vec({0.8, 0.6}), vec({0.3, -0.2}), skew2(0.4), p.T, p.a);
  p.guess = ShootingGuess{vec({0.81, 0.61}), vec({0.31, -0.19}), skew2(0.41)};
  return p;
}

}  // namespace

TEST_CASE("hyperspherical angles round trip") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> N;
  for (int n = 2; n <= 5; ++n) {
    for (int trial = 0; trial < 50; ++trial) {
      Vec u(n);
      for (int i = 0; i < n; ++i) u(i) = N(rng);
      u.normalize();
      const Vec ang = angles_from_direction(u);
      CHECK(ang.size() == n - 1);
      CHECK((direction_from_angles(ang) - u).norm() < 1e-12);
    }
  }
  CHECK((direction_from_angles(vec({0.3})) - vec({std::cos(0.3), std::sin(0.3)})).norm() < 1e-15);
}

TEST_CASE("configuration distance") {
  const auto S = make_chart("sphere(1)");
  const auto E = make_chart("euclidean(2)");
  const auto a = make_configuration(S, E, vec({1.0, 0.0}), vec({0.0, 0.0}));
  CHECK(configuration_distance(a, a) == 0.0);

  const double alpha = 0.9;
  const auto b = make_configuration(S, E, vec({1.0, 0.0}), vec({0.0, 0.0}), rotation2(alpha));
  const double frob = (rotation2(alpha) - Mat::Identity(2, 2)).norm();
  CHECK(configuration_distance(a, b) == doctest::Approx(0.5 * frob));
  CHECK(configuration_distance(a, b, {1.0, 1.0, 2.0}) == doctest::Approx(2.0 * frob));

  const auto c = make_configuration(S, E, vec({1.3, 0.4}), vec({2.0, -1.0}), rotation2(-0.3));
  CHECK(configuration_distance(a, c) == doctest::Approx(configuration_distance(c, a)));
  CHECK(configuration_distance(a, c) <= configuration_distance(a, b) + configuration_distance(b, c) + 1e-15);
  CHECK(configuration_distance(a, c, {0.0, 1.0, 0.0}) == doctest::Approx(std::sqrt(5.0)));

  const auto other = make_configuration(E, E, vec({1.0, 0.0}), vec({0.0, 0.0}));
  CHECK_THROWS_AS(configuration_distance(a, other), InputError);
}

TEST_CASE("endpoint map on plane over plane is a translation") {
  const auto E = make_chart("euclidean(2)");
  const auto cfg = make_configuration(E, E, vec({1, 1}), vec({0, 0}), rotation2(0.5));
  const auto end = endpoint_map(cfg, vec({3.0, 4.0}), vec({1, 2}), skew2(0.7), 2.0, 1.5);
  const Vec dir = vec({0.6, 0.8});
  CHECK((end.x - (cfg.x + 3.0 * dir)).norm() < 1e-12);
  CHECK((end.xhat - 3.0 * rotation2(0.5) * dir).norm() < 1e-12);
  CHECK(configuration_distance(end, make_configuration(E, E, end.x, end.xhat, rotation2(0.5))) < 1e-12);
}

TEST_CASE("endpoint map is continuous in the initial data") {
  const auto cfg = sphere_plane_start();
  const auto base = endpoint_map(cfg, vec({0.8, 0.6}), vec({0.3, -0.2}), skew2(0.4), 2.0, 1.0);
  for (double h : {1e-3, 1e-5, 1e-7}) {
    const auto near = endpoint_map(cfg, vec({0.8 + h, 0.6}), vec({0.3, -0.2 + h}), skew2(0.4 + h), 2.0, 1.0);
    CHECK(configuration_distance(base, near) < 50.0 * h);
  }
}

TEST_CASE("endpoint map reports chart exit") {
  const auto cfg = make_configuration(make_chart("sphere(1)"), make_chart("euclidean(2)"), vec({0.05, 0.0}),
                                      vec({0.0, 0.0}));
  CHECK_THROWS_AS(endpoint_map(cfg, vec({-1.0, 0.0}), vec({0, 0}), skew2(0), 1.0, 1.0), DomainError);
}

TEST_CASE("shooting recovers a reachable target") {
  const auto p = reachable_problem();
  const auto res = solve(p);
  CHECK(res.status == ShootingStatus::converged);
  CHECK(res.residual < 1e-8);
  CHECK(res.length == doctest::Approx(2.0));
  CHECK(res.energy == doctest::Approx(1.0));
  REQUIRE(res.run.has_value());
  REQUIRE(!res.history.empty());
  for (std::size_t k = 1; k < res.history.size(); ++k) CHECK(res.history[k] <= res.history[k - 1]);
  // The recovered shot lands on the target.
  const auto end = endpoint_map(p.cfg0, res.u0, res.v0, res.Lambda0, p.T, p.a);
  CHECK(configuration_distance(end, p.cfg1) < 1e-8);
  CHECK(res.u0.norm() == doctest::Approx(1.0));

  const auto j = to_json(res, "traj.csv");
  CHECK(j.at("status") == "converged");
  CHECK(j.at("trajectory") == "traj.csv");
}

TEST_CASE("multistart is deterministic for a fixed seed") {
  auto p = reachable_problem();
  p.guess.reset();
  p.controls.multistart = 3;
  p.controls.max_iterations = 5;
  p.controls.seed = 42;
  const auto a = solve(p);
  const auto b = solve(p);
  CHECK(a.start_index == b.start_index);
  CHECK(a.residual == b.residual);
  CHECK((a.u0 - b.u0).norm() == 0.0);
  CHECK((a.Lambda0 - b.Lambda0).norm() == 0.0);
  CHECK(a.history == b.history);
  CHECK(a.seed == 42);
}

TEST_CASE("flat rolling cannot change the frame matrix: stall with a warning") {
  const auto E = make_chart("euclidean(2)");
  ShootingProblem p;
  p.cfg0 = make_configuration(E, E, vec({0, 0}), vec({0, 0}));
  p.cfg1 = make_configuration(E, E, vec({1, 0}), vec({1, 0}), rotation2(1.0));
  p.T = 1.0;
  p.controls.max_iterations = 10;
  const auto res = solve(p);
  CHECK(res.status == ShootingStatus::stalled);
  CHECK(res.residual > 0.1);
  REQUIRE(!res.warnings.empty());
  CHECK(res.warnings.front().find("bracket generating") != std::string::npos);
}

TEST_CASE("problem validation and JSON round trip") {
  auto p = reachable_problem();
  p.controls.multistart = 4;
  p.controls.seed = 9;
  const auto back = shooting_problem_from_json(to_json(p));
  CHECK(back.T == p.T);
  CHECK(back.a == p.a);
  CHECK(back.controls.multistart == 4);
  CHECK(back.controls.seed == 9);
  REQUIRE(back.guess.has_value());
  CHECK((back.guess->Lambda0 - p.guess->Lambda0).norm() < 1e-15);
  CHECK(configuration_distance(back.cfg1, p.cfg1) < 1e-14);

  auto bad = p;
  bad.T = 0.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = p;
  bad.a = -1.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = p;
  bad.cfg1 = make_configuration(make_chart("sphere(2)"), make_chart("euclidean(2)"), vec({1, 0}), vec({0, 0}));
  CHECK_THROWS_AS(bad.validate(), InputError);
  CHECK_THROWS_AS(shooting_problem_from_json(nlohmann::json{{"cfg0", to_json(p.cfg0)}}), InputError);
  CHECK(to_string(ShootingStatus::chart_exit) == "chart-exit");
}
