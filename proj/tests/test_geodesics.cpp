#include "upstairs/geodesics.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

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

GeodesicOptions tight(double tol = 1e-11) {
  GeodesicOptions o;
  o.ode.atol = o.ode.rtol = tol;
  return o;
}

RollingGeodesicState sphere_on_plane() {
  const auto cfg = make_configuration(make_chart("sphere(1)"), make_chart("euclidean(2)"), vec({1.3, 0.2}),
                                      vec({0.0, 0.0}));
  return {cfg, vec({0.4, 0.3}), vec({0.1, -0.2}), skew2(0.3)};
}

}  // namespace

TEST_CASE("pack and unpack are inverse") {
  const auto P3 = make_chart("paraboloid(0.5,3)");
  const auto E3 = make_chart("euclidean(3)");
  Mat L = Mat::Zero(3, 3);
  L(0, 1) = 0.1;
  L(0, 2) = -0.2;
  L(1, 2) = 0.3;
  L = L - Mat(L.transpose());
  RollingGeodesicState s{make_configuration(P3, E3, vec({0.1, 0.2, 0.3}), vec({1, 1, 1})), vec({1, 0, 0}),
                         vec({0, 1, 2}), L};
  const Vec p = pack_geodesic(s);
  CHECK(p.size() == geodesic_state_size(3));
  CHECK(geodesic_state_size(3) == 6 + 18 + 6 + 3);
  const auto back = unpack_geodesic(P3, E3, p);
  CHECK((back.Lambda - L).norm() == 0.0);
  CHECK((back.v - s.v).norm() == 0.0);
  CHECK((back.cfg.fhat - s.cfg.fhat).norm() == 0.0);
}

TEST_CASE("plane on plane: straight lines, constant covector, linear Lambda") {
  const auto E = make_chart("euclidean(2)");
  RollingGeodesicState s{make_configuration(E, E, vec({0, 0}), vec({1, 1}), rotation2(0.3)), vec({0.6, 0.8}),
                         vec({0.5, -0.2}), skew2(0.1)};
  const auto run = integrate_geodesic(s, 3.0, tight());
  const auto end = run.state(run.traj.size() - 1);
  CHECK((end.u - s.u).norm() < 1e-13);
  CHECK((end.v - s.v).norm() < 1e-13);
  const Mat dL = s.u * s.v.transpose() - s.v * s.u.transpose();
  CHECK((end.Lambda - (s.Lambda + 3.0 * dL)).norm() < 1e-12);
  CHECK((end.cfg.x - 3.0 * s.u).norm() < 1e-12);
  CHECK((end.cfg.xhat - (vec({1, 1}) + 3.0 * rotation2(0.3) * s.u)).norm() < 1e-12);
}

TEST_CASE("zero covector data gives a Riemannian geodesic of M") {
  auto s = sphere_on_plane();
  s.v.setZero();
  s.Lambda.setZero();
  const auto run = integrate_geodesic(s, 2.0, tight(1e-12));
  const Vec xdot0 = s.cfg.f * s.u;
  OdeOptions o;
  o.atol = o.rtol = 1e-12;
  const auto ref = geodesic_flow(*s.cfg.M, s.cfg.x, xdot0, 2.0, o);
  CHECK((run.traj.back().head(2) - ref.back().head(2)).norm() < 1e-9);
  // The trace on the plane is a straight segment of length a T.
  const auto end = run.state(run.traj.size() - 1);
  CHECK((end.cfg.xhat - 2.0 * s.cfg.fhat * s.u).norm() < 1e-9);
  CHECK(end.v.norm() < 1e-12);
  CHECK(end.Lambda.norm() < 1e-12);
}

TEST_CASE("monitors on a generic surface run") {
  const auto run = integrate_geodesic(sphere_on_plane(), 5.0, tight());
  REQUIRE(!run.traj.truncated);
  const auto m = geodesic_monitors(run);
  CHECK(m.speed_drift < 1e-9);
  CHECK(m.frame_defect < 1e-9);
  CHECK(m.skew_defect == 0.0);
  CHECK(m.covariant_residual < 1e-7);
  CHECK(m.slip < 1e-9);
  CHECK(m.twist < 1e-8);
  CHECK(vtilde_symmetry_check(run).max() < 1e-7);
  REQUIRE(run.traj.channels.count("theta") == 1);
  REQUIRE(run.traj.channels.count("kappa") == 1);
  CHECK(run.traj.channels.at("kappa").front() == doctest::Approx(1.0));
}

TEST_CASE("forward then backward returns to the initial state") {
  const auto s = sphere_on_plane();
  const auto fwd = integrate_geodesic(s, 3.0, tight(1e-12));
  auto mid = fwd.state(fwd.traj.size() - 1);
  const auto bwd = integrate_geodesic(mid, -3.0, tight(1e-12));
  const auto back = bwd.state(bwd.traj.size() - 1);
  CHECK((back.cfg.x - s.cfg.x).norm() < 1e-9);
  CHECK((back.cfg.xhat - s.cfg.xhat).norm() < 1e-9);
  CHECK((back.u - s.u).norm() < 1e-9);
  CHECK((back.v - s.v).norm() < 1e-9);
  CHECK((back.Lambda - s.Lambda).norm() < 1e-9);
}

TEST_CASE("frame-bundle canonical flow projects onto the rolling geodesic") {
  const auto s = sphere_on_plane();
  const auto tb = frame_bundle_testbed(s.cfg.M, s.cfg.Mhat);
  const auto H = BaseHamiltonian::riemannian(s.cfg.M);
  OdeOptions o;
  o.atol = o.rtol = 1e-12;
  const auto lifted = lifted_hamiltonian_flow(tb, H, frame_bundle_covector(s.cfg, s.u, s.v, s.Lambda), 3.0, o);
  const auto run = integrate_geodesic(s, 3.0, tight(1e-12));
  double err = 0.0;
  for (int i = 0; i <= 30; ++i) {
    const double t = 0.1 * i;
    const auto c = lifted.at(t);
    const auto g = run.state_at(t);
    err = std::max({err, (c.x - g.cfg.x).norm(), (c.y.segment(1, 2) - g.cfg.xhat).norm()});
  }
  CHECK(err < 1e-8);
}

TEST_CASE("pendulum variables round trip through frame data") {
  const auto cfg = make_configuration(make_chart("sphere(1)"), make_chart("euclidean(2)"), vec({1.2, 0.0}),
                                      vec({0.0, 0.0}));
  Pendulum2DState p{cfg, 0.7, -0.4, 0.25, 0.15, 0.8};
  const auto s = to_geodesic_state(p);
  CHECK(s.u.norm() == doctest::Approx(0.8));
  CHECK(s.Lambda(0, 1) == doctest::Approx(-0.4 / kChargeSign));
  const auto q = to_pendulum_state(s);
  CHECK(q.theta == doctest::Approx(0.7));
  CHECK(q.L == doctest::Approx(-0.4));
  CHECK(q.b1 == doctest::Approx(0.25));
  CHECK(q.b2 == doctest::Approx(0.15));
  CHECK(q.a == doctest::Approx(0.8));
}

TEST_CASE("2D reduction agrees with the full system and with the closed forms") {
  const auto cfg = make_configuration(make_chart("sphere(1)"), make_chart("euclidean(2)"), vec({M_PI / 2, 0.0}),
                                      vec({0.0, 0.0}));
  Pendulum2DState p{cfg, 0.3, 0.4, 0.2, -0.1, 0.5};
  const auto opts = tight(1e-11);
  const auto red = reduce_2d(p, 6.0, opts);
  REQUIRE(!red.rho_singular);
  const auto full = integrate_geodesic(to_geodesic_state(p), 6.0, opts);
  CHECK(reduction_discrepancy(red, full) < 1e-7);

  const auto c = fit_pendulum_constants(p);
  CHECK(pendulum_residual(red, c) < 1e-6);
  const auto cb = closed_form_b(red, c);
  CHECK(cb.b1.size() == red.traj.size());
  CHECK(cb.max_error < 1e-7);

  // Constant curvature: the memory term vanishes identically.
  double F = 0.0;
  for (const auto& y : red.traj.y) F = std::max(F, std::abs(memory_F(y)));
  CHECK(F < 1e-10);
}

TEST_CASE("pendulum constants need distinct curvatures") {
  const auto S = make_chart("sphere(1)");
  const auto cfg = make_configuration(S, S, vec({1.0, 0.0}), vec({1.0, 0.0}));
  CHECK_THROWS_AS(fit_pendulum_constants(Pendulum2DState{cfg, 0.0, 0.0, 0.1, 0.1, 1.0}), GeometryError);
}

TEST_CASE("rolling on R^n: both specialized forms agree with the general system") {
  for (const char* name : {"paraboloid(0.5)", "paraboloid(0.5,3)"}) {
    CAPTURE(name);
    const auto M = make_chart(name);
    const int n = M->dim();
    const auto E = make_chart("euclidean(" + std::to_string(n) + ")");
    Vec x = Vec::Constant(n, 0.2);
    x(0) = 0.3;
    Mat L = Mat::Zero(n, n);
    L(0, 1) = 0.2;
    L(1, 0) = -0.2;
    RollingGeodesicState s{make_configuration(M, E, x, Vec::Zero(n)), Vec::LinSpaced(n, 0.3, 0.1),
                           Vec::LinSpaced(n, 0.2, 0.1), L};
    const auto rn = rn_rolling_flow(s, 3.0, tight().ode);
    const auto general = integrate_geodesic(s, 3.0, tight());
    CHECK(rn_agreement(rn, general).max() < 1e-7);
  }
  const auto S = make_chart("sphere(1)");
  RollingGeodesicState bad{make_configuration(S, S, vec({1, 0}), vec({1, 0})), vec({1, 0}), vec({0, 0}), skew2(0)};
  CHECK_THROWS_AS(rn_rolling_flow(bad, 1.0), InputError);
}

TEST_CASE("charge line integral of a constant field along a segment") {
  const auto E = make_chart("euclidean(2)");
  const auto line = BaseCurve::line(vec({0, 0}), vec({0, 1}), 0.0, 2.0);
  CHECK(charge_line_integral(*E, line, [](double) { return vec({1, 0}); }) == doctest::Approx(2.0));
  CHECK(charge_line_integral(*E, line, [](double) { return vec({0, 1}); }) == doctest::Approx(0.0));
  // Scaling the metric by c^2 scales the area form by c^2.
  const auto S = make_chart("sphere(1)");
  const auto lat = BaseCurve::line(vec({1.0, 0.0}), vec({0.0, 1.0}), 0.0, 1.0);
  CHECK(charge_line_integral(*S, lat, [](double) { return vec({1, 0}); }) == doctest::Approx(std::sin(1.0)));
}

TEST_CASE("charge of a run equals the line integral along its base curve") {
  const auto run = integrate_geodesic(sphere_on_plane(), 4.0, tight(1e-12));
  const auto rep = charge_monitor(run);
  CHECK(rep.max_error < 1e-9);
  const int n = 2;
  const auto curve = BaseCurve::from_trajectory(run.traj, 0, n);
  const auto V = [&](double t) {
    const auto st = run.state_at(t);
    return Vec(st.cfg.f * st.v);
  };
  const double I = charge_line_integral(*run.M, curve, V, 800);
  CHECK(rep.L.back() - rep.L.front() == doctest::Approx(I).epsilon(1e-6));

  auto curved = sphere_on_plane();
  curved.cfg = make_configuration(curved.cfg.M, make_chart("sphere(2)"), curved.cfg.x, vec({1.0, 0.0}));
  CHECK_THROWS_AS(charge_monitor(integrate_geodesic(curved, 0.5)), InputError);
}

TEST_CASE("trajectory table columns") {
  const auto run = integrate_geodesic(sphere_on_plane(), 1.0);
  std::ostringstream os;
  write_geodesic_csv(os, run);
  const auto text = os.str();
  const auto header = text.substr(0, text.find('\n'));
  CHECK(header.rfind("t,x0,x1,xhat0,xhat1,theta,L10,u0,u1,v0,v1,speed", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == run.traj.size() + 1);
}
