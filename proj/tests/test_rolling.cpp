#include "upstairs/rolling.hpp"

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

OdeOptions tight(double tol = 1e-12) {
  OdeOptions o;
  o.atol = o.rtol = tol;
  return o;
}

// Circumcentre of three points in the plane.
Vec circumcentre(const Vec& a, const Vec& b, const Vec& c) {
  const double d = 2 * (a(0) * (b(1) - c(1)) + b(0) * (c(1) - a(1)) + c(0) * (a(1) - b(1)));
  const double ux = (a.squaredNorm() * (b(1) - c(1)) + b.squaredNorm() * (c(1) - a(1)) + c.squaredNorm() * (a(1) - b(1))) / d;
  const double uy = (a.squaredNorm() * (c(0) - b(0)) + b.squaredNorm() * (a(0) - c(0)) + c.squaredNorm() * (b(0) - a(0))) / d;
  return vec({ux, uy});
}

}  // namespace

TEST_CASE("plane on plane: trace is the rotated curve and frames stay fixed") {
  const auto E = make_chart("euclidean(2)");
  const double alpha = 0.6;
  const auto cfg = make_configuration(E, E, vec({1, 2}), vec({-1, 0}), rotation2(alpha));
  const auto path = develop(cfg, BaseCurve::line(cfg.x, vec({0.5, -1.0}), 0.0, 2.0), tight());
  const auto end = path.config(path.traj.size() - 1);
  CHECK((end.xhat - (vec({-1, 0}) + 2.0 * rotation2(alpha) * vec({0.5, -1.0}))).norm() < 1e-12);
  CHECK((end.f - cfg.f).norm() < 1e-13);
  CHECK((end.fhat - cfg.fhat).norm() < 1e-13);
}

TEST_CASE("rolling the sphere along a latitude traces a circle of radius tan(phi)") {
  const auto S = make_chart("sphere(1)");
  const auto E = make_chart("euclidean(2)");
  const double phi0 = 1.0;
  const auto cfg = make_configuration(S, E, vec({phi0, 0.0}), vec({0.0, 0.0}));
  const auto path = develop(cfg, BaseCurve::line(cfg.x, vec({0.0, 1.0}), 0.0, 2 * M_PI), tight());
  REQUIRE(!path.traj.truncated);
  const Vec c = circumcentre(path.traj.at(0.0).segment(2, 2), path.traj.at(1.0).segment(2, 2),
                             path.traj.at(2.5).segment(2, 2));
  double err = 0.0;
  for (std::size_t k = 0; k < path.traj.size(); ++k)
    err = std::max(err, std::abs((path.traj.y[k].segment(2, 2) - c).norm() - std::tan(phi0)));
  CHECK(err < 1e-9);
  // Arc length sin(phi) per radian of longitude, so the trace sweeps 2 pi cos(phi).
  const Vec p0 = path.traj.y.front().segment(2, 2) - c, p1 = path.traj.back().segment(2, 2) - c;
  const double swept = std::atan2(p0(0) * p1(1) - p0(1) * p1(0), p0.dot(p1));
  const double expected = 2 * M_PI * std::cos(phi0);
  CHECK(std::min(std::abs(std::remainder(swept - expected, 2 * M_PI)),
                 std::abs(std::remainder(swept + expected, 2 * M_PI))) < 1e-9);

  const auto st = noslip_notwist_residual(path);
  CHECK(st.slip < 1e-10);
  CHECK(st.twist < 1e-9);
}

TEST_CASE("frames that are not transported are detected as twisting") {
  const auto S = make_chart("sphere(1)");
  const auto E = make_chart("euclidean(2)");
  const auto cfg = make_configuration(S, E, vec({1.0, 0.0}), vec({0.0, 0.0}));
  const auto curve = BaseCurve::line(cfg.x, vec({0.0, 1.0}), 0.0, 1.0);
  // Contact kept, frames frozen: f is not parallel along a latitude.
  auto rhs = [&](double t, const Vec& s, Vec& ds) {
    const Mat f = Eigen::Map<const Mat>(s.data() + 4, 2, 2);
    const Mat fh = Eigen::Map<const Mat>(s.data() + 8, 2, 2);
    ds = Vec::Zero(s.size());
    ds.segment(0, 2) = curve.velocity(t);
    ds.segment(2, 2) = fh * f.inverse() * curve.velocity(t);
  };
  RollingPath bad{S, E, integrate(rhs, 0.0, pack_configuration(cfg), 1.0, tight())};
  const auto st = noslip_notwist_residual(bad);
  CHECK(st.slip < 1e-6);
  CHECK(st.twist > 0.1);

  // Sliding: contact point on the plane does not move.
  auto slide = [&](double t, const Vec& s, Vec& ds) {
    ds = Vec::Zero(s.size());
    ds.segment(0, 2) = curve.velocity(t);
  };
  RollingPath slipping{S, E, integrate(slide, 0.0, pack_configuration(cfg), 1.0, tight())};
  CHECK(noslip_notwist_residual(slipping).slip > 0.5);
}

TEST_CASE("configuration validation and JSON round trip") {
  const auto P = make_chart("paraboloid(0.5)");
  const auto S = make_chart("sphere(2)");
  const auto cfg = make_configuration(P, S, vec({0.3, -0.4}), vec({1.2, 0.7}), rotation2(-1.3));
  const auto back = configuration_from_json(to_json(cfg));
  CHECK(back.M->label() == "paraboloid(0.5)");
  CHECK(back.Mhat->label() == "sphere(2)");
  CHECK((back.x - cfg.x).norm() == 0.0);
  CHECK((back.f - cfg.f).norm() < 1e-15);
  CHECK((back.fhat - cfg.fhat).norm() < 1e-15);

  auto broken = cfg;
  broken.f *= 1.1;
  CHECK_THROWS_AS(broken.validate(), GeometryError);
  auto reflected = cfg;
  reflected.fhat.col(1) *= -1.0;
  CHECK_THROWS_AS(reflected.validate(), GeometryError);
  CHECK_THROWS_AS(make_configuration(P, make_chart("euclidean(3)"), vec({0, 0}), vec({0, 0, 0})), GeometryError);
  Mat reflection = Mat::Identity(2, 2);
  reflection(1, 1) = -1;
  CHECK_THROWS_AS(make_configuration(P, S, vec({0, 0}), vec({1, 1}), reflection), InputError);
  auto j = to_json(cfg);
  j["x"] = {0.1};
  CHECK_THROWS(configuration_from_json(j));
}

TEST_CASE("reference frame matrix of a rotated configuration is the rotation") {
  const auto P = make_chart("paraboloid(0.5)");
  const auto H = make_chart("hyperbolic-disk(1)");
  const auto cfg = make_configuration(P, H, vec({0.3, -0.4}), vec({0.2, 0.1}), rotation2(0.8));
  const Mat Q = reference_frame_matrix(cfg, gram_schmidt_field(P), gram_schmidt_field(H));
  CHECK((Q - rotation2(0.8)).norm() < 1e-13);
}

TEST_CASE("rotation connection of the sphere frame is cos(phi) d(theta)") {
  const auto S = make_chart("sphere(1)");
  const double phi = 0.7;
  CHECK(rotation_connection(*S, vec({phi, 0.2}), vec({0, 1})) == doctest::Approx(std::cos(phi)));
  CHECK(rotation_connection(*S, vec({phi, 0.2}), vec({1, 0})) == doctest::Approx(0.0));
  const Mat om = connection_matrix(*S, gram_schmidt_field(S), vec({phi, 0.2}), vec({0, 1}));
  CHECK(om(0, 1) == doctest::Approx(-std::cos(phi)).epsilon(1e-8));
  CHECK(om(1, 0) == doctest::Approx(std::cos(phi)).epsilon(1e-8));
  CHECK_THROWS_AS(rotation_connection(*make_chart("euclidean(3)"), Vec::Zero(3), Vec::Ones(3)), InputError);
}

TEST_CASE("distribution basis is orthonormal for the lifted metric and develops like the frames") {
  const auto M = make_chart("sphere(1)");
  const auto Mh = make_chart("paraboloid(0.7)");
  const auto cfg = make_configuration(M, Mh, vec({1.0, 0.2}), vec({0.1, -0.3}), rotation2(0.5));
  const auto e = gram_schmidt_field(M), eh = gram_schmidt_field(Mh);
  const auto dirs = distribution_basis(cfg, e, eh);
  REQUIRE(dirs.size() == 2);
  CHECK((lifted_metric_gram(cfg, dirs) - Mat::Identity(2, 2)).norm() < 1e-13);
  for (const auto& d : dirs) CHECK((d.fiber + d.fiber.transpose()).norm() < 1e-10);

  const auto curve = BaseCurve::line(cfg.x, vec({0.3, 0.6}), 0.0, 2.0);
  const auto via_basis = basis_development(cfg, curve, e, eh, tight());
  const auto via_frames = develop(cfg, curve, tight());
  const auto end = via_frames.config(via_frames.traj.size() - 1);
  const Vec sb = via_basis.back();
  CHECK((sb.segment(2, 2) - end.xhat).norm() < 1e-9);
  const Mat Qb = Eigen::Map<const Mat>(sb.data() + 4, 2, 2);
  CHECK((Qb - reference_frame_matrix(end, e, eh)).norm() < 1e-9);
}

TEST_CASE("polar projection restores orthonormality and rejects far frames") {
  const auto P = make_chart("paraboloid(0.9,3)");
  const Vec x = vec({0.2, 0.4, -0.1});
  const auto fp = orthonormal_frame_at(*P, x);
  Mat noisy = fp.f;
  noisy(0, 1) += 1e-4;
  noisy(2, 2) -= 2e-4;
  const Mat fixed = so_projection(noisy, P->g(x));
  CHECK(frame_defect(*P, x, fixed) < 1e-14);
  CHECK((fixed - fp.f).norm() < 1e-3);
  CHECK(so_projection(fp.f, P->g(x)).isApprox(fp.f, 1e-13));
  CHECK_THROWS_AS(so_projection(Mat(2.0 * fp.f), P->g(x)), GeometryError);
}

TEST_CASE("curvature gap") {
  const auto S = make_chart("sphere(1)");
  const auto E = make_chart("euclidean(2)");
  auto gap = curvature_gap(make_configuration(S, E, vec({1.0, 0.0}), vec({0, 0})));
  CHECK(gap.map(0, 0) == doctest::Approx(1.0));
  CHECK(gap.min_singular_value == doctest::Approx(1.0));
  gap = curvature_gap(make_configuration(S, S, vec({1.0, 0.0}), vec({2.0, 1.0}), rotation2(0.4)));
  CHECK(gap.min_singular_value < 1e-12);
  const auto S2 = make_chart("sphere(2)");
  gap = curvature_gap(make_configuration(S, S2, vec({1.0, 0.0}), vec({2.0, 1.0})));
  CHECK(gap.min_singular_value == doctest::Approx(0.75));
}

TEST_CASE("path table has one row per node") {
  const auto E = make_chart("euclidean(2)");
  const auto cfg = make_configuration(E, E, vec({0, 0}), vec({0, 0}));
  const auto path = develop(cfg, BaseCurve::line(cfg.x, vec({1, 0}), 0.0, 1.0));
  std::ostringstream os;
  write_path_csv(os, path, noslip_notwist_residual(path));
  const auto text = os.str();
  CHECK(text.rfind("t,x0,x1,xhat0,xhat1,", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) == path.traj.size() + 1);
}

TEST_CASE("develop requires the curve to start at the contact point") {
  const auto E = make_chart("euclidean(2)");
  const auto cfg = make_configuration(E, E, vec({0, 0}), vec({0, 0}));
  CHECK_THROWS_AS(develop(cfg, BaseCurve::line(vec({1, 0}), vec({1, 0}), 0.0, 1.0)), InputError);
}
