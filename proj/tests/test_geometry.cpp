#include "upstairs/geometry.hpp"

#include <doctest.h>

#include <cmath>

using namespace upstairs;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// Brioschi formula for an orthogonal metric diag(E, G), evaluated with nested
// central differences of the metric entries only.
double brioschi_step(const ChartMetric& chart, const Vec& x, double h) {
  auto root = [&](const Vec& p) {
    const Mat g = chart.g(p);
    return std::sqrt(g(0, 0) * g(1, 1));
  };
  auto Gu_over = [&](const Vec& p) {
    const Vec e = vec2(h, 0);
    return (chart.g(p + e)(1, 1) - chart.g(p - e)(1, 1)) / (2 * h) / root(p);
  };
  auto Ev_over = [&](const Vec& p) {
    const Vec e = vec2(0, h);
    return (chart.g(p + e)(0, 0) - chart.g(p - e)(0, 0)) / (2 * h) / root(p);
  };
  const Vec eu = vec2(h, 0), ev = vec2(0, h);
  const double d1 = (Gu_over(x + eu) - Gu_over(x - eu)) / (2 * h);
  const double d2 = (Ev_over(x + ev) - Ev_over(x - ev)) / (2 * h);
  return -(d1 + d2) / (2.0 * root(x));
}

// The nested differences have an error expansion in h^2; one Richardson step removes it.
double brioschi(const ChartMetric& chart, const Vec& x) {
  return (4.0 * brioschi_step(chart, x, 1e-3) - brioschi_step(chart, x, 2e-3)) / 3.0;
}

}  // namespace

TEST_CASE("gauss curvature against closed forms") {
  CHECK(gauss_curvature(*make_chart("sphere(2)"), vec2(1.1, 0.4)) == doctest::Approx(0.25).epsilon(1e-10));
  CHECK(gauss_curvature(*make_chart("hyperbolic-disk(1.5)"), vec2(0.3, -0.5)) ==
        doctest::Approx(-1.0 / 2.25).epsilon(1e-10));
  const double c = 0.5;
  const Vec p = vec2(0.7, -0.2);
  const double r2 = p.squaredNorm();
  CHECK(gauss_curvature(*make_chart("paraboloid(0.5)"), p) ==
        doctest::Approx(4 * c * c / std::pow(1 + 4 * c * c * r2, 2)).epsilon(1e-10));
  CHECK(gauss_curvature(*make_chart("revolution(torus)"), vec2(0.9, 2.0)) ==
        doctest::Approx(std::cos(0.9) / (2 + std::cos(0.9))).epsilon(1e-10));
  CHECK(gauss_curvature(*make_chart("revolution(catenoid)"), vec2(0.6, 1.0)) ==
        doctest::Approx(-std::pow(std::cosh(0.6), -4)).epsilon(1e-10));
  CHECK(gauss_curvature(*make_chart("euclidean(2)"), vec2(3, 4)) == doctest::Approx(0.0));
}

TEST_CASE("gauss curvature agrees with the Brioschi formula on orthogonal charts") {
  const char* names[] = {"sphere(1)", "sphere(0.7)", "hyperbolic-disk(1)", "revolution(torus)", "revolution(catenoid)"};
  const Vec pts[] = {vec2(0.9, 0.1), vec2(1.4, -2.0), vec2(0.2, 0.3), vec2(2.5, 0.7)};
  for (const std::string name : names) {
    const auto chart = make_chart(name);
    for (const auto& x : pts) {
      if (!chart->in_domain(x)) continue;
      CAPTURE(name);
      CHECK(gauss_curvature(*chart, x) == doctest::Approx(brioschi(*chart, x)).epsilon(1e-6));
    }
  }
}

TEST_CASE("sphere christoffel symbols") {
  const auto chart = make_chart("sphere(3)");
  const double phi = 0.8;
  const auto G = christoffel(*chart, vec2(phi, 1.3));
  CHECK(G(0, 1, 1) == doctest::Approx(-std::sin(phi) * std::cos(phi)));
  CHECK(G(1, 0, 1) == doctest::Approx(std::cos(phi) / std::sin(phi)));
  CHECK(G(1, 1, 0) == doctest::Approx(std::cos(phi) / std::sin(phi)));
  CHECK(G(0, 0, 0) == doctest::Approx(0.0));
  CHECK(G(1, 1, 1) == doctest::Approx(0.0));
}

TEST_CASE("analytic and finite-difference metric partials agree") {
  for (const char* name : {"sphere(1)", "paraboloid(0.5,3)", "hyperbolic-disk(1,3)", "revolution(torus)"}) {
    const auto chart = make_chart(name);
    REQUIRE(chart->has_analytic_dg());
    Vec x = Vec::Constant(chart->dim(), 0.3);
    x(0) = 0.6;
    const auto a = chart->dg(x);
    const FiniteDifference fd{1e-4, true};
    const auto b = chart->dg_fd(x, fd);
    const auto a2 = chart->d2g(x);
    const auto b2 = chart->d2g_fd(x, fd);
    for (int k = 0; k < chart->dim(); ++k) {
      CHECK((a[k] - b[k]).norm() < 1e-8 * (1 + a[k].norm()));
      for (int l = 0; l < chart->dim(); ++l) CHECK((a2[k][l] - b2[k][l]).norm() < 1e-6 * (1 + a2[k][l].norm()));
    }
  }
}

TEST_CASE("christoffel derivative against differences of christoffel") {
  const auto chart = make_chart("paraboloid(0.7,3)");
  Vec x(3);
  x << 0.2, -0.4, 0.5;
  const auto dG = christoffel_derivative(*chart, x);
  constexpr double h = 1e-5;
  for (int m = 0; m < 3; ++m) {
    Vec e = Vec::Zero(3);
    e(m) = h;
    const auto Gp = christoffel(*chart, x + e), Gm = christoffel(*chart, x - e);
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) CHECK(dG[m](k, i, j) == doctest::Approx((Gp(k, i, j) - Gm(k, i, j)) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("lowered riemann of a surface is K det g") {
  const auto chart = make_chart("paraboloid(0.5)");
  const Vec x = vec2(0.4, 0.9);
  const auto R = riemann(*chart, x);
  const double K = gauss_curvature(*chart, x);
  CHECK(R.lowered(0, 1, 0, 1) == doctest::Approx(K * chart->g(x).determinant()).epsilon(1e-10));
  CHECK(R.lowered(0, 1, 1, 0) == doctest::Approx(-K * chart->g(x).determinant()).epsilon(1e-10));
}

TEST_CASE("frame curvature on the unit sphere is +1 on the (0,1) pair") {
  const auto chart = make_chart("sphere(1)");
  const auto fp = orthonormal_frame_at(*chart, vec2(1.0, 0.5));
  const Mat Om = curvature_form_in_frame(*chart, fp, fp.f.col(0), fp.f.col(1));
  CHECK(Om(0, 1) == doctest::Approx(1.0));
  CHECK(Om(1, 0) == doctest::Approx(-1.0));
  const auto K = frame_curvature(*chart, fp.x, fp.f);
  CHECK(K(0, 1, 0, 1) == doctest::Approx(1.0));
  CHECK(K(0, 1, 1, 0) == doctest::Approx(-1.0));

  const TangentAtPoint X{fp.x, fp.f.col(0)}, Yelsewhere{vec2(1.1, 0.5), fp.f.col(1)};
  CHECK_THROWS_AS(curvature_form_in_frame(*chart, fp, X, Yelsewhere), GeometryError);
}

TEST_CASE("orthonormal frames, orientation and degenerate seeds") {
  const auto chart = make_chart("paraboloid(0.8)");
  const Vec x = vec2(0.5, 1.0);
  const auto fp = orthonormal_frame_at(*chart, x);
  CHECK(frame_defect(*chart, x, fp.f) < 1e-14);
  CHECK(fp.f.determinant() > 0);

  Mat flipped(2, 2);
  flipped << 0, 1, 1, 0;
  const auto fq = orthonormal_frame_at(*chart, x, flipped);
  CHECK(fq.f.determinant() > 0);
  CHECK(frame_defect(*chart, x, fq.f) < 1e-14);

  Mat degenerate(2, 2);
  degenerate << 1, 2, 1, 2;
  CHECK_THROWS_AS(orthonormal_frame_at(*chart, x, degenerate), GeometryError);
}

TEST_CASE("flat and sharp are inverse") {
  const auto chart = make_chart("hyperbolic-disk(1,3)");
  Vec x(3), v(3);
  x << 0.1, 0.2, -0.3;
  v << 1.0, -2.0, 0.5;
  CHECK((sharp(*chart, x, flat(*chart, x, v)) - v).norm() < 1e-13);
  CHECK(flat(*chart, x, v).dot(v) == doctest::Approx(v.dot(chart->g(x) * v)));
}

TEST_CASE("parallel transport around a latitude circle rotates by 2 pi cos(phi)") {
  const auto chart = make_chart("sphere(1)");
  const double phi0 = 0.9;
  const auto curve = BaseCurve::line(vec2(phi0, 0.0), vec2(0.0, 1.0), 0.0, 2 * M_PI);
  OdeOptions o;
  o.atol = o.rtol = 1e-12;
  const auto tr = parallel_transport(*chart, curve, vec2(1.0, 0.0), o);
  const Vec V = tr.back();
  // Components in the orthonormal frame (d_phi, d_theta / sin phi).
  const double a = V(0), b = std::sin(phi0) * V(1);
  const double angle = 2 * M_PI * std::cos(phi0);
  CHECK(a == doctest::Approx(std::cos(angle)).epsilon(1e-9));
  CHECK(b == doctest::Approx(-std::sin(angle)).epsilon(1e-9));
  // Equivalently the holonomy angle is the enclosed area 2 pi (1 - cos phi) modulo 2 pi.
  const double hol = std::atan2(b, a);
  CHECK(std::remainder(hol - 2 * M_PI * (1 - std::cos(phi0)), 2 * M_PI) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("great circles on the sphere stay in a plane through the centre") {
  const auto chart = make_chart("sphere(1)");
  const Vec x0 = vec2(1.2, 0.3), v0 = vec2(0.4, 0.9);
  OdeOptions o;
  o.atol = o.rtol = 1e-12;
  const auto tr = geodesic_flow(*chart, x0, v0, 2.0, o);
  REQUIRE(!tr.truncated);
  auto embed = [](const Vec& x) {
    Eigen::Vector3d p(std::sin(x(0)) * std::cos(x(1)), std::sin(x(0)) * std::sin(x(1)), std::cos(x(0)));
    return p;
  };
  auto dembed = [](const Vec& x, const Vec& v) {
    Eigen::Vector3d d(std::cos(x(0)) * std::cos(x(1)) * v(0) - std::sin(x(0)) * std::sin(x(1)) * v(1),
                      std::cos(x(0)) * std::sin(x(1)) * v(0) + std::sin(x(0)) * std::cos(x(1)) * v(1),
                      -std::sin(x(0)) * v(0));
    return d;
  };
  const Eigen::Vector3d normal = embed(x0).cross(dembed(x0, v0)).normalized();
  const double speed0 = std::sqrt(v0.dot(chart->g(x0) * v0));
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const Vec x = tr.y[k].head(2), v = tr.y[k].tail(2);
    CHECK(std::abs(normal.dot(embed(x))) < 1e-10);
    CHECK(std::sqrt(v.dot(chart->g(x) * v)) == doctest::Approx(speed0).epsilon(1e-10));
  }
  // Arc length along a great circle is the angle between the endpoints.
  const double angle = std::acos(embed(x0).dot(embed(tr.back().head(2))));
  CHECK(angle == doctest::Approx(2.0 * speed0).epsilon(1e-9));
  CHECK(geodesic_residual(*chart, tr) < 1e-6);
}

TEST_CASE("path length of a circle of latitude") {
  const auto chart = make_chart("sphere(2)");
  const double phi = 0.5;
  const double L = path_length(*chart, [phi](double t) { return vec2(phi, 2 * M_PI * t); }, 0.0, 1.0);
  CHECK(L == doctest::Approx(2 * M_PI * 2 * std::sin(phi)).epsilon(1e-9));
}

TEST_CASE("sampled and reparametrized curves") {
  std::vector<double> t;
  std::vector<Vec> x;
  for (int i = 0; i <= 200; ++i) {
    t.push_back(i / 100.0);
    x.push_back(vec2(std::sin(t.back()), t.back() * t.back()));
  }
  const auto c = BaseCurve::from_samples(t, x);
  CHECK((c.position(0.555) - vec2(std::sin(0.555), 0.555 * 0.555)).norm() < 1e-6);
  CHECK((c.velocity(1.234) - vec2(std::cos(1.234), 2 * 1.234)).norm() < 1e-3);
  CHECK_THROWS_AS(BaseCurve::from_samples({0.0, 0.0}, {vec2(0, 0), vec2(1, 1)}), InputError);

  const auto line = BaseCurve::line(vec2(1, 2), vec2(3, -1), 0.0, 1.0);
  const auto slow = line.reparametrized([](double s) { return s * s; }, [](double s) { return 2 * s; }, 0.0, 1.0);
  CHECK((slow.position(0.5) - line.position(0.25)).norm() < 1e-15);
  CHECK((slow.velocity(0.5) - vec2(3, -1)).norm() < 1e-15);
}

TEST_CASE("chart catalog parsing and domain checks") {
  for (const auto& name : chart_catalog()) CHECK(make_chart(name)->label() == name);
  CHECK(make_chart("euclidean(3)")->dim() == 3);
  CHECK_THROWS_AS(make_chart("klein-bottle"), InputError);
  CHECK_THROWS_AS(make_chart("sphere(-1)"), InputError);
  CHECK_THROWS_AS(make_chart("sphere(1"), InputError);
  const auto s = make_chart("sphere(1)");
  CHECK(!s->in_domain(vec2(0.0, 0.0)));
  CHECK_THROWS_AS(s->require(vec2(0.0, 0.0)), DomainError);
  const auto [head, args] = parse_call("paraboloid(0.5,3)");
  CHECK(head == "paraboloid");
  CHECK(args == std::vector<std::string>{"0.5", "3"});
}
