#include "upstairs/ode.hpp"

#include <doctest.h>

#include <cmath>

using namespace upstairs;

namespace {

OdeOptions tight(double tol = 1e-11) {
  OdeOptions o;
  o.atol = o.rtol = tol;
  return o;
}

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// y'' = -y written as a first-order system.
void oscillator(double, const Vec& y, Vec& dy) {
  dy.resize(2);
  dy << y(1), -y(0);
}

}  // namespace

TEST_CASE("exponential decay matches exp(-t) at nodes and between them") {
  const auto rhs = [](double, const Vec& y, Vec& dy) { dy = -y; };
  const auto tr = integrate(rhs, 0.0, Vec::Ones(1), 5.0, tight());
  REQUIRE(!tr.truncated);
  CHECK(tr.t_end() == doctest::Approx(5.0));
  double node_err = 0.0;
  for (std::size_t k = 0; k < tr.size(); ++k) node_err = std::max(node_err, std::abs(tr.y[k](0) - std::exp(-tr.t[k])));
  CHECK(node_err < 1e-10);

  double dense_err = 0.0;
  for (int i = 0; i <= 400; ++i) {
    const double s = 5.0 * i / 400.0;
    dense_err = std::max(dense_err, std::abs(tr.at(s)(0) - std::exp(-s)));
  }
  CHECK(dense_err < 1e-9);
}

TEST_CASE("oscillator phase and interpolant derivative") {
  const auto tr = integrate(oscillator, 0.0, vec2(1.0, 0.0), 20.0, tight());
  double err = 0.0, derr = 0.0;
  for (double s : tr.step_midpoints()) {
    err = std::max(err, (tr.at(s) - vec2(std::cos(s), -std::sin(s))).norm());
    derr = std::max(derr, (tr.derivative_at(s) - vec2(-std::sin(s), -std::cos(s))).norm());
  }
  CHECK(err < 1e-9);
  // The continuous extension is 4th order; its derivative is one order less accurate.
  CHECK(derr < 1e-5);
}

TEST_CASE("attached field replaces the interpolant derivative") {
  auto tr = integrate(oscillator, 0.0, vec2(1.0, 0.0), 3.0, tight(1e-6));
  tr.field = oscillator;
  for (double s : tr.step_midpoints()) {
    Vec expect;
    oscillator(s, tr.at(s), expect);
    CHECK((tr.derivative_at(s) - expect).norm() == doctest::Approx(0.0));
  }
}

TEST_CASE("backward integration returns to the start") {
  const auto fwd = integrate(oscillator, 0.0, vec2(0.3, -0.7), 4.0, tight(1e-12));
  const auto bwd = integrate(oscillator, 4.0, fwd.back(), 0.0, tight(1e-12));
  CHECK(bwd.t_end() == doctest::Approx(0.0));
  CHECK((bwd.back() - vec2(0.3, -0.7)).norm() < 1e-10);
  // Dense output of a backward run is indexed by decreasing time.
  CHECK((bwd.at(2.0) - fwd.at(2.0)).norm() < 1e-9);
}

TEST_CASE("domain errors in the right-hand side truncate the run") {
  // y' = 1 on y < 1; beyond that the field is undefined.
  const auto rhs = [](double, const Vec& y, Vec& dy) {
    if (y(0) >= 1.0) throw DomainError("outside");
    dy = Vec::Ones(1);
  };
  const auto tr = integrate(rhs, 0.0, Vec::Zero(1), 2.0, tight(1e-8));
  CHECK(tr.truncated);
  CHECK(!tr.truncation_reason.empty());
  CHECK(tr.t_end() < 1.0);
  CHECK(tr.t_end() > 0.99);
}

TEST_CASE("in_domain hook truncates and post_step hook counts projections") {
  StepHooks hooks;
  hooks.in_domain = [](const Vec& y) { return y(0) > 0.5; };
  const auto rhs = [](double, const Vec& y, Vec& dy) { dy = -y; };
  const auto tr = integrate(rhs, 0.0, Vec::Ones(1), 3.0, tight(1e-8), hooks);
  CHECK(tr.truncated);
  CHECK(tr.back()(0) > 0.5);
  CHECK(tr.t_end() < std::log(2.0) + 1e-8);

  StepHooks renorm;
  renorm.post_step = [](double, Vec& y) {
    const double r = y.norm();
    if (std::abs(r - 1.0) < 1e-14) return false;
    y /= r;
    return true;
  };
  const auto circ = integrate(oscillator, 0.0, vec2(1.0, 0.0), 50.0, tight(1e-6), renorm);
  CHECK(circ.projections > 0);
  for (const auto& y : circ.y) CHECK(y.norm() == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("step cap truncates") {
  OdeOptions o = tight(1e-12);
  o.max_steps = 10;
  const auto tr = integrate(oscillator, 0.0, vec2(1.0, 0.0), 100.0, o);
  CHECK(tr.truncated);
  CHECK(tr.accepted_steps <= 10);
}

TEST_CASE("cumulative quadrature of cos along a run equals sin") {
  const auto rhs = [](double, const Vec&, Vec& dy) { dy = Vec::Ones(1); };
  OdeOptions o = tight();
  o.max_step = 0.25;
  const auto tr = integrate(rhs, 0.0, Vec::Zero(1), 3.0, o);
  const auto I = cumulative_quadrature(tr, [](double t, const Vec&) { return std::cos(t); });
  REQUIRE(I.size() == tr.size());
  CHECK(I.front() == 0.0);
  for (std::size_t k = 0; k < tr.size(); ++k) CHECK(I[k] == doctest::Approx(std::sin(tr.t[k])).epsilon(1e-12));

  // The integrand may use the state: integral of y(t) = t is t^2 / 2.
  const auto J = cumulative_quadrature(tr, [](double, const Vec& y) { return y(0); });
  CHECK(J.back() == doctest::Approx(4.5).epsilon(1e-12));
}
