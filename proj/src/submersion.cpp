#include "upstairs/submersion.hpp"

#include "upstairs/geometry.hpp"
#include "upstairs/rolling.hpp"

#include <chrono>
#include <cmath>
#include <future>

namespace upstairs {

bool SubmersionTestbed::in_domain(const Vec& x, const Vec& y) const {
  if (x.size() != n || y.size() != nu || !x.allFinite() || !y.allFinite()) return false;
  return !domain || domain(x, y);
}

Mat SubmersionTestbed::lift(const Vec& x, const Vec& y) const {
  if (!in_domain(x, y)) throw DomainError(label + ": point outside testbed domain");
  return A(x, y);
}

void SubmersionTestbed::derivatives(const Vec& x, const Vec& y, std::vector<Mat>& dAx,
                                    std::vector<Mat>& dAy) const {
  // Richardson-extrapolated central differences, O(h^4).
  auto diff = [&](auto&& eval, int dim, std::vector<Mat>& out) {
    out.assign(static_cast<std::size_t>(dim), Mat());
    for (int k = 0; k < dim; ++k) {
      auto central = [&](double h) { return Mat((eval(k, h) - eval(k, -h)) / (2.0 * h)); };
      out[k] = (4.0 * central(0.5 * fd_step) - central(fd_step)) / 3.0;
    }
  };
  diff(
      [&](int k, double h) {
        Vec xs = x;
        xs(k) += h;
        return lift(xs, y);
      },
      n, dAx);
  diff(
      [&](int k, double h) {
        Vec ys = y;
        ys(k) += h;
        return lift(x, ys);
      },
      nu, dAy);
}

Vec BaseHamiltonian::grad_x(const Vec& x, const Vec& p) const {
  if (dH_dx) return dH_dx(x, p);
  return gradient_fd([&](const Vec& z) { return H(z, p); }, x);
}

Vec BaseHamiltonian::grad_p(const Vec& x, const Vec& p) const {
  if (dH_dp) return dH_dp(x, p);
  return gradient_fd([&](const Vec& z) { return H(x, z); }, p);
}

BaseHamiltonian BaseHamiltonian::riemannian(ChartPtr chart) {
  BaseHamiltonian h;
  h.label = "riemannian(" + chart->label() + ")";
  h.H = [chart](const Vec& x, const Vec& p) { return 0.5 * p.dot(sharp(*chart, x, p)); };
  h.dH_dp = [chart](const Vec& x, const Vec& p) { return sharp(*chart, x, p); };
  h.dH_dx = [chart](const Vec& x, const Vec& p) {
    const Vec w = sharp(*chart, x, p);
    const auto dg = chart->dg(x);
    Vec out(x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) out(k) = -0.5 * w.dot(dg[k] * w);
    return out;
  };
  return h;
}

BaseHamiltonian BaseHamiltonian::euclidean(int n) {
  BaseHamiltonian h;
  h.label = "euclidean(" + std::to_string(n) + ")";
  h.H = [](const Vec&, const Vec& p) { return 0.5 * p.squaredNorm(); };
  h.dH_dp = [](const Vec&, const Vec& p) { return p; };
  h.dH_dx = [](const Vec& x, const Vec&) { return Vec(Vec::Zero(x.size())); };
  return h;
}

ConnectionCoefficients connection_coefficients(const SubmersionTestbed& tb, const Vec& x, const Vec& y) {
  const Mat A = tb.lift(x, y);
  std::vector<Mat> dAx, dAy;
  tb.derivatives(x, y, dAx, dAy);
  ConnectionCoefficients cc;
  cc.gamma_bar.assign(static_cast<std::size_t>(tb.n), Mat::Zero(tb.nu, tb.nu));
  for (int i = 0; i < tb.n; ++i)
    for (int m = 0; m < tb.nu; ++m)
      for (int k = 0; k < tb.nu; ++k) cc.gamma_bar[i](m, k) = dAy[k](m, i);
  cc.curvature.assign(static_cast<std::size_t>(tb.nu), Mat::Zero(tb.n, tb.n));
  for (int k = 0; k < tb.nu; ++k) {
    for (int i = 0; i < tb.n; ++i) {
      for (int j = i + 1; j < tb.n; ++j) {
        double r = dAx[i](k, j) - dAx[j](k, i);
        for (int m = 0; m < tb.nu; ++m) r += A(m, i) * dAy[m](k, j) - A(m, j) * dAy[m](k, i);
        cc.curvature[k](i, j) = r;
        cc.curvature[k](j, i) = -r;
      }
    }
  }
  return cc;
}

CotangentState LiftedFlow::state(const Vec& s) const {
  const int n = testbed->n, nu = testbed->nu;
  CotangentState c;
  c.x = s.segment(0, n);
  c.y = s.segment(n, nu);
  c.b = s.segment(2 * n + nu, nu);
  c.a = s.segment(n + nu, n) + testbed->lift(c.x, c.y).transpose() * c.b;
  return c;
}

LiftedFlow lifted_hamiltonian_flow(const SubmersionTestbed& tb, const BaseHamiltonian& H,
                                   const CotangentState& p0, double T, const OdeOptions& options) {
  const int n = tb.n, nu = tb.nu;
  auto rhs = [&](double, const Vec& s, Vec& ds) {
    const Vec x = s.segment(0, n), y = s.segment(n, nu);
    const Vec Px = s.segment(n + nu, n), b = s.segment(2 * n + nu, nu);
    const Mat A = tb.lift(x, y);
    const Vec a = Px + A.transpose() * b;
    std::vector<Mat> dAx, dAy;
    tb.derivatives(x, y, dAx, dAy);
    const Vec xdot = H.grad_p(x, a);
    ds.resize(s.size());
    ds.segment(0, n) = xdot;
    ds.segment(n, nu) = A * xdot;
    const Vec hx = H.grad_x(x, a);
    for (int j = 0; j < n; ++j) ds(n + nu + j) = -hx(j) - b.dot(dAx[j] * xdot);
    for (int m = 0; m < nu; ++m) ds(2 * n + nu + m) = -b.dot(dAy[m] * xdot);
  };
  Vec s0(2 * (n + nu));
  s0 << p0.x, p0.y, p0.a - tb.lift(p0.x, p0.y).transpose() * p0.b, p0.b;
  StepHooks hooks;
  hooks.in_domain = [&](const Vec& s) { return tb.in_domain(s.segment(0, n), s.segment(n, nu)); };
  LiftedFlow out;
  out.testbed = &tb;
  out.canonical = integrate(rhs, 0.0, s0, T, options, hooks);
  return out;
}

Trajectory horizontal_lift(const SubmersionTestbed& tb, const BaseCurve& x_curve, const Vec& y0,
                           const OdeOptions& options) {
  auto rhs = [&](double t, const Vec& y, Vec& dy) { dy = tb.lift(x_curve.position(t), y) * x_curve.velocity(t); };
  return integrate(rhs, x_curve.t0, y0, x_curve.t1, options);
}

Trajectory nabla_bar_form_transport(const SubmersionTestbed& tb, const BaseCurve& x_curve,
                                    const BaseCurve& y_curve, const Vec& beta0, const OdeOptions& options,
                                    double horizontal_tol) {
  constexpr int probes = 64;
  double worst = 0.0;
  for (int k = 0; k <= probes; ++k) {
    const double t = x_curve.t0 + (x_curve.t1 - x_curve.t0) * k / probes;
    const Vec r = y_curve.velocity(t) - tb.lift(x_curve.position(t), y_curve.position(t)) * x_curve.velocity(t);
    worst = std::max(worst, r.norm());
  }
  if (worst > horizontal_tol) {
    throw InputError("curve is not horizontal: residual " + std::to_string(worst));
  }
  auto rhs = [&](double t, const Vec& b, Vec& db) {
    const auto cc = connection_coefficients(tb, x_curve.position(t), y_curve.position(t));
    const Vec xdot = x_curve.velocity(t);
    db = Vec::Zero(tb.nu);
    for (int i = 0; i < tb.n; ++i) db -= xdot(i) * cc.gamma_bar[i].transpose() * b;
  };
  return integrate(rhs, x_curve.t0, beta0, x_curve.t1, options);
}

Trajectory projected_force_flow(const SubmersionTestbed& tb, const BaseHamiltonian& H, const Vec& x0,
                                const Vec& a0, const Vec& y0, const Vec& beta0, double T,
                                const OdeOptions& options) {
  const int n = tb.n, nu = tb.nu;
  auto rhs = [&](double, const Vec& s, Vec& ds) {
    const Vec x = s.segment(0, n), a = s.segment(n, n);
    const Vec y = s.segment(2 * n, nu), b = s.segment(2 * n + nu, nu);
    const auto cc = connection_coefficients(tb, x, y);
    const Vec xdot = H.grad_p(x, a);
    Vec force = Vec::Zero(n);
    for (int k = 0; k < nu; ++k) force += b(k) * cc.curvature[k].transpose() * xdot;
    Vec db = Vec::Zero(nu);
    for (int i = 0; i < n; ++i) db -= xdot(i) * cc.gamma_bar[i].transpose() * b;
    ds.resize(s.size());
    ds.segment(0, n) = xdot;
    ds.segment(n, n) = -H.grad_x(x, a) + force;
    ds.segment(2 * n, nu) = tb.lift(x, y) * xdot;
    ds.segment(2 * n + nu, nu) = db;
  };
  Vec s0(2 * (n + nu));
  s0 << x0, a0, y0, beta0;
  StepHooks hooks;
  hooks.in_domain = [&](const Vec& s) { return tb.in_domain(s.segment(0, n), s.segment(2 * n, nu)); };
  return integrate(rhs, 0.0, s0, T, options, hooks);
}

ProjectionReport verify_projection(const SubmersionTestbed& tb, const BaseHamiltonian& H,
                                   const CotangentState& p0, double T, double tol) {
  const auto start = std::chrono::steady_clock::now();
  ProjectionReport rep;
  rep.testbed = tb.label;
  rep.hamiltonian = H.label;
  rep.tol = tol;
  rep.T = T;
  OdeOptions opt;
  opt.atol = opt.rtol = tol;
  const int n = tb.n, nu = tb.nu;

  try {
    auto lifted_job = std::async(std::launch::async, [&] { return lifted_hamiltonian_flow(tb, H, p0, T, opt); });
    const Trajectory down = projected_force_flow(tb, H, p0.x, p0.a, p0.y, p0.b, T, opt);
    const LiftedFlow up = lifted_job.get();

    rep.truncated = up.canonical.truncated || down.truncated;
    if (rep.truncated) rep.note = up.canonical.truncated ? up.canonical.truncation_reason : down.truncation_reason;
    const double t_end = std::min(up.canonical.t_end(), down.t_end());

    std::vector<double> grid = up.canonical.t;
    grid.insert(grid.end(), down.t.begin(), down.t.end());
    const double H0 = H.value(p0.x, p0.a);
    for (double t : grid) {
      if (t > t_end) continue;
      const CotangentState u = up.at(t);
      const Vec d = down.at(t);
      const double el = std::max((u.x - d.segment(0, n)).cwiseAbs().maxCoeff(),
                                 (u.a - d.segment(n, n)).cwiseAbs().maxCoeff());
      rep.sup_error_lambda = std::max(rep.sup_error_lambda, el);
      rep.sup_error_beta = std::max(rep.sup_error_beta, (u.b - d.segment(2 * n + nu, nu)).cwiseAbs().maxCoeff());
      rep.sup_error_lift = std::max(rep.sup_error_lift, (u.y - d.segment(2 * n, nu)).cwiseAbs().maxCoeff());
    }
    for (std::size_t k = 0; k < up.canonical.size(); ++k) {
      const auto s = up.node(k);
      rep.energy_drift_lifted = std::max(rep.energy_drift_lifted, std::abs(H.value(s.x, s.a) - H0));
    }
    for (const auto& s : down.y)
      rep.energy_drift_projected =
          std::max(rep.energy_drift_projected, std::abs(H.value(s.segment(0, n), s.segment(n, n)) - H0));
  } catch (const std::exception& e) {
    rep.truncated = true;
    rep.note = e.what();
  }
  rep.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

SubmersionTestbed make_testbed(const std::string& name) {
  const auto [head, args] = parse_call(name);
  if (head == "trivial") {
    if (args.size() != 2) throw InputError("trivial(n,nu) needs two arguments");
    SubmersionTestbed tb;
    tb.n = std::stoi(args[0]);
    tb.nu = std::stoi(args[1]);
    if (tb.n < 1 || tb.nu < 0 || tb.n > 16 || tb.nu > 16) throw InputError("bad dimensions in " + name);
    tb.label = "trivial(" + args[0] + "," + args[1] + ")";
    const int n = tb.n, nu = tb.nu;
    tb.A = [n, nu](const Vec&, const Vec&) { return Mat(Mat::Zero(nu, n)); };
    return tb;
  }
  if (head == "heisenberg") {
    SubmersionTestbed tb;
    tb.n = 2;
    tb.nu = 1;
    tb.label = "heisenberg";
    tb.A = [](const Vec& x, const Vec&) {
      Mat A(1, 2);
      A << -0.5 * x(1), 0.5 * x(0);
      return A;
    };
    return tb;
  }
  if (head == "monopole") {
    // Over the unit sphere chart: A = -cos(phi) d(theta), curvature sin(phi) d(phi) ^ d(theta).
    SubmersionTestbed tb;
    tb.n = 2;
    tb.nu = 1;
    tb.label = "monopole";
    auto chart = make_chart("sphere(1)");
    tb.domain = [chart](const Vec& x, const Vec&) { return chart->in_domain(x); };
    tb.A = [](const Vec& x, const Vec&) {
      Mat A(1, 2);
      A << 0.0, -std::cos(x(0));
      return A;
    };
    return tb;
  }
  if (head == "frame-bundle") {
    if (args.size() != 2) throw InputError("frame-bundle(M,Mhat) needs two chart names");
    return frame_bundle_testbed(make_chart(args[0]), make_chart(args[1]));
  }
  throw InputError("unknown testbed '" + name + "'");
}

std::vector<std::string> testbed_catalog() {
  return {"trivial(2,1)", "heisenberg", "monopole", "frame-bundle(sphere(1),euclidean(2))"};
}

}  // namespace upstairs
