#include "upstairs/geodesics.hpp"

#include <array>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace upstairs {

namespace {

Vec flatten(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }
Mat unflatten(const Vec& v, int n) { return Eigen::Map<const Mat>(v.data(), n, n); }

int off_u(int n) { return 2 * n + 2 * n * n; }
int off_v(int n) { return off_u(n) + n; }
int off_l(int n) { return off_u(n) + 2 * n; }

// <Lambda, Omega> with Omega the frame form evaluated on (f_c, f_a), contracted with u in c.
// Returns the n-vector a -> sum_{alpha<beta} Lambda(alpha,beta) sum_c u_c K(alpha,beta,c,a).
Vec pair_with_curvature(const Mat& Lambda, const Tensor4& K, const Vec& u) {
  const auto n = static_cast<int>(u.size());
  Vec out = Vec::Zero(n);
  for (int al = 0; al < n; ++al)
    for (int be = al + 1; be < n; ++be) {
      const double l = Lambda(al, be);
      if (l == 0.0) continue;
      for (int a = 0; a < n; ++a)
        for (int c = 0; c < n; ++c) out(a) += l * u(c) * K(al, be, c, a);
    }
  return out;
}

bool is_flat_euclidean(const ChartMetric& c) { return c.label().rfind("euclidean(", 0) == 0; }

// Covector m -> <Lambda, Omega(f)(X, e_m)> on a chart.
Vec lambda_form_covector(const Mat& Lambda, const Riemann& r, const Mat& g, const Mat& f, const Vec& X,
                         const Mat& pushforward) {
  const auto n = static_cast<int>(X.size());
  Vec out(n);
  for (int m = 0; m < n; ++m) {
    const Mat om = f.transpose() * g * curvature_operator(r, X, pushforward.col(m)) * f;
    out(m) = so_inner(Lambda, om);
  }
  return out;
}

double unwrap(double prev, double cur) {
  while (cur - prev > M_PI) cur -= 2.0 * M_PI;
  while (cur - prev < -M_PI) cur += 2.0 * M_PI;
  return cur;
}

}  // namespace

int geodesic_state_size(int n) { return off_l(n) + skew_dim(n); }

Vec pack_geodesic(const RollingGeodesicState& s) {
  const int n = s.cfg.dim();
  Vec out(geodesic_state_size(n));
  out.head(off_u(n)) = pack_configuration(s.cfg);
  out.segment(off_u(n), n) = s.u;
  out.segment(off_v(n), n) = s.v;
  out.segment(off_l(n), skew_dim(n)) = upper_of_skew(s.Lambda);
  return out;
}

RollingGeodesicState unpack_geodesic(ChartPtr M, ChartPtr Mhat, const Vec& state) {
  const int n = M->dim();
  RollingGeodesicState s;
  s.cfg = unpack_configuration(std::move(M), std::move(Mhat), state.head(off_u(n)));
  s.u = state.segment(off_u(n), n);
  s.v = state.segment(off_v(n), n);
  s.Lambda = skew_from_upper(state.segment(off_l(n), skew_dim(n)), n);
  return s;
}

void geodesic_rhs(const ChartMetric& M, const ChartMetric& Mh, const Vec& st, Vec& ds) {
  const int n = M.dim();
  const Vec x = st.segment(0, n), xh = st.segment(n, n);
  const Mat f = unflatten(st.segment(2 * n, n * n), n);
  const Mat fh = unflatten(st.segment(2 * n + n * n, n * n), n);
  const Vec u = st.segment(off_u(n), n), v = st.segment(off_v(n), n);
  const Mat Lambda = skew_from_upper(st.segment(off_l(n), skew_dim(n)), n);

  const Vec xdot = f * u;
  const Vec xhdot = fh * u;
  const Tensor4 K = frame_curvature(M, x, f);
  const Tensor4 Kh = frame_curvature(Mh, xh, fh);
  const Vec hat_term = pair_with_curvature(Lambda, Kh, u);

  ds.resize(st.size());
  ds.segment(0, n) = xdot;
  ds.segment(n, n) = xhdot;
  ds.segment(2 * n, n * n) = flatten(-contract_christoffel(christoffel(M, x), xdot) * f);
  ds.segment(2 * n + n * n, n * n) = flatten(-contract_christoffel(christoffel(Mh, xh), xhdot) * fh);
  ds.segment(off_u(n), n) = -(pair_with_curvature(Lambda, K, u) - hat_term);
  ds.segment(off_v(n), n) = -hat_term;
  ds.segment(off_l(n), skew_dim(n)) = upper_of_skew(u * v.transpose() - v * u.transpose());
}

Vec geodesic_rhs(const RollingGeodesicState& s) {
  Vec ds;
  geodesic_rhs(*s.cfg.M, *s.cfg.Mhat, pack_geodesic(s), ds);
  return ds;
}

GeodesicRun integrate_geodesic(const RollingGeodesicState& s0, double T, const GeodesicOptions& options) {
  s0.cfg.validate();
  const int n = s0.cfg.dim();
  if (s0.u.size() != n || s0.v.size() != n || s0.Lambda.rows() != n || s0.Lambda.cols() != n)
    throw InputError("geodesic data has wrong dimension");
  if ((s0.Lambda + s0.Lambda.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw InputError("Lambda must be skew");
  const auto& M = *s0.cfg.M;
  const auto& Mh = *s0.cfg.Mhat;
  const int off_f = 2 * n, off_fh = 2 * n + n * n;

  auto rhs = [&](double, const Vec& st, Vec& ds) { geodesic_rhs(M, Mh, st, ds); };
  StepHooks hooks;
  hooks.in_domain = [&](const Vec& st) { return M.in_domain(st.segment(0, n)) && Mh.in_domain(st.segment(n, n)); };
  hooks.post_step = [&](double, Vec& st) {
    const Vec x = st.segment(0, n), xh = st.segment(n, n);
    const Mat f = unflatten(st.segment(off_f, n * n), n);
    const Mat fh = unflatten(st.segment(off_fh, n * n), n);
    if (frame_defect(M, x, f) <= options.reproject_threshold && frame_defect(Mh, xh, fh) <= options.reproject_threshold)
      return false;
    st.segment(off_f, n * n) = flatten(so_projection(f, M.g(x)));
    st.segment(off_fh, n * n) = flatten(so_projection(fh, Mh.g(xh)));
    return true;
  };

  GeodesicRun run{s0.cfg.M, s0.cfg.Mhat, {}};
  run.traj = integrate(rhs, 0.0, pack_geodesic(s0), T, options.ode, hooks);
  run.traj.field = [Mp = s0.cfg.M, Mhp = s0.cfg.Mhat](double, const Vec& st, Vec& ds) { geodesic_rhs(*Mp, *Mhp, st, ds); };

  auto& ch = run.traj.channels;
  auto& speed = ch["speed"];
  for (const auto& st : run.traj.y) speed.push_back(st.segment(off_u(n), n).norm());
  if (n == 2) {
    auto& theta = ch["theta"];
    auto& L = ch["L"];
    auto& kappa = ch["kappa"];
    auto& kappahat = ch["kappahat"];
    auto& sing = ch["rho_singular"];
    double prev = 0.0;
    for (std::size_t k = 0; k < run.traj.size(); ++k) {
      const Vec& st = run.traj.y[k];
      const Vec u = st.segment(off_u(n), n);
      double th = std::atan2(u(1), u(0));
      if (k > 0) th = unwrap(prev, th);
      prev = th;
      theta.push_back(th);
      L.push_back(kChargeSign * st(off_l(n)));
      const double kp = gauss_curvature(M, st.segment(0, n));
      const double kh = gauss_curvature(Mh, st.segment(n, n));
      kappa.push_back(kp);
      kappahat.push_back(kh);
      sing.push_back(std::abs(kp - kh) < options.curvature_floor ? 1.0 : 0.0);
    }
  }
  return run;
}

namespace {

struct CovariantParts {
  double acceleration = 0.0;
  double v_transport = 0.0;
  double lambda = 0.0;
  double frames = 0.0;
  [[nodiscard]] double max() const { return std::max({acceleration, v_transport, lambda, frames}); }
};

CovariantParts covariant_parts_at(const GeodesicRun& run, double s) {
  const int n = run.dim();
  const auto& M = *run.M;
  const auto& Mh = *run.Mhat;
  const Vec st = run.traj.at(s), ds = run.traj.derivative_at(s);
  const Vec x = st.segment(0, n), xh = st.segment(n, n);
  const Mat f = unflatten(st.segment(2 * n, n * n), n);
  const Mat fh = unflatten(st.segment(2 * n + n * n, n * n), n);
  const Mat fdot = unflatten(ds.segment(2 * n, n * n), n);
  const Mat fhdot = unflatten(ds.segment(2 * n + n * n, n * n), n);
  const Vec u = st.segment(off_u(n), n), v = st.segment(off_v(n), n);
  const Vec udot = ds.segment(off_u(n), n), vdot = ds.segment(off_v(n), n);
  const Mat Lambda = skew_from_upper(st.segment(off_l(n), skew_dim(n)), n);
  const Mat Ldot = skew_from_upper(ds.segment(off_l(n), skew_dim(n)), n);

  const Mat g = M.g(x), gh = Mh.g(xh);
  const Tensor3 gam = christoffel(M, x), gamh = christoffel(Mh, xh);
  const Riemann r = riemann(M, x), rh = riemann(Mh, xh);
  const Mat q = fh * f.inverse();
  const Vec gdot = f * u;
  const Mat I = Mat::Identity(n, n);

  // nabla_gdot gdot = -sharp <Lambda, Omega(gdot, .) - Omegahat(q gdot, q .)>
  const Vec xi = lambda_form_covector(Lambda, r, g, f, gdot, I) - lambda_form_covector(Lambda, rh, gh, fh, q * gdot, q);
  const Vec accel = fdot * u + f * udot + christoffel_quadratic(gam, gdot, gdot);
  CovariantParts p;
  p.acceleration = (accel + g.ldlt().solve(xi)).norm();

  // nabla_gdot V = -sharp <Lambda, Omegahat(q gdot, q .)>
  const Vec zeta = lambda_form_covector(Lambda, rh, gh, fh, q * gdot, q);
  const Vec V = f * v;
  const Vec nablaV = fdot * v + f * vdot + contract_christoffel(gam, gdot) * V;
  p.v_transport = (nablaV + g.ldlt().solve(zeta)).norm();

  p.lambda = (Ldot - (u * v.transpose() - v * u.transpose())).cwiseAbs().maxCoeff();

  const Vec xhdot = ds.segment(n, n);
  p.frames = std::max({(fdot + contract_christoffel(gam, gdot) * f).cwiseAbs().maxCoeff(),
                       (fhdot + contract_christoffel(gamh, xhdot) * fh).cwiseAbs().maxCoeff(),
                       (ds.segment(0, n) - gdot).norm(), (xhdot - q * gdot).norm()});
  return p;
}

}  // namespace

double covariant_residual(const GeodesicRun& run) {
  double worst = 0.0;
  for (double s : run.traj.step_midpoints()) worst = std::max(worst, covariant_parts_at(run, s).max());
  return worst;
}

GeodesicMonitors geodesic_monitors(const GeodesicRun& run) {
  const int n = run.dim();
  GeodesicMonitors m;
  const auto& tr = run.traj;
  const double s0 = tr.y.front().segment(off_u(n), n).norm();
  for (const auto& st : tr.y) {
    m.speed_drift = std::max(m.speed_drift, std::abs(st.segment(off_u(n), n).norm() - s0));
    const auto s = unpack_geodesic(run.M, run.Mhat, st);
    m.frame_defect = std::max({m.frame_defect, frame_defect(*run.M, s.cfg.x, s.cfg.f),
                               frame_defect(*run.Mhat, s.cfg.xhat, s.cfg.fhat)});
    m.skew_defect = std::max(m.skew_defect, (s.Lambda + s.Lambda.transpose()).cwiseAbs().maxCoeff());
  }
  m.covariant_residual = covariant_residual(run);
  RollingPath path{run.M, run.Mhat, {}};
  path.traj = tr;
  const auto st = noslip_notwist_residual(path);
  m.slip = st.slip;
  m.twist = st.twist;
  if (auto it = tr.channels.find("rho_singular"); it != tr.channels.end())
    for (double f : it->second) m.rho_singular = m.rho_singular || f > 0.5;
  return m;
}

VTildeResidual vtilde_symmetry_check(const GeodesicRun& run) {
  const int n = run.dim();
  const auto& M = *run.M;
  VTildeResidual res;
  for (double s : run.traj.step_midpoints()) {
    const Vec st = run.traj.at(s), ds = run.traj.derivative_at(s);
    const Vec x = st.segment(0, n);
    const Mat f = unflatten(st.segment(2 * n, n * n), n);
    const Mat fdot = unflatten(ds.segment(2 * n, n * n), n);
    const Vec u = st.segment(off_u(n), n);
    const Vec vt = st.segment(off_v(n), n) + u;
    const Vec vtdot = ds.segment(off_v(n), n) + ds.segment(off_u(n), n);
    const Mat Lambda = skew_from_upper(st.segment(off_l(n), skew_dim(n)), n);
    const Mat Ldot = skew_from_upper(ds.segment(off_l(n), skew_dim(n)), n);

    res.lambda_identity = std::max(res.lambda_identity,
                                   (Ldot - (u * vt.transpose() - vt * u.transpose())).cwiseAbs().maxCoeff());

    const Mat g = M.g(x);
    const Vec gdot = f * u;
    const Vec eta = lambda_form_covector(Lambda, riemann(M, x), g, f, gdot, Mat::Identity(n, n));
    const Vec nablaVt = fdot * vt + f * vtdot + contract_christoffel(christoffel(M, x), gdot) * (f * vt);
    res.transport_identity = std::max(res.transport_identity, (nablaVt + g.ldlt().solve(eta)).norm());
  }
  return res;
}

// ---- 2D reduction ----

RollingGeodesicState to_geodesic_state(const Pendulum2DState& p) {
  if (p.cfg.dim() != 2) throw InputError("pendulum state needs 2-dimensional charts");
  RollingGeodesicState s;
  s.cfg = p.cfg;
  const Vec e(Eigen::Vector2d(std::cos(p.theta), std::sin(p.theta)));
  const Vec eperp(Eigen::Vector2d(-std::sin(p.theta), std::cos(p.theta)));
  s.u = p.a * e;
  s.v = kVSign * (p.b1 * e + p.b2 * eperp);
  s.Lambda = Mat::Zero(2, 2);
  s.Lambda(0, 1) = p.L / kChargeSign;
  s.Lambda(1, 0) = -s.Lambda(0, 1);
  return s;
}

Pendulum2DState to_pendulum_state(const RollingGeodesicState& s) {
  if (s.cfg.dim() != 2) throw InputError("pendulum state needs 2-dimensional charts");
  Pendulum2DState p;
  p.cfg = s.cfg;
  p.a = s.u.norm();
  p.theta = std::atan2(s.u(1), s.u(0));
  const Vec e(Eigen::Vector2d(std::cos(p.theta), std::sin(p.theta)));
  const Vec eperp(Eigen::Vector2d(-std::sin(p.theta), std::cos(p.theta)));
  p.b1 = kVSign * s.v.dot(e);
  p.b2 = kVSign * s.v.dot(eperp);
  p.L = kChargeSign * s.Lambda(0, 1);
  return p;
}

namespace {

struct Curvatures {
  double k, kh, kdot, khdot;
};

Curvatures curvatures_along(const ChartMetric& M, const ChartMetric& Mh, const Vec& x, const Vec& xh,
                            const Vec& xdot, const Vec& xhdot) {
  Curvatures c;
  c.k = gauss_curvature(M, x);
  c.kh = gauss_curvature(Mh, xh);
  auto kM = [&](const Vec& z) { return gauss_curvature(M, z); };
  auto kMh = [&](const Vec& z) { return gauss_curvature(Mh, z); };
  c.kdot = gradient_fd(kM, x, 1e-4).dot(xdot);
  c.khdot = gradient_fd(kMh, xh, 1e-4).dot(xhdot);
  return c;
}

void reduced_rhs(const ChartMetric& M, const ChartMetric& Mh, double a, double floor, const Vec& st, Vec& ds) {
  const double th = st(0), L = st(1), b1 = st(2), b2 = st(3);
  const Vec x = st.segment(4, 2), xh = st.segment(6, 2);
  const Mat f = unflatten(st.segment(8, 4), 2), fh = unflatten(st.segment(12, 4), 2);
  const Vec u(Eigen::Vector2d(a * std::cos(th), a * std::sin(th)));
  const Vec xdot = f * u, xhdot = fh * u;
  const auto c = curvatures_along(M, Mh, x, xh, xdot, xhdot);
  const double gap = c.k - c.kh;
  const double thdot = -L * gap / kChargeSign;
  double w = 0.0;
  if (std::abs(gap) >= floor) w = (c.khdot * c.k - c.kh * c.kdot) / (gap * gap);
  ds.resize(st.size());
  ds(0) = thdot;
  ds(1) = kChargeSign * kVSign * a * b2;
  ds(2) = thdot * b2;
  ds(3) = -thdot * b1 - a * L * c.kh / (kChargeSign * kVSign);
  ds.segment(4, 2) = xdot;
  ds.segment(6, 2) = xhdot;
  ds.segment(8, 4) = flatten(-contract_christoffel(christoffel(M, x), xdot) * f);
  ds.segment(12, 4) = flatten(-contract_christoffel(christoffel(Mh, xh), xhdot) * fh);
  ds(16) = std::sin(th) * w;
  ds(17) = std::cos(th) * w;
}

}  // namespace

ReducedRun reduce_2d(const Pendulum2DState& s0, double T, const GeodesicOptions& options) {
  s0.cfg.validate();
  if (s0.cfg.dim() != 2) throw InputError("reduce_2d needs 2-dimensional charts");
  const auto& M = *s0.cfg.M;
  const auto& Mh = *s0.cfg.Mhat;
  const double a = s0.a;
  const double floor = options.curvature_floor;

  auto rhs = [&](double, const Vec& st, Vec& ds) { reduced_rhs(M, Mh, a, floor, st, ds); };

  Vec y0(18);
  y0 << s0.theta, s0.L, s0.b1, s0.b2, s0.cfg.x, s0.cfg.xhat, flatten(s0.cfg.f), flatten(s0.cfg.fhat), 0.0, 0.0;
  StepHooks hooks;
  hooks.in_domain = [&](const Vec& st) { return M.in_domain(st.segment(4, 2)) && Mh.in_domain(st.segment(6, 2)); };
  hooks.post_step = [&](double, Vec& st) {
    const Vec x = st.segment(4, 2), xh = st.segment(6, 2);
    const Mat f = unflatten(st.segment(8, 4), 2), fh = unflatten(st.segment(12, 4), 2);
    if (frame_defect(M, x, f) <= options.reproject_threshold && frame_defect(Mh, xh, fh) <= options.reproject_threshold)
      return false;
    st.segment(8, 4) = flatten(so_projection(f, M.g(x)));
    st.segment(12, 4) = flatten(so_projection(fh, Mh.g(xh)));
    return true;
  };

  ReducedRun run{s0.cfg.M, s0.cfg.Mhat, a, {}, false};
  run.traj = integrate(rhs, 0.0, y0, T, options.ode, hooks);
  run.traj.field = [Mp = s0.cfg.M, Mhp = s0.cfg.Mhat, a, floor](double, const Vec& st, Vec& ds) {
    reduced_rhs(*Mp, *Mhp, a, floor, st, ds);
  };
  auto& sing = run.traj.channels["rho_singular"];
  for (const auto& st : run.traj.y) {
    const double gap = gauss_curvature(M, st.segment(4, 2)) - gauss_curvature(Mh, st.segment(6, 2));
    const bool s = std::abs(gap) < floor;
    sing.push_back(s ? 1.0 : 0.0);
    run.rho_singular = run.rho_singular || s;
  }
  return run;
}

PendulumConstants fit_pendulum_constants(const Pendulum2DState& s0) {
  const double k = gauss_curvature(*s0.cfg.M, s0.cfg.x);
  const double kh = gauss_curvature(*s0.cfg.Mhat, s0.cfg.xhat);
  if (std::abs(k - kh) < 1e-12) throw GeometryError("curvatures coincide; pendulum constants undefined");
  const double rho = 1.0 / (k - kh);
  const double c0 = s0.b1 + s0.a * kh * rho;
  PendulumConstants pc;
  pc.A = s0.a * std::hypot(c0, s0.b2);
  pc.phi0 = s0.theta - std::atan2(s0.b2, -c0);
  return pc;
}

double memory_F(const Vec& st) { return std::sin(st(0)) * st(17) - std::cos(st(0)) * st(16); }
double memory_G(const Vec& st) { return std::cos(st(0)) * st(17) + std::sin(st(0)) * st(16); }

double pendulum_residual(const ReducedRun& run, const PendulumConstants& c) {
  if (run.rho_singular) throw GeometryError("curvature gap below floor; pendulum form unavailable");
  const auto& M = *run.M;
  const auto& Mh = *run.Mhat;
  const double a = run.a;
  double worst = 0.0;
  for (double s : run.traj.step_midpoints()) {
    const Vec st = run.traj.at(s), ds = run.traj.derivative_at(s);
    const auto cv = curvatures_along(M, Mh, st.segment(4, 2), st.segment(6, 2), ds.segment(4, 2), ds.segment(6, 2));
    const double gap = cv.k - cv.kh;
    const double rho = 1.0 / gap;
    const double rhodot = -rho * rho * (cv.kdot - cv.khdot);
    const double thdot = ds(0);
    const double thddot = -(ds(1) * gap + st(1) * (cv.kdot - cv.khdot)) / kChargeSign;
    const double r = thddot + rhodot / rho * thdot - c.A / rho * std::sin(st(0) - c.phi0) + a * a / rho * memory_F(st);
    worst = std::max(worst, std::abs(r));
  }
  return worst;
}

ClosedFormB closed_form_b(const ReducedRun& run, const PendulumConstants& c) {
  const double a = run.a;
  ClosedFormB out;
  for (const auto& st : run.traj.y) {
    const double k = gauss_curvature(*run.M, st.segment(4, 2));
    const double kh = gauss_curvature(*run.Mhat, st.segment(6, 2));
    const double rho = 1.0 / (k - kh);
    const double th = st(0);
    const double b2 = c.A / a * std::sin(th - c.phi0) - a * memory_F(st);
    const double b1 = -a * kh * rho - c.A / a * std::cos(th - c.phi0) + a * memory_G(st);
    out.b1.push_back(b1);
    out.b2.push_back(b2);
    out.max_error = std::max({out.max_error, std::abs(b1 - st(2)), std::abs(b2 - st(3))});
  }
  return out;
}

double reduction_discrepancy(const ReducedRun& reduced, const GeodesicRun& full) {
  std::vector<double> grid = reduced.traj.t;
  grid.insert(grid.end(), full.traj.t.begin(), full.traj.t.end());
  const double t_end = std::min(reduced.traj.t_end(), full.traj.t_end());
  double worst = 0.0;
  for (double t : grid) {
    if (t > t_end) continue;
    const Vec r = reduced.traj.at(t), g = full.traj.at(t);
    worst = std::max({worst, (r.segment(4, 2) - g.segment(0, 2)).norm(), (r.segment(6, 2) - g.segment(2, 2)).norm()});
  }
  return worst;
}

// ---- rolling on R^n ----

Vec RnRolling::x_a(double t) const { return form_a.at(t).head(M->dim()); }

Vec RnRolling::x_b(double t) const {
  const int n = M->dim();
  return form_b.at(t).segment(2 * n, n);
}

Vec RnRolling::xhat_b(double t) const {
  const int n = M->dim();
  return xhat0 + fhat0 * form_b.at(t).head(n);
}

RnRolling rn_rolling_flow(const RollingGeodesicState& s0, double T, const OdeOptions& options) {
  s0.cfg.validate();
  const int n = s0.cfg.dim();
  if (!is_flat_euclidean(*s0.cfg.Mhat)) throw InputError("rolling on R^n needs a euclidean target chart");
  const auto& M = *s0.cfg.M;
  const Mat f0 = s0.cfg.f;
  const Mat Lambda0 = s0.Lambda;
  const Vec v0 = s0.v;
  StepHooks hooks;
  hooks.in_domain = [&](const Vec& st) { return M.in_domain(st.head(n)); };

  // (a) chart form: state [x, xdot, V, W, Pi].
  auto rhs_a = [&](double, const Vec& st, Vec& ds) {
    const Vec x = st.segment(0, n), xd = st.segment(n, n), V = st.segment(2 * n, n), W = st.segment(3 * n, n);
    const Mat Pi = unflatten(st.segment(4 * n, n * n), n);
    const Mat g = M.g(x);
    const Tensor3 gam = christoffel(M, x);
    const Riemann r = riemann(M, x);
    const Mat G = contract_christoffel(gam, xd);
    const Vec rvw = g * curvature_operator(r, V, W) * xd;
    Vec xi(n);
    for (int m = 0; m < n; ++m) {
      const Mat R = curvature_operator(r, xd, Vec::Unit(n, m));
      xi(m) = -0.5 * (Pi.transpose() * g * R).trace() - rvw(m);
    }
    ds.resize(st.size());
    ds.segment(0, n) = xd;
    ds.segment(n, n) = -G * xd + g.ldlt().solve(xi);
    ds.segment(2 * n, n) = -G * V;
    ds.segment(3 * n, n) = -G * W + xd;
    ds.segment(4 * n, n * n) = flatten(-(G * Pi + Pi * G.transpose()));
  };
  Vec ya(4 * n + n * n);
  ya << s0.cfg.x, f0 * s0.u, f0 * v0, Vec::Zero(n), flatten(f0 * Lambda0 * f0.transpose());

  // (b) frame form: state [y, ydot, x, f].
  auto rhs_b = [&](double, const Vec& st, Vec& ds) {
    const Vec y = st.segment(0, n), yd = st.segment(n, n), x = st.segment(2 * n, n);
    const Mat f = unflatten(st.segment(3 * n, n * n), n);
    const Mat g = M.g(x);
    const Riemann r = riemann(M, x);
    const Vec xd = f * yd;
    const Tensor4 K = frame_curvature(r, g, f);
    const Vec rterm = f.transpose() * g * curvature_operator(r, f * v0, f * y) * xd;
    ds.resize(st.size());
    ds.segment(0, n) = yd;
    ds.segment(n, n) = -pair_with_curvature(Lambda0, K, yd) - rterm;
    ds.segment(2 * n, n) = xd;
    ds.segment(3 * n, n * n) = flatten(-contract_christoffel(christoffel(M, x), xd) * f);
  };
  Vec yb(3 * n + n * n);
  yb << Vec::Zero(n), s0.u, s0.cfg.x, flatten(f0);
  StepHooks hooks_b;
  hooks_b.in_domain = [&](const Vec& st) { return M.in_domain(st.segment(2 * n, n)); };

  RnRolling out;
  out.M = s0.cfg.M;
  out.xhat0 = s0.cfg.xhat;
  out.fhat0 = s0.cfg.fhat;
  out.form_a = integrate(rhs_a, 0.0, ya, T, options, hooks);
  out.form_b = integrate(rhs_b, 0.0, yb, T, options, hooks_b);
  return out;
}

RnAgreement rn_agreement(const RnRolling& rn, const GeodesicRun& general) {
  const int n = rn.M->dim();
  std::vector<double> grid = general.traj.t;
  grid.insert(grid.end(), rn.form_a.t.begin(), rn.form_a.t.end());
  grid.insert(grid.end(), rn.form_b.t.begin(), rn.form_b.t.end());
  const double t_end = std::min({general.traj.t_end(), rn.form_a.t_end(), rn.form_b.t_end()});
  RnAgreement ag;
  for (double t : grid) {
    if (t > t_end) continue;
    const Vec st = general.traj.at(t);
    const Vec xg = st.segment(0, n), xhg = st.segment(n, n);
    const Vec xa = rn.x_a(t), xb = rn.x_b(t);
    ag.a_vs_b = std::max(ag.a_vs_b, (xa - xb).norm());
    ag.a_vs_general = std::max(ag.a_vs_general, (xa - xg).norm());
    ag.b_vs_general = std::max({ag.b_vs_general, (xb - xg).norm(), (rn.xhat_b(t) - xhg).norm()});
  }
  return ag;
}

// ---- charge ----

namespace {

double star_flat(const Mat& g, const Vec& V, const Vec& w) {
  return std::sqrt(g.determinant()) * (V(0) * w(1) - V(1) * w(0));
}

}  // namespace

ChargeReport charge_monitor(const GeodesicRun& run) {
  if (run.dim() != 2) throw InputError("charge monitor needs 2-dimensional charts");
  if (!is_flat_euclidean(*run.Mhat)) throw InputError("charge monitor needs a flat target");
  const int n = 2;
  const auto& M = *run.M;
  auto integrand = [&](double, const Vec& st) {
    const Vec x = st.segment(0, n);
    const Mat f = unflatten(st.segment(2 * n, n * n), n);
    return star_flat(M.g(x), f * st.segment(off_v(n), n), f * st.segment(off_u(n), n));
  };
  const auto integral = cumulative_quadrature(run.traj, integrand);
  ChargeReport rep;
  const double L0 = kChargeSign * run.traj.y.front()(off_l(n));
  for (std::size_t k = 0; k < run.traj.size(); ++k) {
    rep.L.push_back(kChargeSign * run.traj.y[k](off_l(n)));
    rep.reconstructed.push_back(L0 + integral[k]);
    rep.max_error = std::max(rep.max_error, std::abs(rep.L.back() - rep.reconstructed.back()));
  }
  return rep;
}

double charge_line_integral(const ChartMetric& chart, const BaseCurve& curve, const std::function<Vec(double)>& V,
                            int panels) {
  static constexpr std::array<double, 5> nodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                                  0.5384693101056831, 0.9061798459386640};
  static constexpr std::array<double, 5> weights = {0.2369268850561891, 0.4786286704993665,
                                                    0.5688888888888889, 0.4786286704993665,
                                                    0.2369268850561891};
  const double h = (curve.t1 - curve.t0) / panels;
  double acc = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double a = curve.t0 + p * h;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const double t = a + 0.5 * h * (1.0 + nodes[q]);
      acc += 0.5 * h * weights[q] * star_flat(chart.g(curve.position(t)), V(t), curve.velocity(t));
    }
  }
  return acc;
}

void write_geodesic_csv(std::ostream& os, const GeodesicRun& run, const ReducedRun* reduced,
                        const PendulumConstants* constants) {
  const int n = run.dim();
  const auto& tr = run.traj;
  os << "t";
  for (int i = 0; i < n; ++i) os << ",x" << i;
  for (int i = 0; i < n; ++i) os << ",xhat" << i;
  if (n == 2) os << ",theta";
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) os << ",L" << i << j;
  for (int i = 0; i < n; ++i) os << ",u" << i;
  for (int i = 0; i < n; ++i) os << ",v" << i;
  os << ",speed,covariant";
  const bool with_pendulum = reduced != nullptr && constants != nullptr && !reduced->rho_singular;
  if (with_pendulum) os << ",pendulum";
  os << ",slip,twist\n";
  os << std::setprecision(17);
  const auto& speed = tr.channels.at("speed");
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const auto s = run.state(k);
    os << tr.t[k];
    for (int i = 0; i < n; ++i) os << ',' << s.cfg.x(i);
    for (int i = 0; i < n; ++i) os << ',' << s.cfg.xhat(i);
    if (n == 2) os << ',' << tr.channels.at("theta")[k];
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < i; ++j) os << ',' << s.Lambda(i, j);
    for (int i = 0; i < n; ++i) os << ',' << s.u(i);
    for (int i = 0; i < n; ++i) os << ',' << s.v(i);
    const auto parts = covariant_parts_at(run, tr.t[k]);
    os << ',' << speed[k] << ',' << std::max(parts.acceleration, std::max(parts.v_transport, parts.lambda));
    if (with_pendulum) {
      const auto& rt = reduced->traj;
      const double t = tr.t[k];
      const Vec st = rt.at(t), ds = rt.derivative_at(t);
      const auto cv = curvatures_along(*run.M, *run.Mhat, st.segment(4, 2), st.segment(6, 2), ds.segment(4, 2),
                                       ds.segment(6, 2));
      const double gap = cv.k - cv.kh, rho = 1.0 / gap;
      const double rhodot = -rho * rho * (cv.kdot - cv.khdot);
      const double thddot = -(ds(1) * gap + st(1) * (cv.kdot - cv.khdot)) / kChargeSign;
      const double r = thddot + rhodot / rho * ds(0) - constants->A / rho * std::sin(st(0) - constants->phi0) +
                       reduced->a * reduced->a / rho * memory_F(st);
      os << ',' << std::abs(r);
    }
    const Vec ds = tr.derivative_at(tr.t[k]);
    const Vec xhdot = ds.segment(n, n);
    const Vec slip = s.cfg.q() * ds.segment(0, n) - xhdot;
    os << ',' << slip.norm() << ',' << parts.frames << '\n';
  }
}

}  // namespace upstairs
