#include "upstairs/rolling.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

namespace upstairs {

namespace {

Vec flatten(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

Mat unflatten(const Vec& v, int rows, int cols) { return Eigen::Map<const Mat>(v.data(), rows, cols); }

std::vector<double> to_vector(const Vec& v) { return {v.data(), v.data() + v.size()}; }

Vec from_json_vec(const nlohmann::json& j, int n, const char* field) {
  if (!j.is_array() || static_cast<int>(j.size()) != n)
    throw InputError(std::string("field '") + field + "' must be an array of " + std::to_string(n) + " numbers");
  Vec v(n);
  for (int i = 0; i < n; ++i) {
    if (!j[i].is_number()) throw InputError(std::string("field '") + field + "' must contain numbers");
    v(i) = j[i].get<double>();
  }
  return v;
}

}  // namespace

void RollingConfiguration::validate(double tol) const {
  if (!M || !Mhat) throw GeometryError("configuration without charts");
  if (M->dim() != Mhat->dim()) throw GeometryError("charts have different dimensions");
  M->require(x);
  Mhat->require(xhat);
  const int n = dim();
  if (f.rows() != n || f.cols() != n || fhat.rows() != n || fhat.cols() != n)
    throw GeometryError("frame has wrong shape");
  if (frame_defect(*M, x, f) > tol || frame_defect(*Mhat, xhat, fhat) > tol)
    throw GeometryError("frame is not orthonormal");
  if (f.determinant() <= 0.0 || fhat.determinant() <= 0.0) throw GeometryError("frame is not positively oriented");
  const Mat qm = q();
  const Mat defect = qm.transpose() * Mhat->g(xhat) * qm - M->g(x);
  if (defect.cwiseAbs().maxCoeff() > tol * (1.0 + M->g(x).cwiseAbs().maxCoeff()))
    throw GeometryError("q is not an isometry");
}

RollingConfiguration make_configuration(ChartPtr M, ChartPtr Mhat, const Vec& x, const Vec& xhat,
                                        const Mat& rotation) {
  RollingConfiguration cfg;
  cfg.f = orthonormal_frame_at(*M, x).f;
  cfg.fhat = orthonormal_frame_at(*Mhat, xhat).f;
  if (rotation.size() > 0) {
    const int n = M->dim();
    if (rotation.rows() != n || rotation.cols() != n) throw InputError("rotation has wrong shape");
    if ((rotation.transpose() * rotation - Mat::Identity(n, n)).cwiseAbs().maxCoeff() > 1e-10 ||
        rotation.determinant() <= 0.0)
      throw InputError("rotation must be special orthogonal");
    cfg.fhat = cfg.fhat * rotation;
  }
  cfg.M = std::move(M);
  cfg.Mhat = std::move(Mhat);
  cfg.x = x;
  cfg.xhat = xhat;
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const RollingConfiguration& cfg) {
  auto row_major = [](const Mat& m) {
    std::vector<double> out;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    return out;
  };
  return {{"chartM", cfg.M->label()},
          {"chartMhat", cfg.Mhat->label()},
          {"x", to_vector(cfg.x)},
          {"xhat", to_vector(cfg.xhat)},
          {"f", row_major(cfg.f)},
          {"fhat", row_major(cfg.fhat)}};
}

RollingConfiguration configuration_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("configuration must be an object");
  for (const char* k : {"chartM", "chartMhat", "x", "xhat"})
    if (!j.contains(k)) throw InputError(std::string("configuration is missing '") + k + "'");
  RollingConfiguration cfg;
  cfg.M = make_chart(j.at("chartM").get<std::string>());
  cfg.Mhat = make_chart(j.at("chartMhat").get<std::string>());
  const int n = cfg.M->dim();
  if (cfg.Mhat->dim() != n) throw InputError("charts have different dimensions");
  cfg.x = from_json_vec(j.at("x"), n, "x");
  cfg.xhat = from_json_vec(j.at("xhat"), n, "xhat");
  auto frame = [&](const char* key, const ChartMetric& chart, const Vec& at) {
    if (!j.contains(key)) return orthonormal_frame_at(chart, at).f;
    const Vec flat_rows = from_json_vec(j.at(key), n * n, key);
    Mat m(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) m(r, c) = flat_rows(r * n + c);
    return m;
  };
  cfg.f = frame("f", *cfg.M, cfg.x);
  cfg.fhat = frame("fhat", *cfg.Mhat, cfg.xhat);
  cfg.validate(1e-8);
  return cfg;
}

FrameField gram_schmidt_field(ChartPtr chart) {
  return [chart](const Vec& x) { return orthonormal_frame_at(*chart, x).f; };
}

Mat connection_matrix(const ChartMetric& chart, const FrameField& e, const Vec& x, const Vec& v) {
  const int n = chart.dim();
  const double h = 1e-3 * (1.0 + x.norm());
  auto central = [&](int k, double step) {
    Vec xp = x, xm = x;
    xp(k) += step;
    xm(k) -= step;
    return Mat((e(xp) - e(xm)) / (2.0 * step));
  };
  Mat de = Mat::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    if (v(k) == 0.0) continue;
    de += v(k) * (4.0 * central(k, 0.5 * h) - central(k, h)) / 3.0;
  }
  const Mat ex = e(x);
  const Mat nabla = de + contract_christoffel(christoffel(chart, x), v) * ex;
  return ex.transpose() * chart.g(x) * nabla;
}

Mat reference_frame_matrix(const RollingConfiguration& cfg, const FrameField& e, const FrameField& ehat) {
  const Mat ex = e(cfg.x), ehx = ehat(cfg.xhat);
  return ehx.inverse() * cfg.q() * ex;
}

std::vector<DistributionDirection> distribution_basis(const RollingConfiguration& cfg, const FrameField& e,
                                                      const FrameField& ehat) {
  const int n = cfg.dim();
  const Mat ex = e(cfg.x), ehx = ehat(cfg.xhat);
  if (frame_defect(*cfg.M, cfg.x, ex) > 1e-8 || frame_defect(*cfg.Mhat, cfg.xhat, ehx) > 1e-8)
    throw GeometryError("local frames are not orthonormal");
  const Mat Q = ehx.inverse() * cfg.q() * ex;
  std::vector<DistributionDirection> out;
  for (int j = 0; j < n; ++j) {
    DistributionDirection d;
    d.dx = ex.col(j);
    d.dxhat = cfg.q() * d.dx;
    d.fiber = connection_matrix(*cfg.M, e, cfg.x, d.dx) -
              Q.transpose() * connection_matrix(*cfg.Mhat, ehat, cfg.xhat, d.dxhat) * Q;
    out.push_back(std::move(d));
  }
  return out;
}

Mat lifted_metric_gram(const RollingConfiguration& cfg, const std::vector<DistributionDirection>& dirs) {
  const auto k = static_cast<int>(dirs.size());
  const Mat g = cfg.M->g(cfg.x);
  Mat gram(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) gram(i, j) = dirs[i].dx.dot(g * dirs[j].dx);
  return gram;
}

Trajectory basis_development(const RollingConfiguration& cfg0, const BaseCurve& curve, const FrameField& e,
                             const FrameField& ehat, const OdeOptions& options) {
  const int n = cfg0.dim();
  const auto& M = *cfg0.M;
  const auto& Mh = *cfg0.Mhat;
  auto rhs = [&](double t, const Vec& s, Vec& ds) {
    const Vec x = s.segment(0, n), xh = s.segment(n, n);
    const Mat Q = unflatten(s.segment(2 * n, n * n), n, n);
    const Mat ex = e(x), ehx = ehat(xh);
    const Vec c = ex.inverse() * curve.velocity(t);
    ds.resize(s.size());
    ds.segment(0, n) = ex * c;
    ds.segment(n, n) = ehx * Q * c;
    // Combination of the basis directions; the fiber part is linear in the coefficients.
    const Mat E = connection_matrix(M, e, x, ex * c) - Q.transpose() * connection_matrix(Mh, ehat, xh, ehx * Q * c) * Q;
    ds.segment(2 * n, n * n) = flatten(Q * E);
  };
  Vec s0(2 * n + n * n);
  s0 << cfg0.x, cfg0.xhat, flatten(reference_frame_matrix(cfg0, e, ehat));
  return integrate(rhs, curve.t0, s0, curve.t1, options);
}

Vec pack_configuration(const RollingConfiguration& cfg) {
  const int n = cfg.dim();
  Vec s(2 * n + 2 * n * n);
  s << cfg.x, cfg.xhat, flatten(cfg.f), flatten(cfg.fhat);
  return s;
}

RollingConfiguration unpack_configuration(ChartPtr M, ChartPtr Mhat, const Vec& s) {
  const int n = M->dim();
  RollingConfiguration cfg;
  cfg.M = std::move(M);
  cfg.Mhat = std::move(Mhat);
  cfg.x = s.segment(0, n);
  cfg.xhat = s.segment(n, n);
  cfg.f = unflatten(s.segment(2 * n, n * n), n, n);
  cfg.fhat = unflatten(s.segment(2 * n + n * n, n * n), n, n);
  return cfg;
}

RollingConfiguration RollingPath::config(std::size_t node) const {
  return unpack_configuration(M, Mhat, traj.y.at(node));
}

RollingConfiguration RollingPath::config_at(double t) const { return unpack_configuration(M, Mhat, traj.at(t)); }

namespace {

void develop_rhs(const ChartMetric& M, const ChartMetric& Mh, const BaseCurve& curve, int n, double t, const Vec& s,
                 Vec& ds) {
  const int off_f = 2 * n, off_fh = 2 * n + n * n;
  const Vec xdot = curve.velocity(t);
  const Vec x = curve.position(t);
  const Vec xh = s.segment(n, n);
  const Mat f = unflatten(s.segment(off_f, n * n), n, n);
  const Mat fh = unflatten(s.segment(off_fh, n * n), n, n);
  const Vec xhdot = fh * f.lu().solve(xdot);
  ds.resize(s.size());
  ds.segment(0, n) = xdot;
  ds.segment(n, n) = xhdot;
  ds.segment(off_f, n * n) = flatten(-contract_christoffel(christoffel(M, x), xdot) * f);
  ds.segment(off_fh, n * n) = flatten(-contract_christoffel(christoffel(Mh, xh), xhdot) * fh);
}

}  // namespace

RollingPath develop(const RollingConfiguration& cfg0, const BaseCurve& curve, const OdeOptions& options,
                    double reproject_threshold) {
  cfg0.validate();
  const int n = cfg0.dim();
  if ((curve.position(curve.t0) - cfg0.x).norm() > 1e-10 * (1.0 + cfg0.x.norm()))
    throw InputError("curve does not start at the configuration's point");
  const auto& M = *cfg0.M;
  const auto& Mh = *cfg0.Mhat;
  const int off_f = 2 * n, off_fh = 2 * n + n * n;
  auto field = [Mp = cfg0.M, Mhp = cfg0.Mhat, curve, n](double t, const Vec& s, Vec& ds) {
    develop_rhs(*Mp, *Mhp, curve, n, t, s, ds);
  };
  auto rhs = [&](double t, const Vec& s, Vec& ds) { develop_rhs(M, Mh, curve, n, t, s, ds); };
  StepHooks hooks;
  hooks.in_domain = [&](const Vec& s) { return M.in_domain(s.segment(0, n)) && Mh.in_domain(s.segment(n, n)); };
  hooks.post_step = [&](double, Vec& s) {
    const Vec x = s.segment(0, n), xh = s.segment(n, n);
    const Mat f = unflatten(s.segment(off_f, n * n), n, n);
    const Mat fh = unflatten(s.segment(off_fh, n * n), n, n);
    if (frame_defect(M, x, f) <= reproject_threshold && frame_defect(Mh, xh, fh) <= reproject_threshold) return false;
    s.segment(off_f, n * n) = flatten(so_projection(f, M.g(x)));
    s.segment(off_fh, n * n) = flatten(so_projection(fh, Mh.g(xh)));
    return true;
  };
  RollingPath path{cfg0.M, cfg0.Mhat, {}};
  path.traj = integrate(rhs, curve.t0, pack_configuration(cfg0), curve.t1, options, hooks);
  path.traj.field = field;
  return path;
}

SlipTwist noslip_notwist_residual(const RollingPath& path) {
  const int n = path.dim();
  const auto& M = *path.M;
  const auto& Mh = *path.Mhat;
  const auto& tr = path.traj;
  SlipTwist out;
  out.slip_at_nodes.assign(tr.size(), 0.0);
  out.twist_at_nodes.assign(tr.size(), 0.0);
  if (tr.segments.empty()) return out;

  // Independent parallel test frame along the path's M-curve.
  OdeOptions tight;
  tight.atol = tight.rtol = 1e-12;
  const BaseCurve xcurve = BaseCurve::from_trajectory(tr, 0, n);
  const Mat f0 = unflatten(tr.y.front().segment(2 * n, n * n), n, n);
  const Trajectory X = parallel_transport(M, xcurve, f0, tight);

  auto measure = [&](double s, double& slip, double& twist) {
    const Vec st = tr.at(s), ds = tr.derivative_at(s);
    const Vec x = st.segment(0, n), xh = st.segment(n, n);
    const Vec xdot = ds.segment(0, n), xhdot = ds.segment(n, n);
    const Mat f = unflatten(st.segment(2 * n, n * n), n, n);
    const Mat fh = unflatten(st.segment(2 * n + n * n, n * n), n, n);
    const Mat fdot = unflatten(ds.segment(2 * n, n * n), n, n);
    const Mat fhdot = unflatten(ds.segment(2 * n + n * n, n * n), n, n);
    const Mat finv = f.inverse();
    const Mat q = fh * finv;
    const Mat gh = Mh.g(xh);
    const Vec sv = q * xdot - xhdot;
    slip = std::sqrt(sv.dot(gh * sv));

    const Mat Xs = unflatten(X.at(s), n, n);
    const Mat Xdot = -contract_christoffel(christoffel(M, x), xdot) * Xs;
    const Mat qdot = fhdot * finv - fh * finv * fdot * finv;
    const Mat Y = q * Xs;
    const Mat nablaY = qdot * Xs + q * Xdot + contract_christoffel(christoffel(Mh, xh), xhdot) * Y;
    twist = 0.0;
    for (int j = 0; j < n; ++j) twist = std::max(twist, std::sqrt(nablaY.col(j).dot(gh * nablaY.col(j))));
  };

  for (std::size_t k = 0; k < tr.segments.size(); ++k) {
    const auto& seg = tr.segments[k];
    double sl = 0.0, tw = 0.0;
    measure(seg.t0 + 0.5 * seg.h, sl, tw);
    out.slip = std::max(out.slip, sl);
    out.twist = std::max(out.twist, tw);
  }
  for (std::size_t k = 0; k < tr.size(); ++k) measure(tr.t[k], out.slip_at_nodes[k], out.twist_at_nodes[k]);
  return out;
}

Mat so_projection(const Mat& f, const Mat& g) {
  const int n = static_cast<int>(f.rows());
  const Mat S = f.transpose() * g * f;
  if ((S - Mat::Identity(n, n)).norm() > 0.5 || f.determinant() <= 0.0)
    throw GeometryError("frame too far from the orthonormal set to project");
  const Eigen::SelfAdjointEigenSolver<Mat> es(S);
  const Mat inv_sqrt = es.eigenvectors() * es.eigenvalues().cwiseInverse().cwiseSqrt().asDiagonal() *
                       es.eigenvectors().transpose();
  return f * inv_sqrt;
}

FramePoint so_projection(const ChartMetric& chart, const FramePoint& fp) {
  return {fp.x, so_projection(fp.f, chart.g(fp.x))};
}

CurvatureGap curvature_gap(const RollingConfiguration& cfg) {
  const int n = cfg.dim();
  const int m = skew_dim(n);
  const Tensor4 K = frame_curvature(*cfg.M, cfg.x, cfg.f);
  const Tensor4 Kh = frame_curvature(*cfg.Mhat, cfg.xhat, cfg.fhat);
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) pairs.emplace_back(a, b);
  CurvatureGap gap;
  gap.map = Mat::Zero(m, m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) {
      const auto [a, b] = pairs[static_cast<std::size_t>(r)];
      const auto [cc, d] = pairs[static_cast<std::size_t>(c)];
      gap.map(r, c) = K(cc, d, a, b) - Kh(cc, d, a, b);
    }
  if (m > 0) {
    const Eigen::JacobiSVD<Mat> svd(gap.map);
    gap.min_singular_value = svd.singularValues().minCoeff();
  }
  return gap;
}

void write_path_csv(std::ostream& os, const RollingPath& path, const SlipTwist& res) {
  const int n = path.dim();
  os << "t";
  for (int i = 0; i < n; ++i) os << ",x" << i;
  for (int i = 0; i < n; ++i) os << ",xhat" << i;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) os << ",f" << i << j;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) os << ",fhat" << i << j;
  os << ",slip_residual,twist_residual\n";
  os << std::setprecision(17);
  for (std::size_t k = 0; k < path.traj.size(); ++k) {
    const auto cfg = path.config(k);
    os << path.traj.t[k];
    for (int i = 0; i < n; ++i) os << ',' << cfg.x(i);
    for (int i = 0; i < n; ++i) os << ',' << cfg.xhat(i);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) os << ',' << cfg.f(i, j);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) os << ',' << cfg.fhat(i, j);
    os << ',' << (k < res.slip_at_nodes.size() ? res.slip_at_nodes[k] : 0.0) << ','
       << (k < res.twist_at_nodes.size() ? res.twist_at_nodes[k] : 0.0) << '\n';
  }
}

double rotation_connection(const ChartMetric& chart, const Vec& x, const Vec& v) {
  if (chart.dim() != 2) throw InputError("rotation_connection needs a 2-dimensional chart");
  // e_1 = d_1 / |d_1|; the derivative of the normalization is along e_1 and drops out.
  const Mat g = chart.g(x);
  const Mat e = orthonormal_frame_at(chart, x).f;
  const Vec w = contract_christoffel(christoffel(chart, x), v).col(0);
  return w.dot(g * e.col(1)) / std::sqrt(g(0, 0));
}

SubmersionTestbed frame_bundle_testbed(ChartPtr M, ChartPtr Mhat) {
  if (M->dim() != 2 || Mhat->dim() != 2) throw InputError("frame-bundle testbed needs two 2-dimensional charts");
  SubmersionTestbed tb;
  tb.n = 2;
  tb.nu = 4;
  tb.label = "frame-bundle(" + M->label() + "," + Mhat->label() + ")";
  tb.domain = [M, Mhat](const Vec& x, const Vec& y) { return M->in_domain(x) && Mhat->in_domain(y.segment(1, 2)); };
  tb.A = [M, Mhat](const Vec& x, const Vec& y) {
    const Vec xh = y.segment(1, 2);
    const Mat f = orthonormal_frame_at(*M, x).f * rotation2(y(0));
    const Mat fh = orthonormal_frame_at(*Mhat, xh).f * rotation2(y(3));
    const Mat q = fh * f.inverse();
    Mat A(4, 2);
    for (int i = 0; i < 2; ++i) {
      const Vec di = Vec::Unit(2, i);
      const Vec xhdot = q * di;
      A(0, i) = -rotation_connection(*M, x, di);
      A.block(1, i, 2, 1) = xhdot;
      A(3, i) = -rotation_connection(*Mhat, xh, xhdot);
    }
    return A;
  };
  return tb;
}

Vec frame_bundle_fiber(const RollingConfiguration& cfg) {
  if (cfg.dim() != 2) throw InputError("frame-bundle coordinates need 2-dimensional charts");
  const Mat F = orthonormal_frame_at(*cfg.M, cfg.x).f.inverse() * cfg.f;
  const Mat Fh = orthonormal_frame_at(*cfg.Mhat, cfg.xhat).f.inverse() * cfg.fhat;
  Vec y(4);
  y << std::atan2(F(1, 0), F(0, 0)), cfg.xhat, std::atan2(Fh(1, 0), Fh(0, 0));
  return y;
}

CotangentState frame_bundle_covector(const RollingConfiguration& cfg, const Vec& u, const Vec& v,
                                     const Mat& Lambda) {
  const double p_phi = -Lambda(0, 1);
  const double p_phihat = Lambda(0, 1);
  Vec c(2), ch(2);
  for (int j = 0; j < 2; ++j) {
    c(j) = rotation_connection(*cfg.M, cfg.x, cfg.f.col(j));
    ch(j) = rotation_connection(*cfg.Mhat, cfg.xhat, cfg.fhat.col(j));
  }
  const Vec Px = cfg.f.transpose().inverse() * (u + v + p_phi * c);
  const Vec Pxh = cfg.fhat.transpose().inverse() * (-v + p_phihat * ch);
  CotangentState s;
  s.x = cfg.x;
  s.y = frame_bundle_fiber(cfg);
  s.b = Vec(4);
  s.b << p_phi, Pxh, p_phihat;
  const auto tb = frame_bundle_testbed(cfg.M, cfg.Mhat);
  s.a = Px + tb.lift(s.x, s.y).transpose() * s.b;
  return s;
}

}  // namespace upstairs
