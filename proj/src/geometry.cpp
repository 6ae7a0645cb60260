#include "upstairs/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace upstairs {

BaseCurve BaseCurve::line(const Vec& x0, const Vec& velocity, double t0, double t1) {
  BaseCurve c;
  c.t0 = t0;
  c.t1 = t1;
  c.position = [x0, velocity, t0](double t) { return Vec(x0 + (t - t0) * velocity); };
  c.velocity = [velocity](double) { return velocity; };
  return c;
}

BaseCurve BaseCurve::from_samples(const std::vector<double>& t, const std::vector<Vec>& x) {
  if (t.size() < 2 || t.size() != x.size()) throw InputError("curve needs at least two matching samples");
  for (std::size_t i = 1; i < t.size(); ++i)
    if (!(t[i] > t[i - 1])) throw InputError("curve sample times must increase");
  // Slopes: one-sided at the ends, three-point elsewhere.
  std::vector<Vec> m(t.size());
  const std::size_t last = t.size() - 1;
  m[0] = (x[1] - x[0]) / (t[1] - t[0]);
  m[last] = (x[last] - x[last - 1]) / (t[last] - t[last - 1]);
  for (std::size_t i = 1; i < last; ++i) {
    const double h0 = t[i] - t[i - 1], h1 = t[i + 1] - t[i];
    m[i] = (h1 * h1 * (x[i] - x[i - 1]) + h0 * h0 * (x[i + 1] - x[i])) / (h0 * h1 * (h0 + h1));
  }
  auto seg = [t](double s) {
    auto it = std::upper_bound(t.begin(), t.end(), s);
    auto k = static_cast<std::ptrdiff_t>(it - t.begin()) - 1;
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(t.size()) - 2));
  };
  BaseCurve c;
  c.t0 = t.front();
  c.t1 = t.back();
  c.position = [t, x, m, seg](double s) {
    const auto k = seg(s);
    const double h = t[k + 1] - t[k];
    const double u = (s - t[k]) / h;
    const double h00 = 2 * u * u * u - 3 * u * u + 1, h10 = u * u * u - 2 * u * u + u;
    const double h01 = -2 * u * u * u + 3 * u * u, h11 = u * u * u - u * u;
    return Vec(h00 * x[k] + h10 * h * m[k] + h01 * x[k + 1] + h11 * h * m[k + 1]);
  };
  c.velocity = [t, x, m, seg](double s) {
    const auto k = seg(s);
    const double h = t[k + 1] - t[k];
    const double u = (s - t[k]) / h;
    const double d00 = 6 * u * u - 6 * u, d10 = 3 * u * u - 4 * u + 1;
    const double d01 = -6 * u * u + 6 * u, d11 = 3 * u * u - 2 * u;
    return Vec((d00 * x[k] + d01 * x[k + 1]) / h + d10 * m[k] + d11 * m[k + 1]);
  };
  return c;
}

BaseCurve BaseCurve::from_trajectory(const Trajectory& traj, int offset, int count) {
  auto shared = std::make_shared<const Trajectory>(traj);
  BaseCurve c;
  c.t0 = traj.t_begin();
  c.t1 = traj.t_end();
  c.position = [shared, offset, count](double t) { return Vec(shared->at(t).segment(offset, count)); };
  c.velocity = [shared, offset, count](double t) {
    return Vec(shared->derivative_at(t).segment(offset, count));
  };
  return c;
}

BaseCurve BaseCurve::reparametrized(std::function<double(double)> phi, std::function<double(double)> dphi,
                                    double s0, double s1) const {
  BaseCurve c;
  c.t0 = s0;
  c.t1 = s1;
  auto pos = position;
  auto vel = velocity;
  c.position = [pos, phi](double s) { return pos(phi(s)); };
  c.velocity = [vel, phi, dphi](double s) { return Vec(vel(phi(s)) * dphi(s)); };
  return c;
}

Tensor3 christoffel(const ChartMetric& chart, const Vec& x) {
  const int n = chart.dim();
  const Mat g = chart.g(x);
  const Eigen::LDLT<Mat> ldlt(g);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.vectorD().minCoeff() <= 0.0)
    throw GeometryError(chart.label() + ": metric is not positive definite");
  const Mat ginv = ldlt.solve(Mat::Identity(n, n));
  const auto dg = chart.dg(x);
  Tensor3 gamma(n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      Vec s(n);
      for (int l = 0; l < n; ++l) s(l) = dg[i](l, j) + dg[j](l, i) - dg[l](i, j);
      const Vec c = 0.5 * ginv * s;
      for (int k = 0; k < n; ++k) {
        gamma(k, i, j) = c(k);
        gamma(k, j, i) = c(k);
      }
    }
  }
  return gamma;
}

std::vector<Tensor3> christoffel_derivative(const ChartMetric& chart, const Vec& x) {
  const int n = chart.dim();
  const Mat g = chart.g(x);
  const Mat ginv = g.inverse();
  const auto dg = chart.dg(x);
  const auto d2g = chart.d2g(x);
  std::vector<Tensor3> out(static_cast<std::size_t>(n), Tensor3(n));
  for (int m = 0; m < n; ++m) {
    const Mat dginv = -ginv * dg[m] * ginv;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        Vec s(n), ds(n);
        for (int l = 0; l < n; ++l) {
          s(l) = dg[i](l, j) + dg[j](l, i) - dg[l](i, j);
          ds(l) = d2g[m][i](l, j) + d2g[m][j](l, i) - d2g[m][l](i, j);
        }
        const Vec c = 0.5 * (dginv * s + ginv * ds);
        for (int k = 0; k < n; ++k) out[m](k, i, j) = c(k);
      }
    }
  }
  return out;
}

Mat contract_christoffel(const Tensor3& gamma, const Vec& v) {
  const int n = gamma.dim();
  Mat out = Mat::Zero(n, n);
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out(k, j) += gamma(k, i, j) * v(i);
  return out;
}

Vec christoffel_quadratic(const Tensor3& gamma, const Vec& v, const Vec& w) {
  return contract_christoffel(gamma, v) * w;
}

Riemann riemann(const ChartMetric& chart, const Vec& x) {
  const int n = chart.dim();
  const Tensor3 gm = christoffel(chart, x);
  const auto dgm = christoffel_derivative(chart, x);
  const Mat g = chart.g(x);
  Riemann r{Tensor4(n), Tensor4(n)};
  for (int l = 0; l < n; ++l) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
          double v = dgm[i](l, j, k) - dgm[j](l, i, k);
          for (int m = 0; m < n; ++m) v += gm(l, i, m) * gm(m, j, k) - gm(l, j, m) * gm(m, i, k);
          r.mixed(l, i, j, k) = v;
        }
      }
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (int l = 0; l < n; ++l) {
          double v = 0.0;
          for (int m = 0; m < n; ++m) v += g(k, m) * r.mixed(m, i, j, l);
          r.lowered(i, j, k, l) = v;
        }
  return r;
}

Mat curvature_operator(const Riemann& r, const Vec& X, const Vec& Y) {
  const int n = r.mixed.dim();
  Mat out = Mat::Zero(n, n);
  for (int l = 0; l < n; ++l)
    for (int k = 0; k < n; ++k) {
      double v = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) v += r.mixed(l, i, j, k) * X(i) * Y(j);
      out(l, k) = v;
    }
  return out;
}

Mat curvature_operator(const ChartMetric& chart, const Vec& x, const Vec& X, const Vec& Y) {
  return curvature_operator(riemann(chart, x), X, Y);
}

Mat curvature_form_in_frame(const ChartMetric& chart, const FramePoint& fp, const Vec& X, const Vec& Y) {
  const Mat rxy = curvature_operator(chart, fp.x, X, Y);
  return fp.f.transpose() * chart.g(fp.x) * rxy * fp.f;
}

Mat curvature_form_in_frame(const ChartMetric& chart, const FramePoint& fp, const TangentAtPoint& X,
                            const TangentAtPoint& Y) {
  const double scale = 1e-12 * (1.0 + fp.x.norm());
  if ((X.x - fp.x).norm() > scale || (Y.x - fp.x).norm() > scale)
    throw GeometryError("tangent vectors are not based at the frame's point");
  return curvature_form_in_frame(chart, fp, X.v, Y.v);
}

Tensor4 frame_curvature(const Riemann& r, const Mat& g, const Mat& f) {
  const int n = r.mixed.dim();
  Tensor4 k(n);
  const Mat fg = f.transpose() * g;
  for (int c = 0; c < n; ++c) {
    for (int d = c + 1; d < n; ++d) {
      const Mat om = fg * curvature_operator(r, f.col(c), f.col(d)) * f;
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          k(a, b, c, d) = om(a, b);
          k(a, b, d, c) = -om(a, b);
        }
    }
  }
  return k;
}

Tensor4 frame_curvature(const ChartMetric& chart, const Vec& x, const Mat& f) {
  return frame_curvature(riemann(chart, x), chart.g(x), f);
}

double gauss_curvature(const ChartMetric& chart, const Vec& x) {
  if (chart.dim() != 2) throw InputError("gauss_curvature needs a 2-dimensional chart");
  const auto r = riemann(chart, x);
  return r.lowered(0, 1, 0, 1) / chart.g(x).determinant();
}

Vec flat(const ChartMetric& chart, const Vec& x, const Vec& v) { return chart.g(x) * v; }

Vec sharp(const ChartMetric& chart, const Vec& x, const Vec& covector) {
  const Eigen::LDLT<Mat> ldlt(chart.g(x));
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw GeometryError("singular metric");
  return ldlt.solve(covector);
}

FramePoint orthonormal_frame_at(const ChartMetric& chart, const Vec& x, const Mat& seed) {
  const int n = chart.dim();
  if (seed.rows() != n || seed.cols() != n) throw InputError("seed basis has wrong shape");
  const Mat g = chart.g(x);
  Mat f(n, n);
  for (int j = 0; j < n; ++j) {
    Vec v = seed.col(j);
    const double scale = std::sqrt(std::abs(v.dot(g * v)));
    // Two passes of modified Gram-Schmidt.
    for (int pass = 0; pass < 2; ++pass)
      for (int i = 0; i < j; ++i) v -= f.col(i).dot(g * v) * f.col(i);
    const double norm = std::sqrt(std::max(0.0, v.dot(g * v)));
    if (!(norm > 1e-10 * std::max(scale, 1e-300))) throw GeometryError("degenerate seed basis");
    f.col(j) = v / norm;
  }
  if (f.determinant() < 0.0) f.col(n - 1) *= -1.0;
  return {x, f};
}

FramePoint orthonormal_frame_at(const ChartMetric& chart, const Vec& x) {
  return orthonormal_frame_at(chart, x, Mat::Identity(chart.dim(), chart.dim()));
}

double frame_defect(const ChartMetric& chart, const Vec& x, const Mat& f) {
  const int n = chart.dim();
  return (f.transpose() * chart.g(x) * f - Mat::Identity(n, n)).cwiseAbs().maxCoeff();
}

Trajectory parallel_transport(const ChartMetric& chart, const BaseCurve& curve, const Mat& v0,
                              const OdeOptions& options) {
  const int n = chart.dim();
  const auto cols = v0.cols();
  if (v0.rows() != n) throw InputError("transported vectors have wrong dimension");
  chart.require(curve.position(curve.t0));
  auto rhs = [&](double t, const Vec& y, Vec& dy) {
    const Vec x = curve.position(t);
    const Mat gam = contract_christoffel(christoffel(chart, x), curve.velocity(t));
    const Eigen::Map<const Mat> v(y.data(), n, cols);
    dy.resize(y.size());
    Eigen::Map<Mat>(dy.data(), n, cols) = -gam * v;
  };
  const Vec y0 = Eigen::Map<const Vec>(v0.data(), v0.size());
  return integrate(rhs, curve.t0, y0, curve.t1, options);
}

Trajectory geodesic_flow(const ChartMetric& chart, const Vec& x0, const Vec& v0, double T,
                         const OdeOptions& options) {
  const int n = chart.dim();
  chart.require(x0);
  auto rhs = [&](double, const Vec& y, Vec& dy) {
    const Vec x = y.head(n), v = y.tail(n);
    dy.resize(2 * n);
    dy.head(n) = v;
    dy.tail(n) = -christoffel_quadratic(christoffel(chart, x), v, v);
  };
  Vec y0(2 * n);
  y0 << x0, v0;
  StepHooks hooks;
  hooks.in_domain = [&](const Vec& y) { return chart.in_domain(y.head(n)); };
  return integrate(rhs, 0.0, y0, T, options, hooks);
}

double geodesic_residual(const ChartMetric& chart, const Trajectory& traj) {
  const int n = chart.dim();
  double worst = 0.0;
  for (double s : traj.step_midpoints()) {
    const Vec y = traj.at(s), dy = traj.derivative_at(s);
    const Vec v = y.tail(n);
    const Vec acc = dy.tail(n) + christoffel_quadratic(christoffel(chart, y.head(n)), v, v);
    worst = std::max({worst, acc.norm(), (dy.head(n) - v).norm()});
  }
  return worst;
}

double path_length(const ChartMetric& chart, const std::function<Vec(double)>& path, double t0, double t1,
                   int samples) {
  double len = 0.0;
  Vec prev = path(t0);
  for (int i = 1; i <= samples; ++i) {
    const double t = t0 + (t1 - t0) * i / samples;
    const Vec cur = path(t);
    const Vec dx = cur - prev;
    len += std::sqrt(dx.dot(chart.g(0.5 * (cur + prev)) * dx));
    prev = cur;
  }
  return len;
}

}  // namespace upstairs
