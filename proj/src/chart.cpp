#include "upstairs/chart.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

namespace upstairs {

ChartMetric::ChartMetric(int dim, std::string label, DomainFn domain, MetricFn g, GradientFn dg,
                         HessianFn d2g)
    : dim_(dim),
      label_(std::move(label)),
      domain_(std::move(domain)),
      g_(std::move(g)),
      dg_(std::move(dg)),
      d2g_(std::move(d2g)) {
  if (dim_ <= 0) throw InputError("chart dimension must be positive");
}

bool ChartMetric::in_domain(const Vec& x) const {
  if (x.size() != dim_ || !x.allFinite()) return false;
  return !domain_ || domain_(x);
}

void ChartMetric::require(const Vec& x) const {
  if (x.size() != dim_) throw InputError(label_ + ": point has wrong dimension");
  if (!in_domain(x)) throw DomainError(label_ + ": point outside chart domain");
}

Mat ChartMetric::g(const Vec& x) const {
  require(x);
  return g_(x);
}

MetricGradient ChartMetric::dg(const Vec& x) const {
  require(x);
  if (dg_) return dg_(x);
  return dg_fd(x, fd_);
}

MetricHessian ChartMetric::d2g(const Vec& x) const {
  require(x);
  if (d2g_) return d2g_(x);
  return d2g_fd(x, fd_);
}

MetricGradient ChartMetric::dg_fd(const Vec& x, const FiniteDifference& fd) const {
  const double h = fd.rel_step * (1.0 + x.norm());
  auto central = [&](int k, double step) {
    Vec xp = x, xm = x;
    xp(k) += step;
    xm(k) -= step;
    return Mat((g(xp) - g(xm)) / (2.0 * step));
  };
  MetricGradient out(static_cast<std::size_t>(dim_));
  for (int k = 0; k < dim_; ++k) {
    if (fd.richardson) {
      out[k] = (4.0 * central(k, 0.5 * h) - central(k, h)) / 3.0;
    } else {
      out[k] = central(k, h);
    }
  }
  return out;
}

MetricHessian ChartMetric::d2g_fd(const Vec& x, const FiniteDifference& fd) const {
  MetricHessian out(static_cast<std::size_t>(dim_), std::vector<Mat>(static_cast<std::size_t>(dim_)));
  if (dg_) {
    const double h = fd.rel_step * (1.0 + x.norm());
    auto central = [&](int l, double step) {
      Vec xp = x, xm = x;
      xp(l) += step;
      xm(l) -= step;
      const auto gp = dg(xp);
      const auto gm = dg(xm);
      MetricGradient d(static_cast<std::size_t>(dim_));
      for (int k = 0; k < dim_; ++k) d[k] = (gp[k] - gm[k]) / (2.0 * step);
      return d;
    };
    for (int l = 0; l < dim_; ++l) {
      const auto d1 = central(l, h);
      if (fd.richardson) {
        const auto d2 = central(l, 0.5 * h);
        for (int k = 0; k < dim_; ++k) out[k][l] = (4.0 * d2[k] - d1[k]) / 3.0;
      } else {
        for (int k = 0; k < dim_; ++k) out[k][l] = d1[k];
      }
    }
    return out;
  }
  // Nested differences need a larger step to keep roundoff in check.
  const double h = std::sqrt(fd.rel_step) * 0.3 * (1.0 + x.norm());
  for (int k = 0; k < dim_; ++k) {
    for (int l = k; l < dim_; ++l) {
      Mat v;
      if (k == l) {
        Vec xp = x, xm = x;
        xp(k) += h;
        xm(k) -= h;
        v = (g(xp) - 2.0 * g(x) + g(xm)) / (h * h);
      } else {
        Vec xpp = x, xpm = x, xmp = x, xmm = x;
        xpp(k) += h, xpp(l) += h;
        xpm(k) += h, xpm(l) -= h;
        xmp(k) -= h, xmp(l) += h;
        xmm(k) -= h, xmm(l) -= h;
        v = (g(xpp) - g(xpm) - g(xmp) + g(xmm)) / (4.0 * h * h);
      }
      out[k][l] = v;
      out[l][k] = v;
    }
  }
  return out;
}

std::pair<std::string, std::vector<std::string>> parse_call(const std::string& text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(c);
  const auto open = s.find('(');
  if (open == std::string::npos) return {s, {}};
  if (s.back() != ')' || open == 0) throw InputError("malformed catalog name: " + text);
  std::vector<std::string> args;
  const std::string inner = s.substr(open + 1, s.size() - open - 2);
  if (inner.empty()) return {s.substr(0, open), args};
  std::string item;
  int depth = 0;
  for (char c : inner) {
    if (c == '(') ++depth;
    if (c == ')' && --depth < 0) throw InputError("unbalanced parentheses in: " + text);
    if (c == ',' && depth == 0) {
      if (item.empty()) throw InputError("empty argument in: " + text);
      args.push_back(item);
      item.clear();
    } else {
      item.push_back(c);
    }
  }
  if (depth != 0 || item.empty()) throw InputError("malformed argument list in: " + text);
  args.push_back(item);
  return {s.substr(0, open), args};
}

namespace {

double parse_number(const std::string& s, const std::string& context) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw InputError("expected a number in " + context + ", got '" + s + "'");
  }
  if (used != s.size() || !std::isfinite(v)) {
    throw InputError("expected a number in " + context + ", got '" + s + "'");
  }
  return v;
}

int parse_dim(const std::string& s, const std::string& context) {
  const double v = parse_number(s, context);
  if (v < 1 || v > 16 || v != std::floor(v)) throw InputError("bad dimension in " + context);
  return static_cast<int>(v);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

MetricGradient zeros(int n) { return MetricGradient(static_cast<std::size_t>(n), Mat::Zero(n, n)); }

MetricHessian zeros2(int n) {
  return MetricHessian(static_cast<std::size_t>(n), std::vector<Mat>(static_cast<std::size_t>(n), Mat::Zero(n, n)));
}

ChartPtr euclidean(int n) {
  return std::make_shared<ChartMetric>(
      n, "euclidean(" + std::to_string(n) + ")", nullptr,
      [n](const Vec&) { return Mat(Mat::Identity(n, n)); }, [n](const Vec&) { return zeros(n); },
      [n](const Vec&) { return zeros2(n); });
}

// Colatitude / longitude on the radius-r sphere.
ChartPtr sphere(double r) {
  if (r <= 0) throw InputError("sphere radius must be positive");
  constexpr double eps = 1e-3;
  const double r2 = r * r;
  return std::make_shared<ChartMetric>(
      2, "sphere(" + fmt(r) + ")",
      [](const Vec& x) { return x(0) > eps && x(0) < M_PI - eps; },
      [r2](const Vec& x) {
        Mat g = Mat::Zero(2, 2);
        g(0, 0) = r2;
        g(1, 1) = r2 * std::sin(x(0)) * std::sin(x(0));
        return g;
      },
      [r2](const Vec& x) {
        auto d = zeros(2);
        d[0](1, 1) = r2 * std::sin(2.0 * x(0));
        return d;
      },
      [r2](const Vec& x) {
        auto d = zeros2(2);
        d[0][0](1, 1) = 2.0 * r2 * std::cos(2.0 * x(0));
        return d;
      });
}

// Conformal ball model of curvature -1/a^2: g = 4 / (1 - |x|^2/a^2)^2 I.
ChartPtr hyperbolic_disk(double a, int n) {
  if (a <= 0) throw InputError("hyperbolic-disk scale must be positive");
  const double a2 = a * a;
  std::string label = "hyperbolic-disk(" + fmt(a) + (n == 2 ? "" : "," + std::to_string(n)) + ")";
  return std::make_shared<ChartMetric>(
      n, label, [a](const Vec& x) { return x.norm() < a * (1.0 - 1e-6); },
      [n, a2](const Vec& x) {
        const double s = 1.0 - x.squaredNorm() / a2;
        return Mat(4.0 / (s * s) * Mat::Identity(n, n));
      },
      [n, a2](const Vec& x) {
        const double s = 1.0 - x.squaredNorm() / a2;
        auto d = zeros(n);
        for (int k = 0; k < n; ++k) d[k] = 16.0 * x(k) / (a2 * s * s * s) * Mat::Identity(n, n);
        return d;
      },
      [n, a2](const Vec& x) {
        const double s = 1.0 - x.squaredNorm() / a2;
        auto d = zeros2(n);
        for (int k = 0; k < n; ++k) {
          for (int l = 0; l < n; ++l) {
            double v = 96.0 * x(k) * x(l) / (a2 * a2 * std::pow(s, 4));
            if (k == l) v += 16.0 / (a2 * s * s * s);
            d[k][l] = v * Mat::Identity(n, n);
          }
        }
        return d;
      });
}

// Graph of z = c |x|^2 in graph coordinates: g = I + 4 c^2 x x^T.
ChartPtr paraboloid(double c, int n) {
  const double c4 = 4.0 * c * c;
  std::string label = "paraboloid(" + fmt(c) + (n == 2 ? "" : "," + std::to_string(n)) + ")";
  return std::make_shared<ChartMetric>(
      n, label, [](const Vec& x) { return x.norm() < 1e3; },
      [n, c4](const Vec& x) { return Mat(Mat::Identity(n, n) + c4 * x * x.transpose()); },
      [n, c4](const Vec& x) {
        auto d = zeros(n);
        for (int k = 0; k < n; ++k) {
          Mat e = Mat::Zero(n, n);
          e.row(k) += x.transpose();
          e.col(k) += x;
          d[k] = c4 * e;
        }
        return d;
      },
      [n, c4](const Vec&) {
        auto d = zeros2(n);
        for (int k = 0; k < n; ++k) {
          for (int l = 0; l < n; ++l) {
            d[k][l](k, l) += c4;
            d[k][l](l, k) += c4;
          }
        }
        return d;
      });
}

ChartPtr revolution(const std::string& profile) {
  if (profile == "torus") {
    // Tube radius 1 around a circle of radius 2: g = diag(1, (2 + cos u)^2).
    return std::make_shared<ChartMetric>(
        2, "revolution(torus)", [](const Vec& x) { return std::abs(x(0)) < 1e3 && std::abs(x(1)) < 1e3; },
        [](const Vec& x) {
          Mat g = Mat::Identity(2, 2);
          const double r = 2.0 + std::cos(x(0));
          g(1, 1) = r * r;
          return g;
        },
        [](const Vec& x) {
          auto d = zeros(2);
          d[0](1, 1) = -2.0 * (2.0 + std::cos(x(0))) * std::sin(x(0));
          return d;
        },
        [](const Vec& x) {
          auto d = zeros2(2);
          const double s = std::sin(x(0)), c = std::cos(x(0));
          d[0][0](1, 1) = 2.0 * s * s - 2.0 * (2.0 + c) * c;
          return d;
        });
  }
  if (profile == "catenoid") {
    // g = cosh^2(u) I.
    return std::make_shared<ChartMetric>(
        2, "revolution(catenoid)", [](const Vec& x) { return std::abs(x(0)) < 20.0 && std::abs(x(1)) < 1e3; },
        [](const Vec& x) { return Mat(std::pow(std::cosh(x(0)), 2) * Mat::Identity(2, 2)); },
        [](const Vec& x) {
          auto d = zeros(2);
          d[0] = std::sinh(2.0 * x(0)) * Mat::Identity(2, 2);
          return d;
        },
        [](const Vec& x) {
          auto d = zeros2(2);
          d[0][0] = 2.0 * std::cosh(2.0 * x(0)) * Mat::Identity(2, 2);
          return d;
        });
  }
  throw InputError("unknown revolution profile '" + profile + "' (torus, catenoid)");
}

}  // namespace

ChartPtr make_chart(const std::string& name) {
  const auto [head, args] = parse_call(name);
  auto need = [&](std::size_t lo, std::size_t hi) {
    if (args.size() < lo || args.size() > hi) throw InputError("wrong argument count in " + name);
  };
  if (head == "euclidean") {
    need(1, 1);
    return euclidean(parse_dim(args[0], name));
  }
  if (head == "sphere") {
    need(0, 1);
    return sphere(args.empty() ? 1.0 : parse_number(args[0], name));
  }
  if (head == "hyperbolic-disk") {
    need(0, 2);
    const double a = args.empty() ? 1.0 : parse_number(args[0], name);
    return hyperbolic_disk(a, args.size() > 1 ? parse_dim(args[1], name) : 2);
  }
  if (head == "paraboloid") {
    need(1, 2);
    return paraboloid(parse_number(args[0], name), args.size() > 1 ? parse_dim(args[1], name) : 2);
  }
  if (head == "revolution") {
    need(1, 1);
    return revolution(args[0]);
  }
  throw InputError("unknown chart '" + name + "'");
}

std::vector<std::string> chart_catalog() {
  return {"euclidean(2)", "sphere(1)", "hyperbolic-disk(1)", "paraboloid(0.5)", "paraboloid(0.5,3)",
          "revolution(torus)", "revolution(catenoid)"};
}

Vec gradient_fd(const std::function<double(const Vec&)>& f, const Vec& x, double rel_step) {
  const double h = rel_step * (1.0 + x.norm());
  Vec out(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    Vec xp = x, xm = x;
    xp(k) += h;
    xm(k) -= h;
    out(k) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return out;
}

}  // namespace upstairs
