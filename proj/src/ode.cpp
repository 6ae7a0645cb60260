#include "upstairs/ode.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace upstairs {

namespace {

// Dormand-Prince 5(4) tableau and Hairer's dense-output weights.
constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                 a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                 a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0,
                 a75 = -2187.0 / 6784.0, a76 = 11.0 / 84.0;
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                 e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

double error_norm(const Vec& err, const Vec& y0, const Vec& y1, const OdeOptions& o) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double sk = o.atol + o.rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    const double r = err(i) / sk;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(std::max<Eigen::Index>(err.size(), 1)));
}

bool finite(const Vec& v) { return v.allFinite(); }

}  // namespace

std::size_t Trajectory::locate(double s) const {
  if (segments.empty()) return 0;
  const bool forward = t.back() >= t.front();
  // Nodes are monotone in the integration direction.
  auto it = forward ? std::upper_bound(t.begin(), t.end(), s)
                    : std::upper_bound(t.begin(), t.end(), s, std::greater<>());
  auto k = static_cast<std::ptrdiff_t>(it - t.begin()) - 1;
  k = std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(segments.size()) - 1);
  return static_cast<std::size_t>(k);
}

Vec Trajectory::at(double s) const {
  if (segments.empty()) return y.front();
  const auto& seg = segments[locate(s)];
  const double th = std::clamp((s - seg.t0) / seg.h, 0.0, 1.0);
  const double th1 = 1.0 - th;
  return seg.r1 + th * (seg.r2 + th1 * (seg.r3 + th * (seg.r4 + th1 * seg.r5)));
}

Vec Trajectory::derivative_at(double s) const {
  if (field) {
    Vec d;
    field(s, at(s), d);
    return d;
  }
  if (segments.empty()) return Vec::Zero(y.front().size());
  const auto& seg = segments[locate(s)];
  const double th = std::clamp((s - seg.t0) / seg.h, 0.0, 1.0);
  // p(th) = r1 + th r2 + th(1-th) r3 + th^2(1-th) r4 + th^2(1-th)^2 r5
  const double dq3 = 1.0 - 2.0 * th;
  const double dq4 = 2.0 * th - 3.0 * th * th;
  const double dq5 = 2.0 * th * (1.0 - th) * (1.0 - 2.0 * th);
  return (seg.r2 + dq3 * seg.r3 + dq4 * seg.r4 + dq5 * seg.r5) / seg.h;
}

std::vector<double> Trajectory::step_midpoints() const {
  std::vector<double> mids;
  mids.reserve(segments.size());
  for (const auto& s : segments) mids.push_back(s.t0 + 0.5 * s.h);
  return mids;
}

Trajectory integrate(const OdeRhs& rhs, double t0, const Vec& y0, double t1, const OdeOptions& o,
                     const StepHooks& hooks) {
  Trajectory traj;
  traj.t.push_back(t0);
  traj.y.push_back(y0);
  if (t1 == t0) return traj;

  const double dir = t1 > t0 ? 1.0 : -1.0;
  const double span = std::abs(t1 - t0);
  const auto n = y0.size();

  Vec k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), y1(n), err(n);

  auto eval = [&](double t, const Vec& y, Vec& out) {
    rhs(t, y, out);
    ++traj.rhs_evaluations;
    if (!finite(out)) throw DomainError("non-finite right-hand side");
  };

  if (hooks.in_domain && !hooks.in_domain(y0)) {
    traj.truncated = true;
    traj.truncation_reason = "initial state outside domain";
    return traj;
  }

  try {
    eval(t0, y0, k1);
  } catch (const DomainError& e) {
    traj.truncated = true;
    traj.truncation_reason = std::string("initial evaluation failed: ") + e.what();
    return traj;
  }

  double h = o.initial_step;
  if (h <= 0.0) {
    // Hairer's starting-step heuristic, simplified.
    const double d0 = y0.norm() / std::sqrt(static_cast<double>(std::max<Eigen::Index>(n, 1)));
    const double dd = k1.norm() / std::sqrt(static_cast<double>(std::max<Eigen::Index>(n, 1)));
    h = (d0 < 1e-5 || dd < 1e-5) ? 1e-6 : 0.01 * d0 / dd;
    h = std::min({h, 0.1 * span, o.max_step});
    h = std::max(h, 1e-10 * span);
  }

  double t = t0;
  Vec y = y0;
  int consecutive_domain_failures = 0;
  const double min_step = 1e-13 * std::max(1.0, std::abs(t0) + span);

  while (dir * (t1 - t) > 0.0) {
    if (traj.accepted_steps + traj.rejected_steps >= o.max_steps) {
      traj.truncated = true;
      traj.truncation_reason = "maximum step count reached";
      break;
    }
    bool last = false;
    if (h >= std::abs(t1 - t)) {
      h = std::abs(t1 - t);
      last = true;
    }
    const double hs = dir * h;

    bool domain_failure = false;
    try {
      ytmp = y + hs * a21 * k1;
      eval(t + c2 * hs, ytmp, k2);
      ytmp = y + hs * (a31 * k1 + a32 * k2);
      eval(t + c3 * hs, ytmp, k3);
      ytmp = y + hs * (a41 * k1 + a42 * k2 + a43 * k3);
      eval(t + c4 * hs, ytmp, k4);
      ytmp = y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
      eval(t + c5 * hs, ytmp, k5);
      ytmp = y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
      eval(t + hs, ytmp, k6);
      y1 = y + hs * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
      if (hooks.in_domain && !hooks.in_domain(y1)) throw DomainError("step leaves domain");
      eval(t + hs, y1, k7);
    } catch (const DomainError&) {
      domain_failure = true;
    }

    if (domain_failure) {
      ++traj.rejected_steps;
      ++consecutive_domain_failures;
      h *= 0.25;
      if (h < min_step || consecutive_domain_failures > 60) {
        traj.truncated = true;
        traj.truncation_reason = "chart domain exit";
        break;
      }
      continue;
    }

    err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = error_norm(err, y, y1, o);

    if (en <= 1.0) {
      consecutive_domain_failures = 0;
      Trajectory::Segment seg;
      seg.t0 = t;
      seg.h = hs;
      seg.r1 = y;
      seg.r2 = y1 - y;
      seg.r3 = hs * k1 - seg.r2;
      seg.r4 = seg.r2 - hs * k7 - seg.r3;
      seg.r5 = hs * (d1 * k1 + d3 * k3 + d4 * k4 + d5 * k5 + d6 * k6 + d7 * k7);

      t = last ? t1 : t + hs;
      y = y1;
      k1 = k7;
      if (hooks.post_step && hooks.post_step(t, y)) {
        ++traj.projections;
        try {
          eval(t, y, k1);
        } catch (const DomainError&) {
          traj.truncated = true;
          traj.truncation_reason = "chart domain exit after projection";
          break;
        }
      }
      traj.segments.push_back(std::move(seg));
      traj.t.push_back(t);
      traj.y.push_back(y);
      ++traj.accepted_steps;

      const double fac = en > 0.0 ? 0.9 * std::pow(en, -0.2) : 5.0;
      h *= std::clamp(fac, 0.2, 5.0);
      h = std::min(h, o.max_step);
    } else {
      ++traj.rejected_steps;
      h *= std::clamp(0.9 * std::pow(en, -0.2), 0.1, 0.9);
      if (h < min_step) {
        traj.truncated = true;
        traj.truncation_reason = "step size underflow";
        break;
      }
    }
  }
  return traj;
}

std::vector<double> cumulative_quadrature(const Trajectory& traj,
                                          const std::function<double(double, const Vec&)>& integrand) {
  static constexpr std::array<double, 5> nodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                                  0.5384693101056831, 0.9061798459386640};
  static constexpr std::array<double, 5> weights = {0.2369268850561891, 0.4786286704993665,
                                                    0.5688888888888889, 0.4786286704993665,
                                                    0.2369268850561891};
  std::vector<double> out(traj.size(), 0.0);
  double acc = 0.0;
  for (std::size_t k = 0; k < traj.segments.size(); ++k) {
    const auto& seg = traj.segments[k];
    double part = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) {
      const double s = seg.t0 + 0.5 * seg.h * (1.0 + nodes[q]);
      part += weights[q] * integrand(s, traj.at(s));
    }
    acc += 0.5 * seg.h * part;
    out[k + 1] = acc;
  }
  return out;
}

}  // namespace upstairs
