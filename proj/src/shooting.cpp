#include "upstairs/shooting.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <future>
#include <random>
#include <sstream>

namespace upstairs {

namespace {

std::vector<double> to_vector(const Vec& v) { return {v.data(), v.data() + v.size()}; }

Vec vec_from_json(const nlohmann::json& j, Eigen::Index n, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw InputError("'" + what + "' must be an array of " + std::to_string(n) + " numbers");
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

std::array<double, 3> resolve_weights(std::array<double, 3> w, int n) {
  for (auto& x : w)
    if (x < 0.0) x = 1.0 / n;
  return w;
}

Mat q_matrix(const RollingConfiguration& c) {
  return reference_frame_matrix(c, gram_schmidt_field(c.M), gram_schmidt_field(c.Mhat));
}

void require_same_charts(const RollingConfiguration& a, const RollingConfiguration& b) {
  if (a.M->label() != b.M->label() || a.Mhat->label() != b.Mhat->label())
    throw InputError("configurations live on different chart pairs");
}

double radical_inverse(std::uint64_t i, unsigned base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

constexpr std::array<unsigned, 12> kPrimes = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};

struct Layout {
  int n;
  [[nodiscard]] int size() const { return (n - 1) + n + skew_dim(n); }
  [[nodiscard]] Vec pack(const Vec& angles, const Vec& v, const Mat& L) const {
    Vec z(size());
    z << angles, v, upper_of_skew(L);
    return z;
  }
  [[nodiscard]] Vec angles(const Vec& z) const { return z.head(n - 1); }
  [[nodiscard]] Vec v(const Vec& z) const { return z.segment(n - 1, n); }
  [[nodiscard]] Mat Lambda(const Vec& z) const { return skew_from_upper(z.tail(skew_dim(n)), n); }
};

struct Shot {
  bool ok = false;
  bool chart_exit = false;
  Vec z;
  Vec r;
  double distance = 0.0;
  int iterations = 0;
  std::vector<double> history;
};

class Shooter {
 public:
  explicit Shooter(const ShootingProblem& p)
      : p_(p), lay_{p.cfg0.dim()}, w_(resolve_weights(p.controls.weights, p.cfg0.dim())), Q1_(q_matrix(p.cfg1)) {}

  // Residual vector, or nullopt on chart exit.
  std::optional<Vec> residual(const Vec& z) const {
    try {
      const auto end = endpoint_map(p_.cfg0, direction_from_angles(lay_.angles(z)), lay_.v(z), lay_.Lambda(z), p_.T,
                                    p_.a, p_.controls.ode);
      const int n = lay_.n;
      const Mat dQ = q_matrix(end) - Q1_;
      Vec r(2 * n + n * n);
      r << w_[0] * (end.x - p_.cfg1.x), w_[1] * (end.xhat - p_.cfg1.xhat),
          w_[2] * Eigen::Map<const Vec>(dQ.data(), dQ.size());
      return r;
    } catch (const DomainError&) {
      return std::nullopt;
    } catch (const GeometryError&) {
      return std::nullopt;
    }
  }

  [[nodiscard]] double distance(const Vec& r) const {
    const int n = lay_.n;
    return r.segment(0, n).norm() + r.segment(n, n).norm() + r.tail(n * n).norm();
  }

  Shot run(const Vec& z0) const {
    Shot s;
    s.z = z0;
    auto r0 = residual(z0);
    if (!r0) {
      s.chart_exit = true;
      return s;
    }
    s.r = *r0;
    s.distance = distance(s.r);
    s.history.push_back(s.r.norm());
    const auto& c = p_.controls;
    double mu = c.damping;
    double nu = 2.0;
    const int m = lay_.size();
    for (int it = 0; it < c.max_iterations && s.distance > c.tol; ++it) {
      s.iterations = it + 1;
      Mat J(s.r.size(), m);
      bool jac_ok = true;
      for (int k = 0; k < m && jac_ok; ++k) {
        const double h = c.fd_step * std::max(1.0, std::abs(s.z(k)));
        Vec zp = s.z, zm = s.z;
        zp(k) += h;
        zm(k) -= h;
        auto rp = residual(zp), rm = residual(zm);
        if (!rp || !rm) {
          jac_ok = false;
          break;
        }
        J.col(k) = (*rp - *rm) / (2.0 * h);
      }
      if (!jac_ok) break;
      const Mat JtJ = J.transpose() * J;
      const Vec g = J.transpose() * s.r;
      bool accepted = false;
      for (int tries = 0; tries < 16 && !accepted; ++tries) {
        Mat Aug = JtJ;
        for (int k = 0; k < m; ++k) Aug(k, k) += mu * (JtJ(k, k) + 1e-12);
        const Vec step = Aug.ldlt().solve(-g);
        if (!step.allFinite()) {
          mu *= nu;
          nu *= 2.0;
          continue;
        }
        const Vec zn = s.z + step;
        auto rn = residual(zn);
        // Gain ratio against the linear model.
        const double predicted = s.r.squaredNorm() - (s.r + J * step).squaredNorm();
        if (rn && rn->norm() < s.r.norm() && predicted > 0.0) {
          const double rho = (s.r.squaredNorm() - rn->squaredNorm()) / predicted;
          s.z = zn;
          s.r = *rn;
          s.distance = distance(s.r);
          s.history.push_back(s.r.norm());
          mu = std::max(mu * std::max(1.0 / 3.0, 1.0 - std::pow(2.0 * rho - 1.0, 3)), 1e-15);
          nu = 2.0;
          accepted = true;
        } else {
          mu *= nu;
          nu *= 2.0;
        }
      }
      if (!accepted) break;
    }
    s.ok = s.distance <= c.tol;
    return s;
  }

  [[nodiscard]] const Layout& layout() const { return lay_; }

 private:
  const ShootingProblem& p_;
  Layout lay_;
  std::array<double, 3> w_;
  Mat Q1_;
};

// Lexicographic order on vectors, for tie-breaking.
bool lex_less(const Vec& a, const Vec& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

}  // namespace

void ShootingProblem::validate() const {
  if (!cfg0.M || !cfg1.M) throw InputError("shooting problem needs two configurations");
  require_same_charts(cfg0, cfg1);
  cfg0.validate();
  cfg1.validate();
  if (!(a > 0.0) || !std::isfinite(a)) throw InputError("speed a must be positive");
  if (!(T > 0.0) || !std::isfinite(T)) throw InputError("horizon T must be positive");
  if (controls.max_iterations < 1 || controls.multistart < 1) throw InputError("iteration and multistart counts must be positive");
  if (guess) {
    const int n = cfg0.dim();
    if (guess->u0.size() != n || guess->v0.size() != n || guess->Lambda0.rows() != n || guess->Lambda0.cols() != n)
      throw InputError("initial guess has wrong dimension");
  }
}

std::string to_string(ShootingStatus s) {
  switch (s) {
    case ShootingStatus::converged: return "converged";
    case ShootingStatus::stalled: return "stalled";
    case ShootingStatus::chart_exit: return "chart-exit";
  }
  return "unknown";
}

RollingConfiguration endpoint_map(const RollingConfiguration& cfg0, const Vec& u0, const Vec& v0, const Mat& Lambda0,
                                  double T, double a, const OdeOptions& ode) {
  if (u0.norm() == 0.0) throw InputError("initial direction must be nonzero");
  RollingGeodesicState s;
  s.cfg = cfg0;
  s.u = a * u0 / u0.norm();
  s.v = v0;
  s.Lambda = Lambda0;
  GeodesicOptions opts;
  opts.ode = ode;
  const auto run = integrate_geodesic(s, T, opts);
  if (run.traj.truncated) throw DomainError("endpoint map left the chart: " + run.traj.truncation_reason);
  return unpack_geodesic(run.M, run.Mhat, run.traj.back()).cfg;
}

double configuration_distance(const RollingConfiguration& c1, const RollingConfiguration& c2,
                              std::array<double, 3> weights) {
  require_same_charts(c1, c2);
  const auto w = resolve_weights(weights, c1.dim());
  return w[0] * (c1.x - c2.x).norm() + w[1] * (c1.xhat - c2.xhat).norm() + w[2] * (q_matrix(c1) - q_matrix(c2)).norm();
}

Vec direction_from_angles(const Vec& angles) {
  const auto n = angles.size() + 1;
  Vec u(n);
  double s = 1.0;
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    u(i) = s * std::cos(angles(i));
    s *= std::sin(angles(i));
  }
  u(n - 1) = s;
  return u;
}

Vec angles_from_direction(const Vec& u) {
  const auto n = u.size();
  if (n < 2) throw InputError("direction needs at least two components");
  Vec ang(n - 1);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double tail = u.tail(n - i - 1).norm();
    ang(i) = std::atan2(tail, u(i));
  }
  // The last angle carries the sign of the final component.
  ang(n - 2) = std::atan2(u(n - 1), u(n - 2));
  return ang;
}

ShootingResult solve(const ShootingProblem& prob) {
  prob.validate();
  const int n = prob.cfg0.dim();
  const auto& c = prob.controls;
  Shooter shooter(prob);
  const auto& lay = shooter.layout();

  ShootingResult res;
  res.seed = c.seed;
  res.length = prob.a * prob.T;
  res.energy = 0.5 * prob.a * prob.a * prob.T;

  const auto gap = curvature_gap(prob.cfg0);
  if (gap.min_singular_value < c.gap_floor) {
    std::ostringstream os;
    os << "curvature gap at the start is nearly singular (min singular value " << gap.min_singular_value
       << "); the distribution may not be bracket generating";
    res.warnings.push_back(os.str());
  }

  // Start 0: guess, or the direction towards the target with zero covector data.
  std::vector<Vec> starts;
  if (prob.guess) {
    starts.push_back(lay.pack(angles_from_direction(prob.guess->u0.normalized()), prob.guess->v0, prob.guess->Lambda0));
  } else {
    Vec dir = prob.cfg0.f.inverse() * (prob.cfg1.x - prob.cfg0.x);
    if (dir.norm() < 1e-14) dir = Vec::Unit(n, 0);
    starts.push_back(lay.pack(angles_from_direction(dir.normalized()), Vec::Zero(n), Mat::Zero(n, n)));
  }
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int k = 1; k < c.multistart; ++k) {
    Vec z = starts.front();
    const auto idx = static_cast<std::uint64_t>(k) + c.seed;
    for (int i = 0; i < n - 1; ++i) {
      const double span = i == n - 2 ? 2.0 * M_PI : M_PI;
      z(i) = span * radical_inverse(idx, kPrimes[static_cast<std::size_t>(i) % kPrimes.size()]);
    }
    for (int i = n - 1; i < lay.size(); ++i) z(i) += 0.5 * unit(rng);
    starts.push_back(z);
  }

  std::vector<std::future<Shot>> futures;
  futures.reserve(starts.size());
  for (const auto& z0 : starts) futures.push_back(std::async(std::launch::async, [&shooter, z0] { return shooter.run(z0); }));
  std::vector<Shot> shots;
  for (auto& f : futures) shots.push_back(f.get());

  int best = -1;
  bool all_exit = true;
  for (int k = 0; k < static_cast<int>(shots.size()); ++k) {
    const auto& s = shots[static_cast<std::size_t>(k)];
    if (s.chart_exit) continue;
    all_exit = false;
    if (best < 0) {
      best = k;
      continue;
    }
    const auto& b = shots[static_cast<std::size_t>(best)];
    if (s.distance < b.distance || (s.distance == b.distance && lex_less(starts[k], starts[best]))) best = k;
  }
  if (all_exit) {
    res.status = ShootingStatus::chart_exit;
    res.residual = std::numeric_limits<double>::infinity();
    return res;
  }

  const auto& s = shots[static_cast<std::size_t>(best)];
  res.start_index = best;
  res.u0 = prob.a * direction_from_angles(lay.angles(s.z));
  res.v0 = lay.v(s.z);
  res.Lambda0 = lay.Lambda(s.z);
  res.residual = s.distance;
  res.iterations = s.iterations;
  res.history = s.history;
  res.status = s.ok ? ShootingStatus::converged : ShootingStatus::stalled;

  RollingGeodesicState st;
  st.cfg = prob.cfg0;
  st.u = res.u0;
  st.v = res.v0;
  st.Lambda = res.Lambda0;
  GeodesicOptions opts;
  opts.ode = c.ode;
  res.run = integrate_geodesic(st, prob.T, opts);
  return res;
}

nlohmann::json to_json(const ShootingProblem& prob) {
  const auto& c = prob.controls;
  nlohmann::json j = {{"cfg0", to_json(prob.cfg0)},
                      {"cfg1", to_json(prob.cfg1)},
                      {"T", prob.T},
                      {"a", prob.a},
                      {"controls",
                       {{"max_iterations", c.max_iterations},
                        {"damping", c.damping},
                        {"tol", c.tol},
                        {"multistart", c.multistart},
                        {"seed", c.seed},
                        {"fd_step", c.fd_step},
                        {"gap_floor", c.gap_floor},
                        {"weights", c.weights},
                        {"ode_tol", c.ode.atol}}}};
  if (prob.guess)
    j["guess"] = {{"u0", to_vector(prob.guess->u0)},
                  {"v0", to_vector(prob.guess->v0)},
                  {"Lambda0", to_vector(upper_of_skew(prob.guess->Lambda0))}};
  return j;
}

ShootingProblem shooting_problem_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InputError("shooting problem must be an object");
  for (const char* k : {"cfg0", "cfg1"})
    if (!j.contains(k)) throw InputError(std::string("shooting problem is missing '") + k + "'");
  ShootingProblem p;
  p.cfg0 = configuration_from_json(j.at("cfg0"));
  p.cfg1 = configuration_from_json(j.at("cfg1"));
  p.T = j.value("T", 1.0);
  p.a = j.value("a", 1.0);
  if (j.contains("controls")) {
    const auto& c = j.at("controls");
    auto& pc = p.controls;
    pc.max_iterations = c.value("max_iterations", pc.max_iterations);
    pc.damping = c.value("damping", pc.damping);
    pc.tol = c.value("tol", pc.tol);
    pc.multistart = c.value("multistart", pc.multistart);
    pc.seed = c.value("seed", pc.seed);
    pc.fd_step = c.value("fd_step", pc.fd_step);
    pc.gap_floor = c.value("gap_floor", pc.gap_floor);
    if (c.contains("weights")) pc.weights = c.at("weights").get<std::array<double, 3>>();
    if (c.contains("ode_tol")) pc.ode.atol = pc.ode.rtol = c.at("ode_tol").get<double>();
  }
  if (j.contains("guess")) {
    const int n = p.cfg0.dim();
    const auto& g = j.at("guess");
    ShootingGuess guess;
    guess.u0 = vec_from_json(g.at("u0"), n, "u0");
    guess.v0 = g.contains("v0") ? vec_from_json(g.at("v0"), n, "v0") : Vec(Vec::Zero(n));
    guess.Lambda0 = g.contains("Lambda0") ? skew_from_upper(vec_from_json(g.at("Lambda0"), skew_dim(n), "Lambda0"), n)
                                          : Mat(Mat::Zero(n, n));
    p.guess = guess;
  }
  p.validate();
  return p;
}

nlohmann::json to_json(const ShootingResult& res, const std::string& trajectory_path) {
  nlohmann::json j = {{"status", to_string(res.status)},
                      {"residual", res.residual},
                      {"iterations", res.iterations},
                      {"history", res.history},
                      {"length", res.length},
                      {"energy", res.energy},
                      {"seed", res.seed},
                      {"start_index", res.start_index},
                      {"warnings", res.warnings}};
  if (res.u0.size() > 0) {
    j["u0"] = to_vector(res.u0);
    j["v0"] = to_vector(res.v0);
    j["Lambda0"] = to_vector(upper_of_skew(res.Lambda0));
  }
  if (!trajectory_path.empty()) j["trajectory"] = trajectory_path;
  return j;
}

}  // namespace upstairs
