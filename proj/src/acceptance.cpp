#include "upstairs/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <cmath>
#include <future>
#include <map>
#include <sstream>

namespace upstairs {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

Scenario catalog(const std::string& name, std::optional<double> T = std::nullopt, std::optional<double> tol = std::nullopt) {
  ScenarioOverrides o;
  o.T = T;
  o.tol = tol;
  return scenario_from_json(catalog_scenario(name), o);
}

const std::vector<std::string>& geodesic_catalog() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& n : scenario_catalog())
      if (catalog_scenario(n).at("kind") == "geodesic") out.push_back(n);
    return out;
  }();
  return names;
}

RollingGeodesicState catalog_geodesic_state(const std::string& name) {
  const auto doc = catalog_scenario(name);
  RollingGeodesicState s;
  s.cfg = configuration_from_json(doc.at("configuration"));
  const int n = s.cfg.dim();
  const auto& init = doc.at("initial");
  s.u = Eigen::Map<const Vec>(init.at("u").get<std::vector<double>>().data(), n);
  s.v = Eigen::Map<const Vec>(init.at("v").get<std::vector<double>>().data(), n);
  s.Lambda = skew_from_upper(Eigen::Map<const Vec>(init.at("Lambda").get<std::vector<double>>().data(), skew_dim(n)), n);
  return s;
}

GeodesicOptions tight(double tol) {
  GeodesicOptions o;
  o.ode.atol = o.ode.rtol = tol;
  return o;
}

// 1. Projection of the lifted flow.
void projection(CriterionResult& r) {
  for (const auto& name : {"heisenberg-lift", "frame-bundle-lift"}) {
    const auto t0 = Clock::now();
    const auto out = run_scenario(catalog(name, 5.0, 1e-9));
    const double secs = seconds_since(t0);
    const std::string tag = name;
    r.measurements.push_back({tag + " lambda", out.invariants.at("sup_error_lambda").value, 1e-6});
    r.measurements.push_back({tag + " beta", out.invariants.at("sup_error_beta").value, 1e-6});
    r.measurements.push_back({tag + " seconds", secs, 10.0});
    if (out.truncated) r.error = tag + " truncated";
  }
}

// 2. Constant speed along every catalog geodesic.
void first_integrals(CriterionResult& r) {
  for (const auto& name : geodesic_catalog()) {
    const auto run = integrate_geodesic(catalog_geodesic_state(name), 10.0, tight(1e-9));
    if (run.traj.truncated) r.error += name + " truncated; ";
    r.measurements.push_back({name + " speed drift", geodesic_monitors(run).speed_drift, 1e-8});
  }
}

Pendulum2DState pendulum_pair(const std::string& M, const std::string& Mh, Vec x, Vec xh) {
  Pendulum2DState p;
  p.cfg = make_configuration(make_chart(M), make_chart(Mh), x, xh);
  p.theta = 0.3;
  p.L = 0.4;
  p.b1 = 0.2;
  p.b2 = -0.1;
  p.a = 0.5;
  return p;
}

std::vector<std::pair<std::string, Pendulum2DState>> reduction_cases() {
  return {{"sphere/plane", pendulum_pair("sphere(1)", "euclidean(2)", Eigen::Vector2d(1.3, 0.2), Eigen::Vector2d(0, 0))},
          {"paraboloid/plane",
           pendulum_pair("paraboloid(0.5)", "euclidean(2)", Eigen::Vector2d(0.3, -0.2), Eigen::Vector2d(0, 0))},
          {"sphere(1)/sphere(2)",
           pendulum_pair("sphere(1)", "sphere(2)", Eigen::Vector2d(1.2, 0.3), Eigen::Vector2d(1.4, -0.2))}};
}

// 3. Reduced 2D system against the general equations.
void reduction_2d(CriterionResult& r) {
  for (const auto& [label, p] : reduction_cases()) {
    const auto red = reduce_2d(p, 5.0, tight(1e-9));
    const auto full = integrate_geodesic(to_geodesic_state(p), 5.0, tight(1e-9));
    if (red.traj.truncated || full.traj.truncated) r.error += label + " truncated; ";
    r.measurements.push_back({label, reduction_discrepancy(red, full), 1e-6});
  }
}

// 4. Sphere on plane is a mathematical pendulum; the memory term vanishes when kappahat = c kappa.
void pendulum(CriterionResult& r) {
  const auto sc = catalog("sphere-on-plane-pendulum");
  const auto& init = sc.doc.at("initial");
  Pendulum2DState p;
  p.cfg = configuration_from_json(sc.doc.at("configuration"));
  p.theta = init.at("theta");
  p.L = init.at("L");
  p.b1 = init.at("b1");
  p.b2 = init.at("b2");
  p.a = init.at("a");
  const auto red = reduce_2d(p, 10.0, tight(1e-11));
  const auto c = fit_pendulum_constants(p);

  // Independent pendulum: theta'' = A sin(theta - phi0).
  const double A = c.A, phi0 = c.phi0;
  Vec y0(2);
  y0 << p.theta, red.traj.derivative_at(0.0)(0);
  OdeOptions o;
  o.atol = o.rtol = 1e-12;
  const auto pend = integrate([A, phi0](double, const Vec& y, Vec& dy) {
    dy.resize(2);
    dy << y(1), A * std::sin(y(0) - phi0);
  }, 0.0, y0, 10.0, o);
  double err = 0.0;
  for (std::size_t k = 0; k < red.traj.size(); ++k)
    err = std::max(err, std::abs(red.traj.y[k](0) - pend.at(red.traj.t[k])(0)));
  for (double s : red.traj.step_midpoints()) err = std::max(err, std::abs(red.traj.at(s)(0) - pend.at(s)(0)));
  r.measurements.push_back({"theta vs pendulum", err, 1e-6});

  for (const auto& [label, q] : reduction_cases()) {
    if (label == "paraboloid/plane") continue;  // kappahat is not a multiple of kappa there
    const auto run = reduce_2d(q, 10.0, tight(1e-9));
    double F = 0.0;
    for (const auto& st : run.traj.y) F = std::max(F, std::abs(memory_F(st)));
    r.measurements.push_back({label + " F", F, 1e-8});
  }
}

// 5. Rolling on R^n: the two special forms and the general flow.
void rn_forms(CriterionResult& r) {
  const auto s0 = catalog_geodesic_state("paraboloid-on-plane-geodesic");
  const auto rn = rn_rolling_flow(s0, 5.0, tight(1e-10).ode);
  const auto gen = integrate_geodesic(s0, 5.0, tight(1e-10));
  const auto ag = rn_agreement(rn, gen);
  r.measurements.push_back({"form a vs form b", ag.a_vs_b, 1e-7});
  r.measurements.push_back({"form a vs general", ag.a_vs_general, 1e-7});
  r.measurements.push_back({"form b vs general", ag.b_vs_general, 1e-7});
}

// 6. The shifted field V + gamma-dot.
void vtilde(CriterionResult& r) {
  for (const auto& name : geodesic_catalog()) {
    const auto run = integrate_geodesic(catalog_geodesic_state(name), 10.0, tight(1e-9));
    r.measurements.push_back({name, vtilde_symmetry_check(run).max(), 1e-7});
  }
}

// 7. Development along a great circle of the unit sphere.
void kinematics(CriterionResult& r) {
  const auto cfg = make_configuration(make_chart("sphere(1)"), make_chart("euclidean(2)"),
                                      Eigen::Vector2d(M_PI / 2, 0.0), Eigen::Vector2d(0.0, 0.0));
  const double L = 2.0 * M_PI;
  const auto curve = BaseCurve::line(cfg.x, Eigen::Vector2d(0.0, 1.0), 0.0, L);
  OdeOptions o;
  o.atol = o.rtol = 1e-12;
  const auto path = develop(cfg, curve, o);
  const auto st = noslip_notwist_residual(path);
  r.measurements.push_back({"slip", st.slip, 1e-8});
  r.measurements.push_back({"twist", st.twist, 1e-8});

  // The trace is the segment from xhat0 along q0 applied to the initial velocity.
  const Vec dir = cfg.q() * curve.velocity(0.0);
  double off_line = 0.0;
  for (std::size_t k = 0; k < path.traj.size(); ++k) {
    const Vec xh = path.traj.y[k].segment(2, 2);
    const double t = path.traj.t[k];
    off_line = std::max(off_line, (xh - (cfg.xhat + t * dir)).norm());
  }
  const auto xh_at = [&](double t) { return Vec(path.traj.at(t).segment(2, 2)); };
  const double length = path_length(*cfg.Mhat, xh_at, 0.0, L, 4000);
  r.measurements.push_back({"trace off the straight line", off_line, 1e-7});
  r.measurements.push_back({"trace length - 2 pi", std::abs(length - L), 1e-7});

  // A great circle is a geodesic: parallel frames keep their angle to it, so q returns to q0.
  const auto end = path.config(path.traj.size() - 1);
  const auto e = gram_schmidt_field(cfg.M);
  const auto eh = gram_schmidt_field(cfg.Mhat);
  const double hol = (reference_frame_matrix(end, e, eh) - reference_frame_matrix(cfg, e, eh)).norm();
  r.measurements.push_back({"holonomy mismatch", hol, 1e-7});

  // A generic curve of the unit sphere rolled on a paraboloid.
  const auto cfg2 = make_configuration(make_chart("sphere(1)"), make_chart("paraboloid(0.7)"),
                                       Eigen::Vector2d(1.0, 0.2), Eigen::Vector2d(0.1, -0.3), rotation2(0.5));
  const auto curve2 = BaseCurve::line(cfg2.x, Eigen::Vector2d(0.3, 0.6), 0.0, 2.0);
  const auto path2 = develop(cfg2, curve2, o);
  const auto st2 = noslip_notwist_residual(path2);
  double defect = 0.0;
  for (std::size_t k = 0; k < path2.traj.size(); ++k) {
    const auto c = path2.config(k);
    defect = std::max({defect, frame_defect(*c.M, c.x, c.f), frame_defect(*c.Mhat, c.xhat, c.fhat)});
  }
  r.measurements.push_back({"generic curve slip", st2.slip, 1e-8});
  r.measurements.push_back({"generic curve twist", st2.twist, 1e-8});
  r.measurements.push_back({"generic curve frame defect", defect, 1e-8});
}

// 8. Charge against the line integral of the rotated V.
void charge(CriterionResult& r) {
  for (const auto& name : {"sphere-on-plane-geodesic", "paraboloid-on-plane-geodesic", "hyperbolic-on-plane-geodesic"}) {
    const auto run = integrate_geodesic(catalog_geodesic_state(name), 10.0, tight(1e-9));
    r.measurements.push_back({name, charge_monitor(run).max_error, 1e-6});
  }
}

// 9. Inverse-crime shooting from a perturbed start.
void bvp(CriterionResult& r) {
  const auto sc = catalog("sphere-on-plane-bvp");
  const auto out = run_scenario(sc);
  r.measurements.push_back({"endpoint residual", out.invariants.at("residual").value, 1e-8});
  const auto& d = out.summary.at("details");
  r.measurements.push_back({"iterations", d.at("iterations").get<double>(), 50});
  if (d.at("status") != "converged") r.error = "status " + d.at("status").get<std::string>();
}

// 10. Curvature gap map.
void bracket_generating(CriterionResult& r) {
  auto gap = [](const std::string& M, const std::string& Mh, Vec x, Vec xh, double rot) {
    return curvature_gap(make_configuration(make_chart(M), make_chart(Mh), x, xh, rotation2(rot))).min_singular_value;
  };
  r.measurements.push_back(
      {"plane on plane", gap("euclidean(2)", "euclidean(2)", Eigen::Vector2d(0.3, 0.1), Eigen::Vector2d(-1, 2), 0.7),
       1e-12});
  r.measurements.push_back(
      {"sphere(1.5) on sphere(1.5)",
       gap("sphere(1.5)", "sphere(1.5)", Eigen::Vector2d(1.1, 0.4), Eigen::Vector2d(0.8, -0.3), 1.2), 1e-12});
  Measurement m{"unit sphere on plane",
                gap("sphere(1)", "euclidean(2)", Eigen::Vector2d(1.2, 0.3), Eigen::Vector2d(0, 0), 0.4), 0.99};
  m.at_least = true;
  r.measurements.push_back(m);
}

struct Entry {
  const char* name;
  void (*fn)(CriterionResult&);
};

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      {"projection", projection}, {"first-integrals", first_integrals}, {"reduction-2d", reduction_2d},
      {"pendulum", pendulum},     {"rn-forms", rn_forms},               {"vtilde", vtilde},
      {"kinematics", kinematics}, {"charge", charge},                   {"bvp", bvp},
      {"bracket-generating", bracket_generating}};
  return entries;
}

}  // namespace

bool CriterionResult::pass() const {
  if (!error.empty() || measurements.empty()) return false;
  return std::all_of(measurements.begin(), measurements.end(), [](const Measurement& m) { return m.pass(); });
}

int criterion_count() { return static_cast<int>(registry().size()); }

std::string criterion_name(int id) {
  if (id < 1 || id > criterion_count()) throw InputError("no criterion " + std::to_string(id));
  return registry()[static_cast<std::size_t>(id - 1)].name;
}

CriterionResult run_criterion(int id) {
  CriterionResult r;
  r.id = id;
  r.name = criterion_name(id);
  const auto t0 = Clock::now();
  try {
    registry()[static_cast<std::size_t>(id - 1)].fn(r);
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.seconds = seconds_since(t0);
  return r;
}

std::vector<std::string> suite_names() {
  std::vector<std::string> out;
  for (const auto& e : registry()) out.emplace_back(e.name);
  out.emplace_back("all");
  return out;
}

std::vector<int> suite_criteria(const std::string& suite) {
  if (suite == "all") {
    std::vector<int> ids;
    for (int i = 1; i <= criterion_count(); ++i) ids.push_back(i);
    return ids;
  }
  for (int i = 1; i <= criterion_count(); ++i)
    if (suite == registry()[static_cast<std::size_t>(i - 1)].name) return {i};
  std::string names;
  for (const auto& n : suite_names()) names += (names.empty() ? "" : ", ") + n;
  throw InputError("unknown suite '" + suite + "'; available: " + names);
}

std::vector<CriterionResult> run_suite(const std::string& suite) {
  const auto ids = suite_criteria(suite);
  std::vector<std::future<CriterionResult>> futures;
  for (int id : ids) futures.push_back(std::async(std::launch::async, [id] { return run_criterion(id); }));
  std::vector<CriterionResult> out;
  for (auto& f : futures) out.push_back(f.get());
  return out;
}

nlohmann::json to_json(const CriterionResult& r) {
  nlohmann::json ms = nlohmann::json::array();
  for (const auto& m : r.measurements)
    ms.push_back({{"label", m.label},
                  {"value", m.value},
                  {"limit", m.limit},
                  {"comparison", m.at_least ? ">=" : "<="},
                  {"pass", m.pass()}});
  nlohmann::json j = {{"id", r.id}, {"name", r.name}, {"pass", r.pass()}, {"measurements", ms}, {"wall_time", r.seconds}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

std::string summary_line(const CriterionResult& r) {
  std::ostringstream os;
  os << (r.pass() ? "[PASS] " : "[FAIL] ") << r.id << ' ' << r.name << ':';
  os.precision(3);
  bool first = true;
  for (const auto& m : r.measurements) {
    os << (first ? " " : "; ") << m.label << '=' << std::scientific << m.value << " (" << (m.at_least ? ">= " : "<= ")
       << m.limit << ')';
    first = false;
  }
  if (!r.error.empty()) os << (first ? " " : "; ") << "error: " << r.error;
  os << std::defaultfloat << " [" << std::fixed << std::setprecision(2) << r.seconds << " s]";
  return os.str();
}

}  // namespace upstairs
