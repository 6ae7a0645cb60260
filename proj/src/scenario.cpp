#include "upstairs/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace upstairs {

using nlohmann::json;

namespace {

[[noreturn]] void invalid(const std::string& what) { throw ScenarioError(kExitValidation, what); }

const std::map<std::string, ScenarioKind>& kind_names() {
  static const std::map<std::string, ScenarioKind> names = {
      {"verify-lift", ScenarioKind::verify_lift}, {"develop", ScenarioKind::develop},
      {"geodesic", ScenarioKind::geodesic},       {"pendulum-2d", ScenarioKind::pendulum_2d},
      {"rn-roll", ScenarioKind::rn_roll},         {"bvp", ScenarioKind::bvp}};
  return names;
}

double number(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key)) invalid(ctx + ": missing field '" + key + "'");
  const auto& v = j.at(key);
  if (!v.is_number()) invalid(ctx + ": field '" + key + "' must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) invalid(ctx + ": field '" + key + "' must be finite");
  return d;
}

Vec vector_field(const json& j, const std::string& key, int n, const std::string& ctx) {
  if (!j.contains(key)) invalid(ctx + ": missing field '" + key + "'");
  const auto& v = j.at(key);
  if (!v.is_array() || static_cast<int>(v.size()) != n)
    invalid(ctx + ": field '" + key + "' must be an array of " + std::to_string(n) + " numbers");
  Vec out(n);
  for (int i = 0; i < n; ++i) {
    const auto& e = v.at(static_cast<std::size_t>(i));
    if (!e.is_number() || !std::isfinite(e.get<double>()))
      invalid(ctx + ": field '" + key + "' has a non-finite or non-numeric entry");
    out(i) = e.get<double>();
  }
  return out;
}

const json& object_field(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key)) invalid(ctx + ": missing field '" + key + "'");
  if (!j.at(key).is_object()) invalid(ctx + ": field '" + key + "' must be an object");
  return j.at(key);
}

std::string string_field(const json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key)) invalid(ctx + ": missing field '" + key + "'");
  if (!j.at(key).is_string()) invalid(ctx + ": field '" + key + "' must be a string");
  return j.at(key).get<std::string>();
}

RollingConfiguration configuration(const json& doc, const std::string& key) {
  const auto& j = object_field(doc, key, "scenario");
  try {
    auto cfg = configuration_from_json(j);
    if (!cfg.M->in_domain(cfg.x)) invalid(key + ": x lies outside the chart domain of " + cfg.M->label());
    if (!cfg.Mhat->in_domain(cfg.xhat)) invalid(key + ": xhat lies outside the chart domain of " + cfg.Mhat->label());
    return cfg;
  } catch (const InputError& e) {
    invalid(key + ": " + e.what());
  } catch (const GeometryError& e) {
    invalid(key + ": " + e.what());
  } catch (const DomainError& e) {
    invalid(key + ": " + e.what());
  } catch (const json::exception& e) {
    invalid(key + ": " + e.what());
  }
}

RollingGeodesicState geodesic_initial(const json& doc) {
  RollingGeodesicState s;
  s.cfg = configuration(doc, "configuration");
  const int n = s.cfg.dim();
  const auto& init = object_field(doc, "initial", "scenario");
  s.u = vector_field(init, "u", n, "initial");
  if (s.u.norm() == 0.0) invalid("initial: u must be nonzero");
  s.v = init.contains("v") ? vector_field(init, "v", n, "initial") : Vec(Vec::Zero(n));
  s.Lambda = init.contains("Lambda") ? skew_from_upper(vector_field(init, "Lambda", skew_dim(n), "initial"), n)
                                     : Mat(Mat::Zero(n, n));
  return s;
}

Pendulum2DState pendulum_initial(const json& doc, double floor) {
  Pendulum2DState p;
  p.cfg = configuration(doc, "configuration");
  if (p.cfg.dim() != 2) invalid("pendulum-2d needs 2-dimensional charts");
  const auto& init = object_field(doc, "initial", "scenario");
  p.theta = number(init, "theta", "initial");
  p.L = number(init, "L", "initial");
  p.b1 = number(init, "b1", "initial");
  p.b2 = number(init, "b2", "initial");
  p.a = number(init, "a", "initial");
  if (!(p.a > 0.0)) invalid("initial: speed a must be positive");
  const double gap = gauss_curvature(*p.cfg.M, p.cfg.x) - gauss_curvature(*p.cfg.Mhat, p.cfg.xhat);
  if (std::abs(gap) < floor) {
    std::ostringstream os;
    os << "pendulum-2d: |kappa - kappahat| = " << std::abs(gap) << " at the start is below " << floor
       << "; the curvatures coincide, so the rolling distribution is not bracket generating there and the "
          "pendulum form is undefined";
    invalid(os.str());
  }
  return p;
}

BaseCurve develop_curve(const json& doc, const Vec& x0, double T) {
  const auto& c = object_field(doc, "curve", "scenario");
  const std::string type = string_field(c, "type", "curve");
  const int n = static_cast<int>(x0.size());
  if (type == "line") return BaseCurve::line(x0, vector_field(c, "velocity", n, "curve"), 0.0, T);
  if (type == "samples") {
    if (!c.contains("t") || !c.at("t").is_array() || !c.contains("x") || !c.at("x").is_array())
      invalid("curve: samples need arrays 't' and 'x'");
    const auto& ts = c.at("t");
    const auto& xs = c.at("x");
    if (ts.size() != xs.size() || ts.size() < 2) invalid("curve: 't' and 'x' need the same length, at least 2");
    std::vector<double> t;
    std::vector<Vec> x;
    for (std::size_t k = 0; k < ts.size(); ++k) {
      if (!ts[k].is_number()) invalid("curve: sample times must be numbers");
      t.push_back(ts[k].get<double>());
      json wrap = {{"p", xs[k]}};
      x.push_back(vector_field(wrap, "p", n, "curve sample"));
      if (k > 0 && !(t[k] > t[k - 1])) invalid("curve: sample times must increase");
    }
    if ((x.front() - x0).norm() > 1e-10) invalid("curve: first sample must equal the configuration's x");
    return BaseCurve::from_samples(t, x);
  }
  invalid("curve: unknown type '" + type + "' (line | samples)");
}

BaseHamiltonian hamiltonian(const json& doc, int n) {
  const std::string name = doc.contains("hamiltonian") ? string_field(doc, "hamiltonian", "scenario") : "euclidean";
  if (name == "euclidean") return BaseHamiltonian::euclidean(n);
  try {
    const auto [head, args] = parse_call(name);
    if (head == "riemannian" && args.size() == 1) {
      auto chart = make_chart(args[0]);
      if (chart->dim() != n) invalid("hamiltonian: chart dimension differs from the testbed base");
      return BaseHamiltonian::riemannian(chart);
    }
  } catch (const InputError& e) {
    invalid(std::string("hamiltonian: ") + e.what());
  }
  invalid("hamiltonian: unknown '" + name + "' (euclidean | riemannian(<chart>))");
}

struct LiftSetup {
  SubmersionTestbed tb;
  BaseHamiltonian H;
  CotangentState p0;
};

LiftSetup lift_setup(const json& doc) {
  LiftSetup s;
  try {
    s.tb = make_testbed(string_field(doc, "testbed", "scenario"));
  } catch (const InputError& e) {
    invalid(std::string("testbed: ") + e.what());
  }
  s.H = hamiltonian(doc, s.tb.n);
  if (doc.contains("rolling")) {
    if (s.tb.label.rfind("frame-bundle(", 0) != 0) invalid("rolling initial data needs a frame-bundle testbed");
    const auto st = geodesic_initial(object_field(doc, "rolling", "scenario"));
    if (st.cfg.M->label() + "," + st.cfg.Mhat->label() != s.tb.label.substr(13, s.tb.label.size() - 14))
      invalid("rolling: configuration charts differ from the testbed's");
    s.p0 = frame_bundle_covector(st.cfg, st.u, st.v, st.Lambda);
  } else {
    const auto& init = object_field(doc, "initial", "scenario");
    s.p0.x = vector_field(init, "x", s.tb.n, "initial");
    s.p0.y = vector_field(init, "y", s.tb.nu, "initial");
    s.p0.a = vector_field(init, "a", s.tb.n, "initial");
    s.p0.b = vector_field(init, "b", s.tb.nu, "initial");
  }
  if (!s.tb.in_domain(s.p0.x, s.p0.y)) invalid("initial: point outside the testbed domain");
  return s;
}

ShootingProblem bvp_problem(const json& doc, double T, double tol, std::uint64_t seed) {
  ShootingProblem p;
  p.cfg0 = configuration(doc, "configuration");
  const int n = p.cfg0.dim();
  p.T = T;
  p.a = doc.contains("a") ? number(doc, "a", "scenario") : 1.0;
  if (!(p.a > 0.0)) invalid("a must be positive");
  if (doc.contains("controls")) {
    json wrap = {{"cfg0", to_json(p.cfg0)}, {"cfg1", to_json(p.cfg0)}, {"controls", doc.at("controls")}};
    try {
      p.controls = shooting_problem_from_json(wrap).controls;
    } catch (const std::exception& e) {
      invalid(std::string("controls: ") + e.what());
    }
  }
  p.controls.seed = seed;
  p.controls.ode.atol = p.controls.ode.rtol = std::min(tol, p.controls.ode.atol);
  if (doc.contains("target")) {
    p.cfg1 = configuration(doc, "target");
  } else if (doc.contains("target_from")) {
    // Target generated from known initial data, as in an inverse-crime test.
    json wrap = {{"configuration", doc.at("configuration")}, {"initial", doc.at("target_from")}};
    const auto known = geodesic_initial(wrap);
    try {
      p.cfg1 = endpoint_map(p.cfg0, known.u, known.v, known.Lambda, T, p.a, p.controls.ode);
    } catch (const DomainError& e) {
      invalid(std::string("target_from: ") + e.what());
    }
  } else {
    invalid("bvp needs 'target' or 'target_from'");
  }
  if (doc.contains("guess")) {
    json wrap = {{"configuration", doc.at("configuration")}, {"initial", doc.at("guess")}};
    const auto g = geodesic_initial(wrap);
    p.guess = ShootingGuess{g.u, g.v, g.Lambda};
  }
  (void)n;
  try {
    p.validate();
  } catch (const InputError& e) {
    invalid(std::string("bvp: ") + e.what());
  } catch (const GeometryError& e) {
    invalid(std::string("bvp: ") + e.what());
  }
  return p;
}

// Default invariant limits per kind.
std::map<std::string, double> default_limits(ScenarioKind k, double tol) {
  switch (k) {
    case ScenarioKind::verify_lift:
      return {{"sup_error_lambda", 100 * tol}, {"sup_error_beta", 100 * tol}, {"sup_error_lift", 100 * tol}};
    case ScenarioKind::develop:
      return {{"slip", 10 * tol}, {"twist", 10 * tol}, {"frame_defect", 1e-8}};
    case ScenarioKind::geodesic:
      return {{"speed_drift", 1e-8}, {"frame_defect", 1e-8}, {"covariant", 100 * tol}, {"vtilde", 100 * tol},
              {"charge", 1e-6}};
    case ScenarioKind::pendulum_2d:
      return {{"speed_drift", 1e-8}, {"pendulum", 1e-6}, {"closed_form_b", 1e-6}, {"reduction", 1e-6}};
    case ScenarioKind::rn_roll:
      return {{"a_vs_b", 100 * tol}, {"a_vs_general", 100 * tol}, {"b_vs_general", 100 * tol}};
    case ScenarioKind::bvp:
      return {{"residual", 1e-8}, {"covariant", 1e-7}};
  }
  return {};
}

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::vector<double> to_vector(const Vec& v) { return {v.data(), v.data() + v.size()}; }

void check_known_fields(const json& doc) {
  static const std::vector<std::string> known = {
      "name",  "kind",   "T",       "tol",         "seed",      "limits", "configuration", "initial",
      "curve", "testbed", "hamiltonian", "rolling", "a",     "controls", "target",        "target_from",
      "guess", "curvature_floor", "description"};
  for (const auto& [k, v] : doc.items())
    if (std::find(known.begin(), known.end(), k) == known.end()) invalid("unknown field '" + k + "'");
}

}  // namespace

std::string to_string(ScenarioKind k) {
  for (const auto& [name, kind] : kind_names())
    if (kind == k) return name;
  return "unknown";
}

std::uint64_t scenario_hash(const json& doc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : doc.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Scenario parse_scenario(const std::string& text, const ScenarioOverrides& overrides) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // Convert the byte offset to line and column.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ScenarioError(kExitParse, "parse error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                                        ": " + e.what());
  }
  return scenario_from_json(std::move(doc), overrides);
}

Scenario scenario_from_json(json doc, const ScenarioOverrides& overrides) {
  if (!doc.is_object()) invalid("scenario must be a JSON object");
  check_known_fields(doc);
  if (overrides.tol) doc["tol"] = *overrides.tol;
  if (overrides.T) doc["T"] = *overrides.T;
  if (overrides.seed) doc["seed"] = *overrides.seed;

  Scenario sc;
  const std::string kind = string_field(doc, "kind", "scenario");
  const auto it = kind_names().find(kind);
  if (it == kind_names().end())
    invalid("unknown kind '" + kind + "' (verify-lift | develop | geodesic | pendulum-2d | rn-roll | bvp)");
  sc.kind = it->second;
  sc.name = doc.contains("name") ? string_field(doc, "name", "scenario") : "scenario";
  sc.T = number(doc, "T", "scenario");
  if (!(sc.T > 0.0)) invalid("T must be positive");
  sc.tol = doc.contains("tol") ? number(doc, "tol", "scenario") : 1e-9;
  if (!(sc.tol > 0.0) || sc.tol > 1e-2) invalid("tol must lie in (0, 1e-2]");
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) invalid("seed must be a non-negative integer");
    sc.seed = doc.at("seed").get<std::uint64_t>();
  }
  auto limits = default_limits(sc.kind, sc.tol);
  if (doc.contains("limits")) {
    const auto& l = object_field(doc, "limits", "scenario");
    for (const auto& [k, v] : l.items()) {
      if (!limits.count(k)) invalid("limits: '" + k + "' is not monitored for kind " + kind);
      if (!v.is_number() || !(v.get<double>() > 0.0)) invalid("limits: '" + k + "' must be a positive number");
      sc.limits[k] = v.get<double>();
    }
  }
  if (doc.contains("curvature_floor") && !(number(doc, "curvature_floor", "scenario") > 0.0))
    invalid("curvature_floor must be positive");
  sc.doc = doc;

  // Build every input once so that schema and geometry problems surface here.
  const double floor = doc.value("curvature_floor", 1e-3);
  try {
    switch (sc.kind) {
      case ScenarioKind::verify_lift: (void)lift_setup(doc); break;
      case ScenarioKind::develop: {
        const auto cfg = configuration(doc, "configuration");
        (void)develop_curve(doc, cfg.x, sc.T);
        break;
      }
      case ScenarioKind::geodesic: (void)geodesic_initial(doc); break;
      case ScenarioKind::pendulum_2d: (void)pendulum_initial(doc, floor); break;
      case ScenarioKind::rn_roll: {
        const auto s = geodesic_initial(doc);
        if (s.cfg.Mhat->label().rfind("euclidean(", 0) != 0) invalid("rn-roll needs a euclidean target chart");
        break;
      }
      case ScenarioKind::bvp: break;  // the target may need an integration; checked when run
    }
  } catch (const DomainError& e) {
    invalid(e.what());
  } catch (const GeometryError& e) {
    invalid(e.what());
  } catch (const InputError& e) {
    invalid(e.what());
  }
  return sc;
}

std::vector<std::string> scenario_catalog() {
  return {"sphere-on-plane-pendulum",   "sphere-on-plane-geodesic",   "paraboloid-on-plane-geodesic",
          "sphere-on-sphere-geodesic",  "hyperbolic-on-plane-geodesic", "torus-on-plane-geodesic",
          "paraboloid-3d-geodesic",     "heisenberg-lift",            "frame-bundle-lift",
          "great-circle-develop",       "paraboloid-rn-roll",         "paraboloid-3d-rn-roll",
          "sphere-on-plane-bvp"};
}

json catalog_scenario(const std::string& name) {
  auto cfg = [](const std::string& M, const std::string& Mh, std::vector<double> x, std::vector<double> xh) {
    return json{{"chartM", M}, {"chartMhat", Mh}, {"x", x}, {"xhat", xh}};
  };
  auto geo = [](std::vector<double> u, std::vector<double> v, std::vector<double> L) {
    return json{{"u", u}, {"v", v}, {"Lambda", L}};
  };
  const double half_pi = M_PI / 2.0;
  if (name == "sphere-on-plane-pendulum")
    return {{"name", name},
            {"kind", "pendulum-2d"},
            {"configuration", cfg("sphere(1)", "euclidean(2)", {half_pi, 0.0}, {0.0, 0.0})},
            {"initial", {{"theta", 0.3}, {"L", 0.4}, {"b1", 0.2}, {"b2", -0.1}, {"a", 0.5}}},
            {"T", 10.0}};
  if (name == "sphere-on-plane-geodesic")
    return {{"name", name},
            {"kind", "geodesic"},
            {"configuration", cfg("sphere(1)", "euclidean(2)", {1.3, 0.2}, {0.0, 0.0})},
            {"initial", geo({0.4, 0.3}, {0.1, -0.2}, {0.3})},
            {"T", 10.0}};
  if (name == "paraboloid-on-plane-geodesic")
    return {{"name", name},
            {"kind", "geodesic"},
            {"configuration", cfg("paraboloid(0.5)", "euclidean(2)", {0.3, -0.2}, {0.0, 0.0})},
            {"initial", geo({0.3, 0.1}, {0.2, 0.1}, {0.2})},
            {"T", 10.0}};
  if (name == "sphere-on-sphere-geodesic")
    return {{"name", name},
            {"kind", "geodesic"},
            {"configuration", cfg("sphere(1)", "sphere(2)", {1.2, 0.3}, {1.4, -0.2})},
            {"initial", geo({0.3, 0.2}, {0.1, -0.1}, {0.25})},
            {"T", 10.0}};
  if (name == "hyperbolic-on-plane-geodesic")
    return {{"name", name},
            {"kind", "geodesic"},
            {"configuration", cfg("hyperbolic-disk(1)", "euclidean(2)", {0.1, 0.05}, {0.0, 0.0})},
            {"initial", geo({0.2, 0.1}, {0.05, 0.1}, {0.15})},
            {"T", 10.0}};
  if (name == "torus-on-plane-geodesic")
    return {{"name", name},
            {"kind", "geodesic"},
            {"configuration", cfg("revolution(torus)", "euclidean(2)", {0.4, 0.1}, {0.0, 0.0})},
            {"initial", geo({0.3, 0.2}, {-0.1, 0.2}, {0.2})},
            {"T", 10.0}};
  if (name == "paraboloid-3d-geodesic")
    return {{"name", name},
            {"kind", "geodesic"},
            {"configuration", cfg("paraboloid(0.5,3)", "euclidean(3)", {0.2, -0.1, 0.1}, {0.0, 0.0, 0.0})},
            {"initial", geo({0.3, 0.1, -0.2}, {0.1, 0.0, 0.1}, {0.2, -0.1, 0.15})},
            {"T", 10.0}};
  if (name == "heisenberg-lift")
    return {{"name", name},
            {"kind", "verify-lift"},
            {"testbed", "heisenberg"},
            {"hamiltonian", "euclidean"},
            {"initial", {{"x", {0.1, 0.2}}, {"y", {0.0}}, {"a", {0.5, -0.3}}, {"b", {0.7}}}},
            {"T", 5.0}};
  if (name == "frame-bundle-lift")
    return {{"name", name},
            {"kind", "verify-lift"},
            {"testbed", "frame-bundle(sphere(1),euclidean(2))"},
            {"hamiltonian", "riemannian(sphere(1))"},
            {"rolling",
             {{"configuration", cfg("sphere(1)", "euclidean(2)", {1.3, 0.2}, {0.0, 0.0})},
              {"initial", geo({0.4, 0.3}, {0.1, -0.2}, {0.3})}}},
            {"T", 5.0}};
  if (name == "great-circle-develop")
    return {{"name", name},
            {"kind", "develop"},
            {"configuration", cfg("sphere(1)", "euclidean(2)", {half_pi, 0.0}, {0.0, 0.0})},
            {"curve", {{"type", "line"}, {"velocity", {0.0, 1.0}}}},
            {"T", 2.0 * M_PI}};
  if (name == "paraboloid-rn-roll")
    return {{"name", name},
            {"kind", "rn-roll"},
            {"configuration", cfg("paraboloid(0.5)", "euclidean(2)", {0.3, -0.2}, {0.0, 0.0})},
            {"initial", geo({0.3, 0.1}, {0.2, 0.1}, {0.2})},
            {"T", 5.0}};
  if (name == "paraboloid-3d-rn-roll")
    return {{"name", name},
            {"kind", "rn-roll"},
            {"configuration", cfg("paraboloid(0.5,3)", "euclidean(3)", {0.2, -0.1, 0.1}, {0.0, 0.0, 0.0})},
            {"initial", geo({0.3, 0.1, -0.2}, {0.1, 0.0, 0.1}, {0.2, -0.1, 0.15})},
            {"T", 5.0}};
  if (name == "sphere-on-plane-bvp")
    return {{"name", name},
            {"kind", "bvp"},
            {"configuration", cfg("sphere(1)", "euclidean(2)", {1.2, 0.3}, {0.0, 0.0})},
            {"target_from", geo({0.8, 0.6}, {0.3, -0.2}, {0.4})},
            {"guess", geo({0.81, 0.61}, {0.31, -0.19}, {0.41})},
            {"a", 1.0},
            {"T", 2.0},
            {"tol", 1e-11}};
  std::string names;
  for (const auto& n : scenario_catalog()) names += (names.empty() ? "" : ", ") + n;
  invalid("unknown catalog scenario '" + name + "'; available: " + names);
}

json csv_to_json(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  json out = {{"columns", json::array()}, {"rows", json::array()}};
  if (!std::getline(is, line)) return out;
  {
    std::istringstream hs(line);
    std::string col;
    while (std::getline(hs, col, ',')) out["columns"].push_back(col);
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json row = json::array();
    std::istringstream rs(line);
    std::string cell;
    while (std::getline(rs, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    out["rows"].push_back(std::move(row));
  }
  return out;
}

ScenarioOutcome run_scenario(const Scenario& sc) {
  ScenarioOutcome out;
  auto limits = default_limits(sc.kind, sc.tol);
  for (const auto& [k, v] : sc.limits) limits[k] = v;
  const json& doc = sc.doc;
  const double floor = doc.value("curvature_floor", 1e-3);
  OdeOptions ode;
  ode.atol = ode.rtol = sc.tol;
  GeodesicOptions gopts;
  gopts.ode = ode;
  gopts.curvature_floor = floor;

  json details = json::object();
  std::ostringstream table;
  std::string failure;
  auto check = [&](const std::string& key, double value) {
    out.invariants[key] = {value, limits.at(key)};
  };

  try {
    switch (sc.kind) {
      case ScenarioKind::verify_lift: {
        const auto s = lift_setup(doc);
        const auto rep = verify_projection(s.tb, s.H, s.p0, sc.T, sc.tol);
        check("sup_error_lambda", rep.sup_error_lambda);
        check("sup_error_beta", rep.sup_error_beta);
        check("sup_error_lift", rep.sup_error_lift);
        details = {{"testbed", rep.testbed},
                   {"hamiltonian", rep.hamiltonian},
                   {"energy_drift_lifted", rep.energy_drift_lifted},
                   {"energy_drift_projected", rep.energy_drift_projected}};
        if (!rep.note.empty()) details["note"] = rep.note;
        out.truncated = rep.truncated;
        const auto flow = lifted_hamiltonian_flow(s.tb, s.H, s.p0, sc.T, ode);
        table << "t";
        for (int i = 0; i < s.tb.n; ++i) table << ",x" << i;
        for (int i = 0; i < s.tb.nu; ++i) table << ",y" << i;
        for (int i = 0; i < s.tb.n; ++i) table << ",a" << i;
        for (int i = 0; i < s.tb.nu; ++i) table << ",b" << i;
        table << ",energy\n" << std::setprecision(17);
        for (std::size_t k = 0; k < flow.canonical.size(); ++k) {
          const auto c = flow.node(k);
          table << flow.canonical.t[k];
          for (int i = 0; i < s.tb.n; ++i) table << ',' << c.x(i);
          for (int i = 0; i < s.tb.nu; ++i) table << ',' << c.y(i);
          for (int i = 0; i < s.tb.n; ++i) table << ',' << c.a(i);
          for (int i = 0; i < s.tb.nu; ++i) table << ',' << c.b(i);
          table << ',' << s.H.value(c.x, c.a) << '\n';
        }
        break;
      }
      case ScenarioKind::develop: {
        const auto cfg = configuration(doc, "configuration");
        const auto curve = develop_curve(doc, cfg.x, sc.T);
        const auto path = develop(cfg, curve, ode);
        out.truncated = path.traj.truncated;
        const auto st = noslip_notwist_residual(path);
        double defect = 0.0;
        for (std::size_t k = 0; k < path.traj.size(); ++k) {
          const auto c = path.config(k);
          defect = std::max({defect, frame_defect(*c.M, c.x, c.f), frame_defect(*c.Mhat, c.xhat, c.fhat)});
        }
        check("slip", st.slip);
        check("twist", st.twist);
        check("frame_defect", defect);
        const int n = cfg.dim();
        const auto xh = [&](double t) { return Vec(path.traj.at(t).segment(n, n)); };
        details = {{"trace_length", path_length(*cfg.Mhat, xh, path.traj.t_begin(), path.traj.t_end())},
                   {"final", to_json(path.config(path.traj.size() - 1))}};
        write_path_csv(table, path, st);
        break;
      }
      case ScenarioKind::geodesic: {
        const auto s0 = geodesic_initial(doc);
        const auto run = integrate_geodesic(s0, sc.T, gopts);
        out.truncated = run.traj.truncated;
        const auto m = geodesic_monitors(run);
        check("speed_drift", m.speed_drift);
        check("frame_defect", m.frame_defect);
        check("covariant", m.covariant_residual);
        check("vtilde", vtilde_symmetry_check(run).max());
        if (run.dim() == 2 && run.Mhat->label().rfind("euclidean(", 0) == 0)
          check("charge", charge_monitor(run).max_error);
        details = {{"slip", m.slip}, {"twist", m.twist}, {"rho_singular", m.rho_singular},
                   {"nodes", run.traj.size()}};
        write_geodesic_csv(table, run);
        break;
      }
      case ScenarioKind::pendulum_2d: {
        const auto p0 = pendulum_initial(doc, floor);
        const auto red = reduce_2d(p0, sc.T, gopts);
        const auto full = integrate_geodesic(to_geodesic_state(p0), sc.T, gopts);
        out.truncated = red.traj.truncated || full.traj.truncated;
        const auto c = fit_pendulum_constants(p0);
        if (red.rho_singular) {
          failure = "curvature gap fell below the floor along the run; pendulum form unavailable";
        } else {
          check("pendulum", pendulum_residual(red, c));
        }
        check("closed_form_b", closed_form_b(red, c).max_error);
        check("reduction", reduction_discrepancy(red, full));
        check("speed_drift", geodesic_monitors(full).speed_drift);
        details = {{"A", c.A}, {"phi0", c.phi0}, {"rho_singular", red.rho_singular}};
        write_geodesic_csv(table, full, red.rho_singular ? nullptr : &red, &c);
        break;
      }
      case ScenarioKind::rn_roll: {
        const auto s0 = geodesic_initial(doc);
        if (s0.cfg.Mhat->label().rfind("euclidean(", 0) != 0) invalid("rn-roll needs a euclidean target chart");
        const auto rn = rn_rolling_flow(s0, sc.T, ode);
        const auto gen = integrate_geodesic(s0, sc.T, gopts);
        out.truncated = rn.form_a.truncated || rn.form_b.truncated || gen.traj.truncated;
        const auto ag = rn_agreement(rn, gen);
        check("a_vs_b", ag.a_vs_b);
        check("a_vs_general", ag.a_vs_general);
        check("b_vs_general", ag.b_vs_general);
        const int n = s0.cfg.dim();
        table << "t";
        for (const char* p : {"xa", "xb", "x", "xhat_b", "xhat"})
          for (int i = 0; i < n; ++i) table << ',' << p << i;
        table << '\n' << std::setprecision(17);
        const double t_end = std::min({gen.traj.t_end(), rn.form_a.t_end(), rn.form_b.t_end()});
        for (std::size_t k = 0; k < gen.traj.size() && gen.traj.t[k] <= t_end; ++k) {
          const double t = gen.traj.t[k];
          const Vec& g = gen.traj.y[k];
          const Vec xa = rn.x_a(t), xb = rn.x_b(t), xhb = rn.xhat_b(t);
          table << t;
          for (int i = 0; i < n; ++i) table << ',' << xa(i);
          for (int i = 0; i < n; ++i) table << ',' << xb(i);
          for (int i = 0; i < n; ++i) table << ',' << g(i);
          for (int i = 0; i < n; ++i) table << ',' << xhb(i);
          for (int i = 0; i < n; ++i) table << ',' << g(n + i);
          table << '\n';
        }
        break;
      }
      case ScenarioKind::bvp: {
        const auto prob = bvp_problem(doc, sc.T, sc.tol, sc.seed);
        const auto res = solve(prob);
        check("residual", res.residual);
        limits["covariant"] = std::max(limits.at("covariant"), 100 * prob.controls.ode.atol);
        if (res.run) {
          out.truncated = res.run->traj.truncated;
          check("covariant", covariant_residual(*res.run));
          write_geodesic_csv(table, *res.run);
        } else {
          failure = "every shot left the chart";
        }
        details = to_json(res);
        details["problem"] = to_json(prob);
        break;
      }
    }
  } catch (const ScenarioError&) {
    throw;
  } catch (const std::exception& e) {
    failure = e.what();
  }

  out.table_csv = table.str();
  bool all_pass = failure.empty() && !out.truncated;
  json inv = json::object();
  for (const auto& [k, c] : out.invariants) {
    inv[k] = {{"value", c.value}, {"limit", c.limit}, {"pass", c.pass()}};
    all_pass = all_pass && c.pass();
  }
  json tolerances = {{"ode", sc.tol}, {"limits", limits}};
  out.exit_code = all_pass ? kExitOk : kExitNumerical;
  out.summary = {{"version", UPSTAIRS_VERSION},
                 {"scenario", sc.name},
                 {"kind", to_string(sc.kind)},
                 {"hash", hex64(scenario_hash(sc.doc))},
                 {"seed", sc.seed},
                 {"T", sc.T},
                 {"tolerances", tolerances},
                 {"invariants", inv},
                 {"truncated", out.truncated},
                 {"status", all_pass ? "ok" : "failed"},
                 {"details", details},
                 {"document", sc.doc}};
  if (!failure.empty()) out.summary["error"] = failure;
  return out;
}

std::vector<std::string> write_outcome(const ScenarioOutcome& out, const std::string& dir, const std::string& stem,
                                       const std::string& format) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<std::string> written;
  const fs::path base = fs::path(dir) / stem;
  if (format == "json") {
    const auto p = base.string() + ".trajectory.json";
    std::ofstream(p) << csv_to_json(out.table_csv).dump(1) << '\n';
    written.push_back(p);
  } else {
    const auto p = base.string() + ".csv";
    std::ofstream(p) << out.table_csv;
    written.push_back(p);
  }
  const auto final_path = base.string() + ".summary.json";
  const auto tmp = final_path + ".tmp";
  {
    std::ofstream os(tmp);
    os << std::setprecision(17) << out.summary.dump(2) << '\n';
    if (!os) throw std::runtime_error("cannot write " + tmp);
  }
  fs::rename(tmp, final_path);
  written.push_back(final_path);
  return written;
}

}  // namespace upstairs
