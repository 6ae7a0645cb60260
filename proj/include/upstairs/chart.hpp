#pragma once

// Single-chart Riemannian manifolds.
//
// A chart holds the metric coefficients as functions of chart coordinates,
// optionally with analytic first and second partials. Missing partials fall
// back to central differences.

#include "upstairs/types.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace upstairs {

// dg[k] = d g / d x_k
using MetricGradient = std::vector<Mat>;
// d2g[k][l] = d^2 g / d x_k d x_l
using MetricHessian = std::vector<std::vector<Mat>>;

struct FiniteDifference {
  double rel_step = 1e-5;  // h = rel_step * (1 + |x|)
  bool richardson = false;
};

class ChartMetric {
 public:
  using MetricFn = std::function<Mat(const Vec&)>;
  using GradientFn = std::function<MetricGradient(const Vec&)>;
  using HessianFn = std::function<MetricHessian(const Vec&)>;
  using DomainFn = std::function<bool(const Vec&)>;

  ChartMetric(int dim, std::string label, DomainFn domain, MetricFn g, GradientFn dg = {},
              HessianFn d2g = {});

  [[nodiscard]] int dim() const noexcept { return dim_; }
  [[nodiscard]] const std::string& label() const noexcept { return label_; }
  [[nodiscard]] bool has_analytic_dg() const noexcept { return static_cast<bool>(dg_); }
  [[nodiscard]] bool has_analytic_d2g() const noexcept { return static_cast<bool>(d2g_); }

  [[nodiscard]] bool in_domain(const Vec& x) const;
  // Throws DomainError when x is outside the chart.
  void require(const Vec& x) const;

  [[nodiscard]] Mat g(const Vec& x) const;
  [[nodiscard]] MetricGradient dg(const Vec& x) const;
  [[nodiscard]] MetricHessian d2g(const Vec& x) const;

  [[nodiscard]] MetricGradient dg_fd(const Vec& x, const FiniteDifference& fd = {}) const;
  [[nodiscard]] MetricHessian d2g_fd(const Vec& x, const FiniteDifference& fd = {}) const;

  void set_finite_difference(FiniteDifference fd) { fd_ = fd; }

 private:
  int dim_;
  std::string label_;
  DomainFn domain_;
  MetricFn g_;
  GradientFn dg_;
  HessianFn d2g_;
  FiniteDifference fd_;
};

using ChartPtr = std::shared_ptr<const ChartMetric>;

/// Builds a catalog chart from a name such as "sphere(2)", "euclidean(3)",
/// "hyperbolic-disk(1)", "paraboloid(0.5)", "paraboloid(0.5,3)",
/// "revolution(torus)", "revolution(catenoid)". The label of the result is
/// the canonical form of the name.
ChartPtr make_chart(const std::string& name);

/// Names understood by make_chart, with one example argument each.
std::vector<std::string> chart_catalog();

/// Splits "name(a,b)" into "name" and {"a","b"}. Throws InputError on malformed text.
std::pair<std::string, std::vector<std::string>> parse_call(const std::string& text);

/// Central-difference gradient of a scalar function.
Vec gradient_fd(const std::function<double(const Vec&)>& f, const Vec& x, double rel_step = 1e-5);

}  // namespace upstairs
