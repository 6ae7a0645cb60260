#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace upstairs {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Evaluation requested at a point outside a chart's domain.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Degenerate geometric input: singular metric, degenerate frame, mismatched points.
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed user input (catalog names, scenario fields, dimensions).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense rank-3 array, index (a, b, c), row-major in the last index.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(int n) : n_(n), data_(static_cast<std::size_t>(n * n * n), 0.0) {}

  [[nodiscard]] int dim() const noexcept { return n_; }
  double& operator()(int a, int b, int c) { return data_[index(a, b, c)]; }
  double operator()(int a, int b, int c) const { return data_[index(a, b, c)]; }

  [[nodiscard]] double max_abs() const;

 private:
  [[nodiscard]] std::size_t index(int a, int b, int c) const {
    return static_cast<std::size_t>((a * n_ + b) * n_ + c);
  }
  int n_ = 0;
  std::vector<double> data_;
};

// Dense rank-4 array, index (a, b, c, d).
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(int n) : n_(n), data_(static_cast<std::size_t>(n * n * n * n), 0.0) {}

  [[nodiscard]] int dim() const noexcept { return n_; }
  double& operator()(int a, int b, int c, int d) { return data_[index(a, b, c, d)]; }
  double operator()(int a, int b, int c, int d) const { return data_[index(a, b, c, d)]; }

  [[nodiscard]] double max_abs() const;

 private:
  [[nodiscard]] std::size_t index(int a, int b, int c, int d) const {
    return static_cast<std::size_t>(((a * n_ + b) * n_ + c) * n_ + d);
  }
  int n_ = 0;
  std::vector<double> data_;
};

inline double Tensor3::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

inline double Tensor4::max_abs() const {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

/// so(n) inner product <A, B> = tr(A^T B) / 2.
inline double so_inner(const Mat& a, const Mat& b) { return 0.5 * (a.array() * b.array()).sum(); }

/// Number of strictly-upper entries of an n x n skew matrix.
constexpr int skew_dim(int n) { return n * (n - 1) / 2; }

/// Skew matrix from its strictly-upper entries, ordered (0,1), (0,2), ..., (1,2), ...
inline Mat skew_from_upper(const Eigen::Ref<const Vec>& upper, int n) {
  Mat s = Mat::Zero(n, n);
  int k = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      s(i, j) = upper(k);
      s(j, i) = -upper(k);
      ++k;
    }
  }
  return s;
}

inline Vec upper_of_skew(const Mat& s) {
  const auto n = static_cast<int>(s.rows());
  Vec out(skew_dim(n));
  int k = 0;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out(k++) = s(i, j);
  return out;
}

/// 2D rotation by angle a.
inline Mat rotation2(double a) {
  Mat r(2, 2);
  r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  return r;
}

}  // namespace upstairs
