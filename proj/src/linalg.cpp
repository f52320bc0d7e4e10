#include "lazydit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lazydit/error.hpp"
#include "lazydit/prng.hpp"

namespace lazydit {
namespace {

void require_same_shape(const char* op, const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                     b.shape_string());
  }
}

template <typename F>
Mat zip(const char* op, const Mat& a, const Mat& b, F f) {
  require_same_shape(op, a, b);
  Mat out(a.rows(), a.cols());
  auto x = a.data();
  auto y = b.data();
  auto z = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = f(x[i], y[i]);
  return out;
}

template <typename F>
Mat map(const Mat& a, F f) {
  Mat out(a.rows(), a.cols());
  auto x = a.data();
  auto z = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = f(x[i]);
  return out;
}

}  // namespace

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Mat: data length " + std::to_string(data_.size()) + " does not match " +
                     shape_string());
  }
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Mat: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::diagonal(std::span<const double> diag) {
  Mat m(diag.size(), diag.size());
  for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
  return m;
}

Mat Mat::row_vector(std::span<const double> v) {
  return Mat(1, v.size(), std::vector<double>(v.begin(), v.end()));
}

Mat Mat::column_vector(std::span<const double> v) {
  return Mat(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

Mat Mat::random_uniform(std::size_t rows, std::size_t cols, double lo, double hi, Prng& rng) {
  Mat m(rows, cols);
  for (double& x : m.data()) x = rng.uniform(lo, hi);
  return m;
}

Mat Mat::random_normal(std::size_t rows, std::size_t cols, Prng& rng, double stddev) {
  Mat m(rows, cols);
  for (double& x : m.data()) x = stddev * rng.normal();
  return m;
}

std::string Mat::shape_string() const {
  std::ostringstream os;
  os << '(' << rows_ << 'x' << cols_ << ')';
  return os.str();
}

Mat matmul(const Mat& a, const Mat& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + a.shape_string() + " x " +
                     b.shape_string());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Mat c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
      c(i, j) = acc;
    }
  }
  return c;
}

Mat matmul_tn(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: row counts differ " + a.shape_string() + "^T x " +
                     b.shape_string());
  }
  const std::size_t m = a.cols(), k = a.rows(), n = b.cols();
  Mat c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a(p, i) * b(p, j);
      c(i, j) = acc;
    }
  }
  return c;
}

Mat matmul_nt(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: column counts differ " + a.shape_string() + " x " +
                     b.shape_string() + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Mat c(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto ai = a.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto bj = b.row(j);
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c(i, j) = acc;
    }
  }
  return c;
}

Vec matvec(const Mat& w, std::span<const double> x) {
  if (w.cols() != x.size()) {
    throw ShapeError("matvec: " + w.shape_string() + " x vector[" + std::to_string(x.size()) +
                     "]");
  }
  Vec y(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    double acc = 0.0;
    for (std::size_t p = 0; p < w.cols(); ++p) acc += w(i, p) * x[p];
    y[i] = acc;
  }
  return y;
}

Mat transpose(const Mat& a) {
  Mat t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Mat add(const Mat& a, const Mat& b) {
  return zip("add", a, b, [](double x, double y) { return x + y; });
}

Mat sub(const Mat& a, const Mat& b) {
  return zip("sub", a, b, [](double x, double y) { return x - y; });
}

Mat scale(const Mat& a, double c) {
  return map(a, [c](double x) { return c * x; });
}

Mat hadamard(const Mat& a, const Mat& b) {
  return zip("hadamard", a, b, [](double x, double y) { return x * y; });
}

Mat axpy(const Mat& a, double c, const Mat& b) {
  return zip("axpy", a, b, [c](double x, double y) { return x + c * y; });
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

Mat sigmoid(const Mat& a) {
  return map(a, [](double x) { return sigmoid(x); });
}

Mat silu(const Mat& a) {
  return map(a, [](double x) { return silu(x); });
}

Vec silu(std::span<const double> v) {
  Vec out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = silu(v[i]);
  return out;
}

Vec add(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("add: vector length mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Vec hadamard(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("hadamard: vector length mismatch");
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

double frobenius_norm(const Mat& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x * x;
  return std::sqrt(acc);
}

double max_abs_norm(const Mat& a) {
  double m = 0.0;
  for (double x : a.data()) m = std::max(m, std::abs(x));
  return m;
}

double vector_norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

double trace_inner(const Mat& a, const Mat& b) {
  require_same_shape("trace_inner", a, b);
  double acc = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

double trace(const Mat& a) {
  if (a.rows() != a.cols()) throw ShapeError("trace: non-square " + a.shape_string());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) acc += a(i, i);
  return acc;
}

double spectral_norm(const Mat& a, PowerIterationOptions opts) {
  if (!(opts.tol > 0.0)) throw DomainError("spectral_norm: tol must be positive");
  const std::size_t n = a.cols();
  if (n == 0 || a.rows() == 0) return 0.0;

  // One multiplication by A^T A; returns the Rayleigh quotient v^T A^T A v.
  auto gram_apply = [&a, n](const Vec& v, Vec& out) {
    const Vec av = matvec(a, v);
    out.assign(n, 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i)
      for (std::size_t j = 0; j < n; ++j) out[j] += a(i, j) * av[i];
    double rq = 0.0;
    for (double x : av) rq += x * x;
    return rq;
  };

  Vec v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  Vec w;
  double lambda = gram_apply(v, w);
  if (lambda == 0.0) {
    Prng rng(0x5eed5eedULL);
    for (double& x : v) x = rng.normal();
    const double nv = vector_norm(v);
    for (double& x : v) x /= nv;
    lambda = gram_apply(v, w);
    if (lambda == 0.0) return 0.0;
  }

  double sigma = std::sqrt(lambda);
  for (int it = 0; it < opts.max_iters; ++it) {
    const double nw = vector_norm(w);
    if (nw == 0.0) return 0.0;
    for (std::size_t j = 0; j < n; ++j) v[j] = w[j] / nw;
    lambda = gram_apply(v, w);
    const double next = std::sqrt(lambda);
    if (std::abs(next - sigma) <= opts.tol * next) return next;
    sigma = next;
  }
  throw ConvergenceError("spectral_norm: no convergence within " +
                             std::to_string(opts.max_iters) + " iterations",
                         sigma);
}

double cosine_similarity(const Mat& x, const Mat& y) {
  require_same_shape("cosine_similarity", x, y);
  const double nx = frobenius_norm(x);
  const double ny = frobenius_norm(y);
  if (nx == 0.0 || ny == 0.0) {
    throw DomainError("cosine_similarity: undefined for a zero-norm input");
  }
  return trace_inner(x, y) / (nx * ny);
}

bool all_finite(const Mat& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double x) { return std::isfinite(x); });
}

}  // namespace lazydit
