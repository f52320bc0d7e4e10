#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lazydit {

class Prng;

using Vec = std::vector<double>;

// Dense row-major matrix of doubles.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<double> data);
  Mat(std::initializer_list<std::initializer_list<double>> rows);

  static Mat identity(std::size_t n);
  static Mat diagonal(std::span<const double> diag);
  static Mat row_vector(std::span<const double> v);
  static Mat column_vector(std::span<const double> v);
  static Mat random_uniform(std::size_t rows, std::size_t cols, double lo, double hi, Prng& rng);
  static Mat random_normal(std::size_t rows, std::size_t cols, Prng& rng, double stddev = 1.0);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::string shape_string() const;

  // Bitwise-equal shapes and entries.
  friend bool operator==(const Mat& a, const Mat& b) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// C = A * B with a fixed accumulation order (ascending inner index).
Mat matmul(const Mat& a, const Mat& b);
// A^T * B without materializing the transpose.
Mat matmul_tn(const Mat& a, const Mat& b);
// A * B^T without materializing the transpose.
Mat matmul_nt(const Mat& a, const Mat& b);
// y = W x for a square or rectangular W.
Vec matvec(const Mat& w, std::span<const double> x);
Mat transpose(const Mat& a);

Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat scale(const Mat& a, double c);
Mat hadamard(const Mat& a, const Mat& b);
// a + c * b.
Mat axpy(const Mat& a, double c, const Mat& b);

double sigmoid(double x);
double silu(double x);
Mat sigmoid(const Mat& a);
Mat silu(const Mat& a);
Vec silu(std::span<const double> v);
Vec add(std::span<const double> a, std::span<const double> b);
Vec hadamard(std::span<const double> a, std::span<const double> b);

double frobenius_norm(const Mat& a);
// max |a_ij|.
double max_abs_norm(const Mat& a);
double vector_norm(std::span<const double> v);
// tr[A^T B].
double trace_inner(const Mat& a, const Mat& b);
double trace(const Mat& a);

struct PowerIterationOptions {
  double tol = 1e-10;
  int max_iters = 10'000;
};

// Largest singular value by power iteration on A^T A. Start vector is the
// normalized all-ones vector; if it lies in the null space a fixed-seed random
// vector is used instead. Throws ConvergenceError on iteration exhaustion.
double spectral_norm(const Mat& a, PowerIterationOptions opts = {});

// f(X, Y) = tr[X^T Y] / (||X||_F ||Y||_F). Throws DomainError on a zero input.
double cosine_similarity(const Mat& x, const Mat& y);

bool all_finite(const Mat& a);

}  // namespace lazydit
