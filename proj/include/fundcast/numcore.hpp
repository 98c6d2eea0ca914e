#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fundcast/errors.hpp"

namespace fundcast {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Double precision throughout: the
/// finite-difference gradient oracle needs it.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;  // row-major, rows*cols entries

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// y = A x
Vector matvec(const Matrix& a, const Vector& x);
/// y = A^T x (used by backward passes; avoids materializing transposes)
Vector matvec_transposed(const Matrix& a, const Vector& x);
/// acc += y x^T
void add_outer(Matrix& acc, const Vector& y, const Vector& x);
/// acc += v (elementwise)
void add_to(Vector& acc, const Vector& v);

enum class Activation { Sigmoid, Tanh, Relu, Identity };

double sigmoid(double x);
Vector apply_activation(Activation kind, const Vector& v);
double apply_activation(Activation kind, double x);
/// Derivative expressed through the activation output (all supported kinds
/// admit that form).
double activation_grad_from_output(Activation kind, double out);

bool all_finite(std::span<const double> values);

/// Deterministic splittable counter-based generator. Same seed, same stream,
/// on every platform; split() derives an independent stream so parallel or
/// per-purpose consumers never perturb each other's sequences.
struct Rng {
  explicit Rng(std::uint64_t seed) : key_(scramble(seed)) {}

  std::uint64_t next_u64();
  /// [0, 1)
  double uniform();
  double uniform(double lo, double hi);
  /// [0, n)
  std::uint64_t uniform_int(std::uint64_t n);
  /// standard normal (Box-Muller; fully deterministic, no cached spare)
  double normal();
  double normal(double mean, double stddev);
  /// exp(normal(log_mean_adjusted, sigma)) with E[X] = mean
  double lognormal_with_mean(double mean, double sigma);
  /// true with probability p
  bool bernoulli(double p);

  Rng split(std::uint64_t tag) const;

  std::uint64_t key() const { return key_; }

 private:
  static std::uint64_t scramble(std::uint64_t z);
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Central finite differences (f(x+h e_i) - f(x-h e_i)) / 2h, the correctness
/// oracle for every analytic gradient in this project.
Vector finite_diff_gradient(const std::function<double(const Vector&)>& f,
                            const Vector& theta, double step);

/// |a-b| / max(1, |a|, |b|): relative for large values, absolute near zero
/// where central differences bottom out at ~1e-10 anyway.
double gradient_rel_error(double analytic, double numeric);

}  // namespace fundcast
