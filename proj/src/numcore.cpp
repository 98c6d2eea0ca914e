#include "fundcast/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fundcast {

namespace {

std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.rows, a.cols) +
                     " * " + shape_str(b.rows, b.cols));
  }
  Matrix out(a.rows, b.cols, 0.0);
  // ikj order keeps both b and out row accesses contiguous
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    double* orow = out.data.data() + i * out.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      if (aik == 0.0) continue;
      const double* brow = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols != x.size()) {
    throw ShapeError("matvec: matrix " + shape_str(a.rows, a.cols) +
                     " with vector of length " + std::to_string(x.size()));
  }
  Vector y(a.rows, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) acc += arow[j] * x[j];
    y[i] = acc;
  }
  return y;
}

Vector matvec_transposed(const Matrix& a, const Vector& x) {
  if (a.rows != x.size()) {
    throw ShapeError("matvec_transposed: matrix " + shape_str(a.rows, a.cols) +
                     " with vector of length " + std::to_string(x.size()));
  }
  Vector y(a.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.data.data() + i * a.cols;
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (std::size_t j = 0; j < a.cols; ++j) y[j] += arow[j] * xi;
  }
  return y;
}

void add_outer(Matrix& acc, const Vector& y, const Vector& x) {
  if (acc.rows != y.size() || acc.cols != x.size()) {
    throw ShapeError("add_outer: accumulator " + shape_str(acc.rows, acc.cols) +
                     " with outer product " + shape_str(y.size(), x.size()));
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    double* arow = acc.data.data() + i * acc.cols;
    const double yi = y[i];
    if (yi == 0.0) continue;
    for (std::size_t j = 0; j < x.size(); ++j) arow[j] += yi * x[j];
  }
}

void add_to(Vector& acc, const Vector& v) {
  if (acc.size() != v.size()) {
    throw ShapeError("add_to: lengths " + std::to_string(acc.size()) + " vs " +
                     std::to_string(v.size()));
  }
  for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
}

double sigmoid(double x) {
  // branch keeps exp() argument non-positive so neither side overflows
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double apply_activation(Activation kind, double x) {
  switch (kind) {
    case Activation::Sigmoid: return sigmoid(x);
    case Activation::Tanh: return std::tanh(x);
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Identity: return x;
  }
  return x;
}

Vector apply_activation(Activation kind, const Vector& v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = apply_activation(kind, v[i]);
  return out;
}

double activation_grad_from_output(Activation kind, double out) {
  switch (kind) {
    case Activation::Sigmoid: return out * (1.0 - out);
    case Activation::Tanh: return 1.0 - out * out;
    case Activation::Relu: return out > 0.0 ? 1.0 : 0.0;
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(),
                     [](double v) { return std::isfinite(v); });
}

std::uint64_t Rng::scramble(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return scramble(key_ + 0x9E3779B97F4A7C15ULL * counter_);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  // Lemire multiply-shift; bias is O(n / 2^64), irrelevant here
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
}

double Rng::normal() {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(2.0 * 3.14159265358979323846 * u2);
}

double Rng::normal(double mean, double stddev) { return mean + stddev * normal(); }

double Rng::lognormal_with_mean(double mean, double sigma) {
  const double mu = std::log(mean) - 0.5 * sigma * sigma;
  return std::exp(mu + sigma * normal());
}

bool Rng::bernoulli(double p) { return uniform() < p; }

Rng Rng::split(std::uint64_t tag) const {
  Rng child(0);
  child.key_ = scramble(key_ ^ scramble(tag ^ 0xA0761D6478BD642FULL));
  return child;
}

Vector finite_diff_gradient(const std::function<double(const Vector&)>& f,
                            const Vector& theta, double step) {
  if (step <= 0.0) throw UsageError("finite_diff_gradient: step must be positive");
  Vector grad(theta.size(), 0.0);
  Vector probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe[i] = theta[i] + step;
    const double fp = f(probe);
    probe[i] = theta[i] - step;
    const double fm = f(probe);
    probe[i] = theta[i];
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_gradient: non-finite evaluation at index " +
                         std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * step);
  }
  return grad;
}

double gradient_rel_error(double analytic, double numeric) {
  const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace fundcast
