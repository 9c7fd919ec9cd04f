#include <cmath>

#include "kernels_impl.hpp"

namespace prunekit::simd::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_sum_squares_scalar(const double* x, const double* w, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += (x[i] * x[i]) * w[i];
  return s;
}

void accumulate_squares_scalar(double* acc, const double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) acc[i] += x[i] * x[i];
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const double* w, std::size_t rows, std::size_t cols, const double* x,
                 const double* b, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double d = dot_scalar(w + r * cols, x, cols);
    y[r] = b ? b[r] + d : d;
  }
}

void gemv_t_accumulate_scalar(const double* w, std::size_t rows, std::size_t cols,
                              const double* v, double* out) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(v[r], w + r * cols, out, cols);
}

void rank1_update_scalar(double* w, std::size_t rows, std::size_t cols, const double* u,
                         const double* v) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(u[r], v, w + r * cols, cols);
}

void adamw_update_scalar(double* params, double* m, double* v, const double* grad,
                         std::size_t n, const AdamWCoeffs& c) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    m[i] = c.beta1 * m[i] + one_minus_b1 * g;
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g * g);
    const double m_hat = m[i] / c.bias_correction1;
    const double v_hat = v[i] / c.bias_correction2;
    const double step = m_hat / (std::sqrt(v_hat) + c.eps) + c.weight_decay * params[i];
    params[i] = params[i] - c.lr * step;
  }
}

}  // namespace prunekit::simd::detail
