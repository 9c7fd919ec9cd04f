#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference version and,
// when the build and the CPU allow it, an AVX2 version; the active table is
// picked once at startup and can be overridden with PRUNEKIT_KERNELS=scalar|avx2.
//
// Elementwise kernels (accumulate_squares, axpy, rank1_update, adamw_update)
// use no fused multiply-add and evaluate in the same operation order as the
// scalar reference, so both ISAs produce bitwise-identical results. Reductions
// (dot, weighted_sum_squares, gemv, gemv_t_accumulate) reassociate the sum and
// agree with the scalar reference to rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace prunekit::simd {

enum class Isa { Scalar, Avx2 };

struct AdamWCoeffs {
  double lr = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double bias_correction1 = 1.0;  // 1 - beta1^t
  double bias_correction2 = 1.0;  // 1 - beta2^t
};

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*weighted_sum_squares)(const double* x, const double* w, std::size_t n);
  void (*accumulate_squares)(double* acc, const double* x, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[r] = b[r] + sum_c W[r, c] x[c]   (W row-major, rows x cols; b may be null)
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x,
               const double* b, double* y);
  // out[c] += sum_r W[r, c] v[r]
  void (*gemv_t_accumulate)(const double* w, std::size_t rows, std::size_t cols,
                            const double* v, double* out);
  // W[r, c] += u[r] * v[c]
  void (*rank1_update)(double* w, std::size_t rows, std::size_t cols, const double* u,
                       const double* v);
  void (*adamw_update)(double* params, double* m, double* v, const double* grad,
                       std::size_t n, const AdamWCoeffs& c);
};

const KernelTable& scalar_table() noexcept;
/// Null when the AVX2 kernels were not compiled in or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table() noexcept;

bool isa_available(Isa isa) noexcept;
Isa active_isa() noexcept;
/// Returns false (and changes nothing) when the ISA is unavailable.
bool set_active_isa(Isa isa) noexcept;
std::string_view isa_name(Isa isa) noexcept;

const KernelTable& active() noexcept;

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double weighted_sum_squares(std::span<const double> x, std::span<const double> w) {
  return active().weighted_sum_squares(x.data(), w.data(), x.size());
}
inline void accumulate_squares(std::span<double> acc, std::span<const double> x) {
  active().accumulate_squares(acc.data(), x.data(), x.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace prunekit::simd
