#pragma once

#include "prunekit/simd.hpp"

namespace prunekit::simd::detail {

double dot_scalar(const double* a, const double* b, std::size_t n);
double weighted_sum_squares_scalar(const double* x, const double* w, std::size_t n);
void accumulate_squares_scalar(double* acc, const double* x, std::size_t n);
void axpy_scalar(double alpha, const double* x, double* y, std::size_t n);
void gemv_scalar(const double* w, std::size_t rows, std::size_t cols, const double* x,
                 const double* b, double* y);
void gemv_t_accumulate_scalar(const double* w, std::size_t rows, std::size_t cols,
                              const double* v, double* out);
void rank1_update_scalar(double* w, std::size_t rows, std::size_t cols, const double* u,
                         const double* v);
void adamw_update_scalar(double* params, double* m, double* v, const double* grad,
                         std::size_t n, const AdamWCoeffs& c);

#if defined(PRUNEKIT_HAVE_AVX2)
double dot_avx2(const double* a, const double* b, std::size_t n);
double weighted_sum_squares_avx2(const double* x, const double* w, std::size_t n);
void accumulate_squares_avx2(double* acc, const double* x, std::size_t n);
void axpy_avx2(double alpha, const double* x, double* y, std::size_t n);
void gemv_avx2(const double* w, std::size_t rows, std::size_t cols, const double* x,
               const double* b, double* y);
void gemv_t_accumulate_avx2(const double* w, std::size_t rows, std::size_t cols,
                            const double* v, double* out);
void rank1_update_avx2(double* w, std::size_t rows, std::size_t cols, const double* u,
                       const double* v);
void adamw_update_avx2(double* params, double* m, double* v, const double* grad,
                       std::size_t n, const AdamWCoeffs& c);
#endif

}  // namespace prunekit::simd::detail
