#pragma once

#include <cstddef>

namespace regdet::nn {

// Row-major single-precision GEMM: C = alpha * op(A) * op(B) + beta * C.
// Backed by CBLAS when available, with a plain loop fallback.
void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
           int lda, const float* b, int ldb, float beta, float* c, int ldc);

// Caps BLAS-internal threading (we parallelize across batch samples instead).
void limit_blas_threads(int n);

}  // namespace regdet::nn
