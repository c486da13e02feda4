#include "regdet/nn/blas.hpp"

#ifdef REGDET_USE_CBLAS
#include <cblas.h>
#endif

namespace regdet::nn {

#ifdef REGDET_USE_CBLAS

void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
           int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c,
                ldc);
}

extern "C" void openblas_set_num_threads(int) __attribute__((weak));

void limit_blas_threads(int n) {
    if (openblas_set_num_threads) openblas_set_num_threads(n);
}

#else

void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a,
           int lda, const float* b, int ldb, float beta, float* c, int ldc) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                const float av = trans_a ? a[p * lda + i] : a[i * lda + p];
                const float bv = trans_b ? b[j * ldb + p] : b[p * ldb + j];
                acc += static_cast<double>(av) * bv;
            }
            c[i * ldc + j] = alpha * static_cast<float>(acc) + beta * c[i * ldc + j];
        }
    }
}

void limit_blas_threads(int) {}

#endif

}  // namespace regdet::nn
