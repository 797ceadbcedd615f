#pragma once

#include <cstddef>
#include <type_traits>

#ifdef DRIVEBY_USE_CBLAS
#include <cblas.h>
#endif

namespace driveby::nn {

// C[m x n] (+)= A[m x k] * B[k x n], row-major. transA/transB flip the
// logical orientation of A/B (their stated dims are the logical ones).
// Routed through cblas when available; the fallback loop keeps the library
// dependency-free and is used for the double-precision gradcheck path when
// no LAPACK dgemm is linked.
template <typename T>
void gemm(bool transA, bool transB, int m, int n, int k, T alpha, const T* A,
          const T* B, T beta, T* C) {
    const int lda = transA ? m : k;
    const int ldb = transB ? k : n;
#ifdef DRIVEBY_USE_CBLAS
    if constexpr (std::is_same_v<T, float>) {
        cblas_sgemm(CblasRowMajor, transA ? CblasTrans : CblasNoTrans,
                    transB ? CblasTrans : CblasNoTrans, m, n, k, alpha, A, lda, B,
                    ldb, beta, C, n);
        return;
    } else if constexpr (std::is_same_v<T, double>) {
        cblas_dgemm(CblasRowMajor, transA ? CblasTrans : CblasNoTrans,
                    transB ? CblasTrans : CblasNoTrans, m, n, k, alpha, A, lda, B,
                    ldb, beta, C, n);
        return;
    }
#endif
    // i-k-j loop order keeps the inner loop contiguous in B and C
    for (int i = 0; i < m; ++i) {
        T* c = C + static_cast<std::size_t>(i) * n;
        if (beta == T(0))
            for (int j = 0; j < n; ++j) c[j] = T(0);
        else if (beta != T(1))
            for (int j = 0; j < n; ++j) c[j] *= beta;
        for (int p = 0; p < k; ++p) {
            const T a = alpha * (transA ? A[static_cast<std::size_t>(p) * m + i]
                                        : A[static_cast<std::size_t>(i) * k + p]);
            if (a == T(0)) continue;
            const T* b = transB ? nullptr : B + static_cast<std::size_t>(p) * n;
            if (transB) {
                for (int j = 0; j < n; ++j)
                    c[j] += a * B[static_cast<std::size_t>(j) * k + p];
            } else {
                for (int j = 0; j < n; ++j) c[j] += a * b[j];
            }
        }
    }
}

} // namespace driveby::nn
