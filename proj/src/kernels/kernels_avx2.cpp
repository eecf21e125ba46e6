// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "mmfbsde/kernels/kernels.hpp"

#include <cmath>
#include <immintrin.h>

namespace mmfbsde::kernels {
namespace {

// Vectorized over output columns. Tail columns use std::fma so that every
// element sees the same rounding as a vector lane.
void gemm_nn(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c) {
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        std::size_t j = 0;
        for (; j + 16 <= n; j += 16) {
            __m256d c0 = _mm256_loadu_pd(ci + j);
            __m256d c1 = _mm256_loadu_pd(ci + j + 4);
            __m256d c2 = _mm256_loadu_pd(ci + j + 8);
            __m256d c3 = _mm256_loadu_pd(ci + j + 12);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d av = _mm256_set1_pd(a[i * k + p]);
                const double* bp = b + p * n + j;
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp), c0);
                c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 4), c1);
                c2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 8), c2);
                c3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 12), c3);
            }
            _mm256_storeu_pd(ci + j, c0);
            _mm256_storeu_pd(ci + j + 4, c1);
            _mm256_storeu_pd(ci + j + 8, c2);
            _mm256_storeu_pd(ci + j + 12, c3);
        }
        for (; j < n4; j += 4) {
            __m256d c0 = _mm256_loadu_pd(ci + j);
            for (std::size_t p = 0; p < k; ++p) {
                c0 = _mm256_fmadd_pd(_mm256_set1_pd(a[i * k + p]),
                                     _mm256_loadu_pd(b + p * n + j), c0);
            }
            _mm256_storeu_pd(ci + j, c0);
        }
        for (; j < n; ++j) {
            double s = ci[j];
            for (std::size_t p = 0; p < k; ++p) s = std::fma(a[i * k + p], b[p * n + j], s);
            ci[j] = s;
        }
    }
}

double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(std::size_t n, const double* x, const double* y) {
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
        s1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), s1);
    }
    for (; i + 4 <= n; i += 4) {
        s0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), s0);
    }
    double s = hsum(_mm256_add_pd(s0, s1));
    for (; i < n; ++i) s = std::fma(x[i], y[i], s);
    return s;
}

// Four outputs of a row share each load of A.
void gemm_nt(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c) {
    const std::size_t k4 = k & ~std::size_t{3};
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            const double* b0 = b + j * k;
            const double* b1 = b0 + k;
            const double* b2 = b1 + k;
            const double* b3 = b2 + k;
            __m256d s0 = _mm256_setzero_pd(), s1 = _mm256_setzero_pd();
            __m256d s2 = _mm256_setzero_pd(), s3 = _mm256_setzero_pd();
            for (std::size_t p = 0; p < k4; p += 4) {
                const __m256d av = _mm256_loadu_pd(ai + p);
                s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + p), s0);
                s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + p), s1);
                s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + p), s2);
                s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + p), s3);
            }
            double r[4] = {hsum(s0), hsum(s1), hsum(s2), hsum(s3)};
            const double* rows[4] = {b0, b1, b2, b3};
            for (int q = 0; q < 4; ++q) {
                for (std::size_t p = k4; p < k; ++p) r[q] = std::fma(ai[p], rows[q][p], r[q]);
                c[i * n + j + static_cast<std::size_t>(q)] += r[q];
            }
        }
        for (; j < n; ++j) c[i * n + j] += dot(k, ai, b + j * k);
    }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

// Same accumulation order as gemm_nn (ascending p), with A read transposed.
void gemm_tn(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c) {
    const std::size_t n4 = n & ~std::size_t{3};
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        std::size_t j = 0;
        for (; j + 16 <= n; j += 16) {
            __m256d c0 = _mm256_loadu_pd(ci + j);
            __m256d c1 = _mm256_loadu_pd(ci + j + 4);
            __m256d c2 = _mm256_loadu_pd(ci + j + 8);
            __m256d c3 = _mm256_loadu_pd(ci + j + 12);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d av = _mm256_set1_pd(a[p * m + i]);
                const double* bp = b + p * n + j;
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp), c0);
                c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 4), c1);
                c2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 8), c2);
                c3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(bp + 12), c3);
            }
            _mm256_storeu_pd(ci + j, c0);
            _mm256_storeu_pd(ci + j + 4, c1);
            _mm256_storeu_pd(ci + j + 8, c2);
            _mm256_storeu_pd(ci + j + 12, c3);
        }
        for (; j < n4; j += 4) {
            __m256d c0 = _mm256_loadu_pd(ci + j);
            for (std::size_t p = 0; p < k; ++p) {
                c0 = _mm256_fmadd_pd(_mm256_set1_pd(a[p * m + i]), _mm256_loadu_pd(b + p * n + j), c0);
            }
            _mm256_storeu_pd(ci + j, c0);
        }
        for (; j < n; ++j) {
            double s = ci[j];
            for (std::size_t p = 0; p < k; ++p) s = std::fma(a[p * m + i], b[p * n + j], s);
            ci[j] = s;
        }
    }
}

void mul_acc(std::size_t n, const double* x, const double* y, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i),
                                                  _mm256_loadu_pd(out + i)));
    }
    for (; i < n; ++i) out[i] = std::fma(x[i], y[i], out[i]);
}

}  // namespace

const KernelTable* avx2_table() {
    static const KernelTable table{"avx2", gemm_nn, gemm_nt, gemm_tn, axpy, mul_acc, dot};
    return &table;
}

}  // namespace mmfbsde::kernels
