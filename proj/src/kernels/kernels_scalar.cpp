#include "mmfbsde/kernels/kernels.hpp"

namespace mmfbsde::kernels {
namespace {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            c[i * n + j] += s;
        }
    }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n,
             const double* a, const double* b, double* c) {
    for (std::size_t p = 0; p < k; ++p) {
        const double* bp = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double api = a[p * m + i];
            double* ci = c + i * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mul_acc(std::size_t n, const double* x, const double* y, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] += x[i] * y[i];
}

double dot(std::size_t n, const double* x, const double* y) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{"scalar", gemm_nn, gemm_nt, gemm_tn, axpy, mul_acc, dot};
    return table;
}

}  // namespace mmfbsde::kernels
