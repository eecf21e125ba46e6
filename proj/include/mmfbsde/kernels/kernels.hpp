#pragma once

// Dense double-precision inner loops used by the autodiff engine.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2/FMA variant. The active table is chosen once at startup from the CPU
// feature bits; MMFBSDE_KERNELS=scalar|avx2 overrides the choice.
//
// All matrices are row-major. gemm_nn and gemm_tn accumulate each output
// element in a fixed order over the reduction index, so column j of the
// result depends only on column j of the right operand. The rollout relies
// on this to drop diverged samples without perturbing the survivors.

#include <cstddef>
#include <string_view>

namespace mmfbsde::kernels {

struct KernelTable {
    std::string_view name;

    // C[m×n] += A[m×k] · B[k×n]
    void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n,
                    const double* a, const double* b, double* c);
    // C[m×n] += A[m×k] · B[n×k]ᵀ
    void (*gemm_nt)(std::size_t m, std::size_t k, std::size_t n,
                    const double* a, const double* b, double* c);
    // C[m×n] += A[k×m]ᵀ · B[k×n]
    void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n,
                    const double* a, const double* b, double* c);
    // y += alpha · x
    void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
    // out += x ⊙ y
    void (*mul_acc)(std::size_t n, const double* x, const double* y, double* out);
    double (*dot)(std::size_t n, const double* x, const double* y);
};

const KernelTable& scalar_table();

// Null when the variant was not compiled in.
const KernelTable* avx2_table();

bool cpu_has_avx2_fma();

// The table selected for this process.
const KernelTable& active();

// Forces a table for the rest of the process; used by the equivalence tests.
void set_active(const KernelTable& table);

}  // namespace mmfbsde::kernels
