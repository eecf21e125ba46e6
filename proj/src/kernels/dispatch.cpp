#include "mmfbsde/kernels/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string_view>

namespace mmfbsde::kernels {

#ifndef MMFBSDE_HAVE_AVX2
const KernelTable* avx2_table() { return nullptr; }
#endif

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

namespace {

const KernelTable* select() {
    const char* env = std::getenv("MMFBSDE_KERNELS");
    const std::string_view want = env ? env : "";
    const KernelTable* simd = cpu_has_avx2_fma() ? avx2_table() : nullptr;
    if (want == "scalar") return &scalar_table();
    if (simd) return simd;
    return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> table{select()};
    return table;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(const KernelTable& table) { slot().store(&table, std::memory_order_relaxed); }

}  // namespace mmfbsde::kernels
