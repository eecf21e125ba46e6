#include "mmfbsde/kernels/kernels.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace mmfbsde;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

// Both variants accumulate in the same order; they differ only by FMA rounding.
void close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol * (1.0 + std::abs(b[i])));
}

}  // namespace

TEST_CASE("avx2 kernels agree with the scalar reference") {
    const auto* fast = kernels::avx2_table();
    if (!fast || !kernels::cpu_has_avx2_fma()) {
        MESSAGE("avx2 variant unavailable on this machine");
        return;
    }
    const auto& ref = kernels::scalar_table();
    std::mt19937_64 rng(5);
    const std::size_t sizes[][3] = {{1, 1, 1}, {3, 5, 7}, {64, 16, 128}, {17, 33, 19}, {4, 128, 2}, {2, 3, 21}};
    for (const auto& s : sizes) {
        const std::size_t m = s[0], k = s[1], n = s[2];
        const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng), c0 = random_vec(m * n, rng);
        auto c1 = c0, c2 = c0;
        ref.gemm_nn(m, k, n, a.data(), b.data(), c1.data());
        fast->gemm_nn(m, k, n, a.data(), b.data(), c2.data());
        close(c2, c1, 1e-13 * static_cast<double>(k));

        const auto bt = random_vec(n * k, rng);
        c1 = c0;
        c2 = c0;
        ref.gemm_nt(m, k, n, a.data(), bt.data(), c1.data());
        fast->gemm_nt(m, k, n, a.data(), bt.data(), c2.data());
        close(c2, c1, 1e-13 * static_cast<double>(k));

        const auto at = random_vec(k * m, rng);
        c1 = c0;
        c2 = c0;
        ref.gemm_tn(m, k, n, at.data(), b.data(), c1.data());
        fast->gemm_tn(m, k, n, at.data(), b.data(), c2.data());
        close(c2, c1, 1e-13 * static_cast<double>(k));
    }
    for (std::size_t n : {0, 1, 3, 4, 9, 128, 131}) {
        const auto x = random_vec(n, rng), y0 = random_vec(n, rng);
        auto y1 = y0, y2 = y0;
        ref.axpy(n, 0.37, x.data(), y1.data());
        fast->axpy(n, 0.37, x.data(), y2.data());
        close(y2, y1, 1e-15);
        y1 = y0;
        y2 = y0;
        ref.mul_acc(n, x.data(), y0.data(), y1.data());
        fast->mul_acc(n, x.data(), y0.data(), y2.data());
        close(y2, y1, 1e-15);
        CHECK(std::abs(ref.dot(n, x.data(), y0.data()) - fast->dot(n, x.data(), y0.data())) <=
              1e-13 * static_cast<double>(n + 1));
    }
}

TEST_CASE("gemm_nn output columns do not depend on the batch width") {
    // Dropping diverged samples re-runs a narrower batch; the survivors must
    // reproduce their values exactly.
    std::mt19937_64 rng(11);
    std::vector<const kernels::KernelTable*> tables{&kernels::scalar_table()};
    if (kernels::avx2_table() && kernels::cpu_has_avx2_fma()) tables.push_back(kernels::avx2_table());
    for (const auto* t : tables) {
        const std::size_t m = 7, k = 9, n = 37;
        const auto a = random_vec(m * k, rng), b = random_vec(k * n, rng);
        std::vector<double> full(m * n, 0.0);
        t->gemm_nn(m, k, n, a.data(), b.data(), full.data());
        for (std::size_t width : {1, 3, 4, 5, 16, 21}) {
            std::vector<double> sub_b(k * width), sub_c(m * width, 0.0);
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < width; ++j) sub_b[p * width + j] = b[p * n + j];
            t->gemm_nn(m, k, width, a.data(), sub_b.data(), sub_c.data());
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < width; ++j) CHECK(sub_c[i * width + j] == full[i * n + j]);
        }
    }
}

TEST_CASE("the active table can be switched") {
    const auto& before = kernels::active();
    kernels::set_active(kernels::scalar_table());
    CHECK(kernels::active().name == "scalar");
    kernels::set_active(before);
    CHECK(kernels::active().name == before.name);
}
