#pragma once

// Dense arithmetic kernels behind every MLP forward/backward pass.
//
// Each backend fills a KernelTable. The scalar table is the reference; SIMD
// tables (AVX2+FMA on x86-64, NEON on AArch64) must agree with it to rounding
// and are checked against it in tests/test_kernels.cpp. The active table is
// chosen once at first use from the CPU features, and can be forced with the
// BAYESCAL_KERNELS environment variable ("scalar", "avx2", "neon", "auto").

#include <cstddef>
#include <string_view>

namespace bayescal::kernels {

struct KernelTable {
    std::string_view name;

    /// sum_i x[i] * y[i]
    double (*dot)(const double* x, const double* y, std::size_t n);

    /// y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

    /// C[n x m] += A[n x k] * B[k x m]
    void (*gemm_nn)(const double* a, const double* b, double* c,
                    std::size_t n, std::size_t k, std::size_t m);

    /// C[k x m] += A[n x k]^T * B[n x m]
    void (*gemm_tn)(const double* a, const double* b, double* c,
                    std::size_t n, std::size_t k, std::size_t m);

    /// C[n x k] += A[n x m] * B[k x m]^T
    void (*gemm_nt)(const double* a, const double* b, double* c,
                    std::size_t n, std::size_t m, std::size_t k);
};

const KernelTable& scalar_table();

/// nullptr when the backend is not compiled in or the CPU lacks the feature.
const KernelTable* avx2_table();
const KernelTable* neon_table();

/// The table used by the library.
const KernelTable& active();

/// Force a backend by name; throws ValidationError for unknown or unsupported names.
void select(std::string_view name);

}  // namespace bayescal::kernels
