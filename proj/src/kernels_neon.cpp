#include "bayescal/kernels.hpp"

#if defined(__aarch64__)
#include <arm_neon.h>
#endif

namespace bayescal::kernels {

#if defined(__aarch64__)
namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
    }
    double s = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_neon(const double* a, const double* b, double* c,
                  std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) axpy_neon(a[i * k + p], b + p * m, c + i * m, m);
}

void gemm_tn_neon(const double* a, const double* b, double* c,
                  std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) axpy_neon(a[i * k + p], b + i * m, c + p * m, m);
}

void gemm_nt_neon(const double* a, const double* b, double* c,
                  std::size_t n, std::size_t m, std::size_t k) {
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) c[i * k + p] += dot_neon(a + i * m, b + p * m, m);
}

constexpr KernelTable kNeon{
    "neon", dot_neon, axpy_neon, gemm_nn_neon, gemm_tn_neon, gemm_nt_neon,
};

}  // namespace

const KernelTable* neon_table() { return &kNeon; }

#else

const KernelTable* neon_table() { return nullptr; }

#endif

}  // namespace bayescal::kernels
