#include "bayescal/kernels.hpp"

#include <vector>

#if defined(__x86_64__) || defined(_M_X64)
#define BAYESCAL_HAVE_AVX2 1
#include <immintrin.h>
#else
#define BAYESCAL_HAVE_AVX2 0
#endif

namespace bayescal::kernels {

#if BAYESCAL_HAVE_AVX2
namespace {

#define BAYESCAL_AVX2 __attribute__((target("avx2,fma")))

BAYESCAL_AVX2 inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

BAYESCAL_AVX2 double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

BAYESCAL_AVX2 void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256d y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        __m256d y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4));
        _mm256_storeu_pd(y + i, y0);
        _mm256_storeu_pd(y + i + 4, y1);
    }
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

// Lane mask for the last r < 4 columns of a row.
BAYESCAL_AVX2 inline __m256i tail_mask(std::size_t r) {
    return _mm256_setr_epi64x(r > 0 ? -1 : 0, r > 1 ? -1 : 0, r > 2 ? -1 : 0, 0);
}

// C[n x m] += A[n x k] * B[k x m]; accumulators for up to 8 columns of one
// row stay in registers across the k loop.
BAYESCAL_AVX2 void gemm_nn_avx2(const double* a, const double* b, double* c,
                                std::size_t n, std::size_t k, std::size_t m) {
    const std::size_t r = m % 4;
    const __m256i mask = tail_mask(r);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * m;
        std::size_t j = 0;
        for (; j + 8 <= m; j += 8) {
            __m256d c0 = _mm256_loadu_pd(ci + j);
            __m256d c1 = _mm256_loadu_pd(ci + j + 4);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d va = _mm256_broadcast_sd(ai + p);
                c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b + p * m + j), c0);
                c1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(b + p * m + j + 4), c1);
            }
            _mm256_storeu_pd(ci + j, c0);
            _mm256_storeu_pd(ci + j + 4, c1);
        }
        for (; j + 4 <= m; j += 4) {
            __m256d c0 = _mm256_loadu_pd(ci + j);
            for (std::size_t p = 0; p < k; ++p)
                c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(ai + p), _mm256_loadu_pd(b + p * m + j), c0);
            _mm256_storeu_pd(ci + j, c0);
        }
        if (r != 0) {
            __m256d c0 = _mm256_maskload_pd(ci + j, mask);
            for (std::size_t p = 0; p < k; ++p)
                c0 = _mm256_fmadd_pd(_mm256_broadcast_sd(ai + p), _mm256_maskload_pd(b + p * m + j, mask), c0);
            _mm256_maskstore_pd(ci + j, mask, c0);
        }
    }
}

// PB rows of C (C[p..p+PB) x [j..j+4)) accumulated over all n samples.
template <int PB>
BAYESCAL_AVX2 inline void tn_block(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                                   std::size_t m, std::size_t p, std::size_t j, __m256i mask, bool full) {
    __m256d acc[PB];
    for (int q = 0; q < PB; ++q)
        acc[q] = full ? _mm256_loadu_pd(c + (p + q) * m + j) : _mm256_maskload_pd(c + (p + q) * m + j, mask);
    for (std::size_t i = 0; i < n; ++i) {
        const __m256d vb = full ? _mm256_loadu_pd(b + i * m + j) : _mm256_maskload_pd(b + i * m + j, mask);
        const double* ai = a + i * k + p;
        for (int q = 0; q < PB; ++q) acc[q] = _mm256_fmadd_pd(_mm256_broadcast_sd(ai + q), vb, acc[q]);
    }
    for (int q = 0; q < PB; ++q) {
        if (full)
            _mm256_storeu_pd(c + (p + q) * m + j, acc[q]);
        else
            _mm256_maskstore_pd(c + (p + q) * m + j, mask, acc[q]);
    }
}

// C[k x m] += A^T B with A n x k, B n x m.
BAYESCAL_AVX2 void gemm_tn_avx2(const double* a, const double* b, double* c,
                                std::size_t n, std::size_t k, std::size_t m) {
    const __m256i mask = tail_mask(m % 4);
    for (std::size_t j = 0; j < m; j += 4) {
        const bool full = j + 4 <= m;
        std::size_t p = 0;
        for (; p + 4 <= k; p += 4) tn_block<4>(a, b, c, n, k, m, p, j, mask, full);
        switch (k - p) {
            case 3: tn_block<3>(a, b, c, n, k, m, p, j, mask, full); break;
            case 2: tn_block<2>(a, b, c, n, k, m, p, j, mask, full); break;
            case 1: tn_block<1>(a, b, c, n, k, m, p, j, mask, full); break;
            default: break;
        }
    }
}

// C[n x k] += A[n x m] B^T with B k x m: transpose B once, then the nn kernel.
BAYESCAL_AVX2 void gemm_nt_avx2(const double* a, const double* b, double* c,
                                std::size_t n, std::size_t m, std::size_t k) {
    if (m >= 16) {
        for (std::size_t i = 0; i < n; ++i) {
            const double* ai = a + i * m;
            for (std::size_t p = 0; p < k; ++p) c[i * k + p] += dot_avx2(ai, b + p * m, m);
        }
        return;
    }
    thread_local std::vector<double> bt;
    bt.resize(m * k);
    for (std::size_t p = 0; p < k; ++p)
        for (std::size_t q = 0; q < m; ++q) bt[q * k + p] = b[p * m + q];
    gemm_nn_avx2(a, bt.data(), c, n, m, k);
}

constexpr KernelTable kAvx2{
    "avx2", dot_avx2, axpy_avx2, gemm_nn_avx2, gemm_tn_avx2, gemm_nt_avx2,
};

}  // namespace

const KernelTable* avx2_table() {
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &kAvx2 : nullptr;
}

#else

const KernelTable* avx2_table() { return nullptr; }

#endif

}  // namespace bayescal::kernels
