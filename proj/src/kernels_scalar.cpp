#include "bayescal/kernels.hpp"

namespace bayescal::kernels {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_scalar(const double* a, const double* b, double* c,
                    std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* bp = b + p * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
        }
    }
}

void gemm_tn_scalar(const double* a, const double* b, double* c,
                    std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* bi = b + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            double* cp = c + p * m;
            for (std::size_t j = 0; j < m; ++j) cp[j] += aip * bi[j];
        }
    }
}

void gemm_nt_scalar(const double* a, const double* b, double* c,
                    std::size_t n, std::size_t m, std::size_t k) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            c[i * k + p] += dot_scalar(ai, b + p * m, m);
        }
    }
}

constexpr KernelTable kScalar{
    "scalar", dot_scalar, axpy_scalar, gemm_nn_scalar, gemm_tn_scalar, gemm_nt_scalar,
};

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

}  // namespace bayescal::kernels
