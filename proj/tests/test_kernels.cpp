#include "doctest.h"
#include "support.hpp"

#include <vector>

#include "bayescal/common.hpp"
#include "bayescal/kernels.hpp"
#include "bayescal/mlp.hpp"

using namespace bayescal;
namespace k = bayescal::kernels;

namespace {

std::vector<const k::KernelTable*> simd_tables() {
    std::vector<const k::KernelTable*> out;
    if (auto* t = k::avx2_table()) out.push_back(t);
    if (auto* t = k::neon_table()) out.push_back(t);
    return out;
}

std::vector<double> randn(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

void check_close(const std::vector<double>& ref, const std::vector<double>& got, double tol) {
    REQUIRE(ref.size() == got.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::abs(ref[i] - got[i]) <= tol * (1.0 + std::abs(ref[i])));
}

const std::size_t kSizes[] = {1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 25, 33};

}  // namespace

TEST_CASE("scalar backend is always present and selectable") {
    CHECK(k::scalar_table().name == "scalar");
    k::select("scalar");
    CHECK(k::active().name == "scalar");
    k::select("auto");
    CHECK_THROWS_AS(k::select("sse9"), ValidationError);
}

TEST_CASE("dot and axpy agree with the scalar reference") {
    Rng rng(11);
    for (const auto* t : simd_tables()) {
        CAPTURE(t->name);
        for (std::size_t n = 0; n <= 40; ++n) {
            const auto x = randn(n, rng), y = randn(n, rng);
            const double ref = k::scalar_table().dot(x.data(), y.data(), n);
            const double got = t->dot(x.data(), y.data(), n);
            CHECK(std::abs(ref - got) <= 1e-12 * (1.0 + std::abs(ref)) * static_cast<double>(n + 1));

            auto y1 = y, y2 = y;
            k::scalar_table().axpy(0.37, x.data(), y1.data(), n);
            t->axpy(0.37, x.data(), y2.data(), n);
            check_close(y1, y2, 1e-14);
        }
    }
}

TEST_CASE("gemm variants agree with the scalar reference on ragged shapes") {
    Rng rng(12);
    for (const auto* t : simd_tables()) {
        CAPTURE(t->name);
        for (std::size_t n : {1, 3, 8, 13}) {
            for (std::size_t kk : kSizes) {
                for (std::size_t m : kSizes) {
                    CAPTURE(n);
                    CAPTURE(kk);
                    CAPTURE(m);
                    // nn: A n x k, B k x m, C n x m
                    const auto a = randn(n * kk, rng), b = randn(kk * m, rng), c0 = randn(n * m, rng);
                    auto c1 = c0, c2 = c0;
                    k::scalar_table().gemm_nn(a.data(), b.data(), c1.data(), n, kk, m);
                    t->gemm_nn(a.data(), b.data(), c2.data(), n, kk, m);
                    check_close(c1, c2, 1e-12);

                    // tn: A n x k, B n x m, C k x m
                    const auto bt = randn(n * m, rng), ct = randn(kk * m, rng);
                    auto d1 = ct, d2 = ct;
                    k::scalar_table().gemm_tn(a.data(), bt.data(), d1.data(), n, kk, m);
                    t->gemm_tn(a.data(), bt.data(), d2.data(), n, kk, m);
                    check_close(d1, d2, 1e-12);

                    // nt: A n x m, B k x m, C n x k
                    const auto an = randn(n * m, rng), bn = randn(kk * m, rng), cn = randn(n * kk, rng);
                    auto e1 = cn, e2 = cn;
                    k::scalar_table().gemm_nt(an.data(), bn.data(), e1.data(), n, m, kk);
                    t->gemm_nt(an.data(), bn.data(), e2.data(), n, m, kk);
                    check_close(e1, e2, 1e-12);
                }
            }
        }
    }
}

TEST_CASE("gemm matches a hand-written triple loop") {
    Rng rng(13);
    const std::size_t n = 5, kk = 6, m = 7;
    const auto a = randn(n * kk, rng), b = randn(kk * m, rng);
    std::vector<double> c(n * m, 0.0), want(n * m, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            for (std::size_t p = 0; p < kk; ++p) want[i * m + j] += a[i * kk + p] * b[p * m + j];
    k::active().gemm_nn(a.data(), b.data(), c.data(), n, kk, m);
    check_close(want, c, 1e-12);
}

TEST_CASE("MLP gradients do not depend on the backend") {
    const auto ds = testing::random_features(257, 5, 3, 14);
    const auto arch = MlpArchitecture::parse("2x9", 5, 3);
    Rng rng(15);
    const auto w = init_weights(arch, rng);
    k::select("scalar");
    std::vector<double> g_ref(w.params.size(), 0.0);
    const double ll_ref = mlp_loglik_grad(arch, w.params, ds.inputs, ds.labels, g_ref);
    for (const auto* t : simd_tables()) {
        k::select(t->name);
        std::vector<double> g(w.params.size(), 0.0);
        const double ll = mlp_loglik_grad(arch, w.params, ds.inputs, ds.labels, g);
        CHECK(ll == doctest::Approx(ll_ref).epsilon(1e-12));
        check_close(g_ref, g, 1e-10);
    }
    k::select("auto");
}
