#include "doctest.h"
#include "support.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <set>

#include "bayescal/common.hpp"
#include "bayescal/optim.hpp"
#include "bayescal/rng.hpp"
#include "bayescal/softmax.hpp"

using namespace bayescal;

TEST_CASE("rng streams are deterministic and distinct") {
    Rng a(5), b(5), c(6);
    for (int i = 0; i < 100; ++i) {
        const auto x = a.next_u64();
        CHECK(x == b.next_u64());
        CHECK(x != c.next_u64());
    }
    std::set<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 64; ++s) seeds.insert(derive_seed(42, s));
    CHECK(seeds.size() == 64);
    CHECK(derive_seed(1, 2) != derive_seed(2, 1));
}

TEST_CASE("rng uniform, index and normal draws have the right moments") {
    Rng rng(9);
    const int n = 200000;
    double su = 0.0, sn = 0.0, sn2 = 0.0;
    std::vector<int> hist(7, 0);
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        su += u;
        const double z = rng.normal();
        sn += z;
        sn2 += z * z;
        ++hist[rng.uniform_index(7)];
    }
    CHECK(std::abs(su / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
    CHECK(std::abs(sn / n) < 4.0 / std::sqrt(n));
    CHECK(std::abs(sn2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
    for (int h : hist) CHECK(std::abs(h - n / 7.0) < 4.0 * std::sqrt(n / 7.0));
}

TEST_CASE("softmax: equal logits give the uniform distribution") {
    const std::vector<double> z(6, 1.7);
    for (double p : softmax(z)) CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("softmax: shifting every logit leaves the output unchanged") {
    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        std::vector<double> z(5), zs(5);
        const double shift = 50.0 * rng.normal();
        for (std::size_t i = 0; i < z.size(); ++i) {
            z[i] = 3.0 * rng.normal();
            zs[i] = z[i] + shift;
        }
        const auto p = softmax(z), q = softmax(zs);
        for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(p[i] - q[i]) <= 1e-12);
    }
}

TEST_CASE("softmax: (1000, 0) matches extended precision without overflow") {
    const auto p = softmax(std::vector<double>{1000.0, 0.0});
    const long double e = std::exp(-1000.0L);
    const long double p0 = 1.0L / (1.0L + e), p1 = e / (1.0L + e);
    CHECK(std::isfinite(p[0]));
    CHECK(std::abs(p[0] - static_cast<double>(p0)) <= 1e-15);
    CHECK(std::abs(p[1] - static_cast<double>(p1)) <= 1e-300);
}

TEST_CASE("softmax rows sum to one for logits up to 1e4 in magnitude") {
    Rng rng(4);
    for (int t = 0; t < 1000; ++t) {
        std::vector<double> z(1 + rng.uniform_index(12));
        for (double& v : z) v = 1e4 * (2.0 * rng.uniform() - 1.0);
        double s = 0.0;
        for (double p : softmax(z)) s += p;
        CHECK(std::abs(s - 1.0) <= 1e-12);
    }
}

TEST_CASE("softmax rejects non-finite input") {
    CHECK_THROWS_AS(softmax(std::vector<double>{0.0, std::numeric_limits<double>::quiet_NaN()}), ValidationError);
    CHECK_THROWS_AS(softmax(std::vector<double>{std::numeric_limits<double>::infinity(), 0.0}), ValidationError);
}

TEST_CASE("log_softmax is the log of softmax") {
    std::vector<double> z{0.3, -2.0, 5.5, 1.0};
    auto p = softmax(z);
    log_softmax_inplace(z.data(), z.size());
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::exp(z[i]) == doctest::Approx(p[i]).epsilon(1e-14));
}

TEST_CASE("learning-rate schedules") {
    CHECK(scheduled_rate(0.1, LrSchedule::constant, 7, 10) == 0.1);
    CHECK(scheduled_rate(0.1, LrSchedule::step, 4, 10) == 0.1);
    CHECK(scheduled_rate(0.1, LrSchedule::step, 5, 10) == doctest::Approx(0.01));
    CHECK(scheduled_rate(0.1, LrSchedule::step, 8, 10) == doctest::Approx(0.001));
    CHECK(scheduled_rate(0.1, LrSchedule::linear, 0, 10) == 0.1);
    CHECK(scheduled_rate(0.1, LrSchedule::linear, 5, 10) == doctest::Approx(0.05));
    CHECK(parse_schedule("step") == LrSchedule::step);
    CHECK(parse_schedule("linear") == LrSchedule::linear);
    CHECK_THROWS_AS(parse_schedule("cosine"), ValidationError);
}

TEST_CASE("adam minimizes a quadratic") {
    std::vector<double> x{3.0, -4.0}, g(2);
    Adam adam(2);
    for (int i = 0; i < 3000; ++i) {
        g[0] = 2.0 * (x[0] - 1.0);
        g[1] = 20.0 * (x[1] + 2.0);
        adam.step(x, g, 0.01);
    }
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(x[1] == doctest::Approx(-2.0).epsilon(1e-3));
}

TEST_CASE("format_double round-trips exactly") {
    Rng rng(8);
    for (int i = 0; i < 1000; ++i) {
        const double v = std::ldexp(rng.normal(), static_cast<int>(rng.uniform_index(200)) - 100);
        const std::string s = format_double(v);
        double back = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        CHECK(back == v);
    }
}
