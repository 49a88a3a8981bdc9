#include "doctest.h"
#include "support.hpp"

#include <cmath>

#include "bayescal/baselines.hpp"
#include "bayescal/metrics.hpp"

using namespace bayescal;

namespace {

// Forward pass written out by hand from the documented parameter layout:
// W0 (in x out, row-major), b0, W1, b1, ...
Matrix oracle_probs(const MlpArchitecture& arch, const std::vector<double>& w, const Matrix& x) {
    std::vector<std::size_t> widths{arch.input_dim};
    for (std::size_t l = 0; l < arch.hidden_layers; ++l) widths.push_back(arch.hidden_units);
    widths.push_back(arch.output_dim);
    Matrix out(x.rows(), arch.output_dim);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        std::vector<double> h(x.row(r), x.row(r) + x.cols());
        std::size_t off = 0;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            const std::size_t in = widths[l], o = widths[l + 1];
            std::vector<double> a(o, 0.0);
            for (std::size_t j = 0; j < o; ++j) {
                long double s = w[off + in * o + j];
                for (std::size_t i = 0; i < in; ++i) s += static_cast<long double>(h[i]) * w[off + i * o + j];
                a[j] = static_cast<double>(s);
            }
            off += in * o + o;
            if (l + 2 < widths.size())
                for (double& v : a) v = std::max(v, 0.0);
            h = a;
        }
        double mx = h[0];
        for (double v : h) mx = std::max(mx, v);
        double z = 0.0;
        for (double v : h) z += std::exp(v - mx);
        for (std::size_t j = 0; j < h.size(); ++j) out(r, j) = std::exp(h[j] - mx) / z;
    }
    return out;
}

std::size_t row_argmax(const double* p, std::size_t n) { return argmax(p, n); }

}  // namespace

TEST_CASE("temperature 1 is plain softmax") {
    const auto ds = testing::random_logits(200, 5, 61);
    const auto p = apply_temperature(ds, Temperature{1.0});
    const auto q = softmax_rows(ds.inputs);
    CHECK(p == q);
}

TEST_CASE("huge temperature flattens every row") {
    const auto ds = testing::random_logits(200, 5, 62, 50.0);
    const auto p = apply_temperature(ds, Temperature{1e6});
    for (double v : p.values()) CHECK(std::abs(v - 0.2) <= 1e-3);
}

TEST_CASE("temperature scaling never changes the argmax") {
    const auto ds = testing::random_logits(10000, 6, 63, 5.0);
    for (double t : {0.01, 0.5, 1.0, 2.0, 100.0, 1e4}) {
        const auto p = apply_temperature(ds, Temperature{t});
        for (std::size_t r = 0; r < ds.size(); ++r)
            REQUIRE(row_argmax(p.row(r), 6) == row_argmax(ds.inputs.row(r), 6));
    }
    CHECK_THROWS_AS(apply_temperature(ds, Temperature{0.0}), ValidationError);
}

TEST_CASE("fit_temperature never increases validation NLL") {
    for (std::uint64_t s = 0; s < 20; ++s) {
        const auto ds = testing::random_logits(300, 4, 640 + s, 0.1 + static_cast<double>(s));
        const double t = fit_temperature(ds).value;
        CHECK(std::isfinite(t));
        CHECK(temperature_nll(ds, t) <= temperature_nll(ds, 1.0));
    }
}

TEST_CASE("fit_temperature on one-hot separable logits") {
    LogitDataset ds;
    ds.class_count = 3;
    ds.inputs.resize(30, 3);
    for (std::size_t r = 0; r < 30; ++r) {
        ds.labels.push_back(static_cast<int>(r % 3));
        ds.inputs(r, r % 3) = 5.0;
    }
    const double t = fit_temperature(ds).value;
    CHECK(std::isfinite(t));
    CHECK(t > 0.0);
    CHECK(temperature_nll(ds, t) <= temperature_nll(ds, 1.0));
}

TEST_CASE("fit_temperature still answers for a single-class set") {
    auto ds = testing::random_logits(50, 3, 65);
    std::fill(ds.labels.begin(), ds.labels.end(), 1);
    const double t = fit_temperature(ds).value;
    CHECK(std::isfinite(t));
}

TEST_CASE("MAP loss gradient matches finite differences") {
    for (const char* hidden : {"0", "1x6", "2x5"}) {
        CAPTURE(hidden);
        for (int classes : {2, 3}) {
            const auto ds = testing::random_features(40, 3, classes, 66);
            const auto arch = MlpArchitecture::parse(hidden, 3, static_cast<std::size_t>(classes));
            Rng rng(67);
            auto w = init_weights(arch, rng);
            for (double& v : w.params) v += 0.1 * rng.normal();  // nonzero biases too
            for (std::optional<double> prior : {std::optional<double>{}, std::optional<double>{2.0}}) {
                std::vector<double> grad;
                map_loss(w, ds, prior, &grad);
                const auto numeric = testing::numeric_grad(
                    [&](const std::vector<double>& x) { return map_loss(PointWeights{arch, x}, ds, prior); }, w.params);
                CHECK(testing::grad_error(grad, numeric) <= 1e-4);
            }
        }
    }
}

TEST_CASE("ML logistic model separates a separable set") {
    FeatureDataset ds;
    ds.class_count = 2;
    Rng rng(68);
    ds.inputs.resize(200, 2);
    for (std::size_t r = 0; r < 200; ++r) {
        const int y = static_cast<int>(r % 2);
        ds.labels.push_back(y);
        ds.inputs(r, 0) = (y ? 2.0 : -2.0) + 0.5 * rng.normal();
        ds.inputs(r, 1) = rng.normal();
    }
    const auto fit = train_map(ds, MlpArchitecture::parse("0", 2, 2), std::nullopt,
                               OptimConfig{50, 20, 0.05, LrSchedule::constant, 3});
    CHECK(accuracy(predict_point(fit.weights, ds), ds.labels) == 1.0);
    CHECK(fit.epoch_loss.back() < fit.epoch_loss.front());
}

TEST_CASE("a tight prior pins the weights at zero") {
    const auto ds = testing::random_features(200, 3, 3, 69);
    const auto fit = train_map(ds, MlpArchitecture::parse("1x8", 3, 3), 1e-6,
                               OptimConfig{300, 50, 5e-2, LrSchedule::linear, 4});
    double sq = 0.0;
    for (double v : fit.weights.params) sq += v * v;
    CHECK(std::sqrt(sq) < 1e-2);
}

TEST_CASE("MAP training is deterministic and its loss decreases") {
    const auto ds = testing::random_logits(300, 4, 70);
    const auto arch = MlpArchitecture::parse("1x10", 4, 4);
    const OptimConfig o{20, 50, 1e-2, LrSchedule::step, 5};
    const auto a = train_map(ds, arch, 1.0, o), b = train_map(ds, arch, 1.0, o);
    CHECK(a.weights == b.weights);
    CHECK(a.epoch_loss.back() < a.epoch_loss.front());
}

TEST_CASE("predict_point: zero weights give the uniform distribution") {
    const auto ds = testing::random_logits(20, 4, 71);
    const auto arch = MlpArchitecture::parse("1x5", 4, 4);
    const PointWeights w{arch, std::vector<double>(arch.parameter_count(), 0.0)};
    const auto p = predict_point(w, ds);
    for (double v : p.values()) CHECK(v == 0.25);
}

TEST_CASE("predict_point: identity linear map is softmax of the logits") {
    const auto ds = testing::random_logits(50, 5, 72);
    const auto arch = MlpArchitecture::parse("0", 5, 5);
    PointWeights w{arch, std::vector<double>(arch.parameter_count(), 0.0)};
    for (std::size_t i = 0; i < 5; ++i) w.params[i * 5 + i] = 1.0;
    const auto p = predict_point(w, ds), q = softmax_rows(ds.inputs);
    for (std::size_t i = 0; i < p.values().size(); ++i) CHECK(std::abs(p.values()[i] - q.values()[i]) <= 1e-15);
}

TEST_CASE("predict_point matches a hand-unrolled forward pass") {
    for (const char* hidden : {"0", "1x7", "3x4"}) {
        const auto ds = testing::random_logits(60, 4, 73);
        const auto arch = MlpArchitecture::parse(hidden, 4, 4);
        Rng rng(74);
        auto w = init_weights(arch, rng);
        for (double& v : w.params) v += 0.2 * rng.normal();
        const auto p = predict_point(w, ds), q = oracle_probs(arch, w.params, ds.inputs);
        for (std::size_t i = 0; i < p.values().size(); ++i) CHECK(std::abs(p.values()[i] - q.values()[i]) <= 1e-10);
    }
    const auto ds = testing::random_logits(5, 3, 75);
    const auto arch = MlpArchitecture::parse("0", 4, 3);
    CHECK_THROWS_AS(predict_point(PointWeights{arch, std::vector<double>(arch.parameter_count())}, ds),
                    ValidationError);
}

TEST_CASE("ensemble of one without noise is a single MAP run") {
    const auto ds = testing::random_logits(200, 3, 76);
    const auto arch = MlpArchitecture::parse("1x6", 3, 3);
    const OptimConfig o{10, 50, 1e-2, LrSchedule::constant, 8};
    const auto e = train_ensemble(ds, arch, 1, o, 0.0);
    const auto m = train_map(ds, arch, std::nullopt, o);
    CHECK(predict_ensemble(e, ds) == predict_point(m.weights, ds));
}

TEST_CASE("ensemble members differ and the mean beats the worst member") {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto all = testing::random_logits(600, 4, 770 + s);
        const auto sp = split(all, SplitSpec{0.6, 0.2, 0.2, s, false});
        const auto arch = MlpArchitecture::parse("1x8", 4, 4);
        const auto e = train_ensemble(sp.train, arch, 4, OptimConfig{15, 50, 1e-2, LrSchedule::constant, s}, 0.01);
        CHECK(!(e.members[0] == e.members[1]));
        double worst = 0.0;
        for (const auto& m : e.members) worst = std::max(worst, nll(predict_point(m, sp.test), sp.test.labels));
        CHECK(nll(predict_ensemble(e, sp.test), sp.test.labels) <= worst);
    }
}

TEST_CASE("ensemble prediction is the arithmetic mean") {
    const auto arch = MlpArchitecture::parse("0", 2, 2);
    // member one always favours class 0 heavily, member two class 1
    PointWeights a{arch, {0, 0, 0, 0, 50, -50}}, b{arch, {0, 0, 0, 0, -50, 50}};
    const auto ds = testing::random_logits(3, 2, 78);
    const auto p = predict_ensemble(Ensemble{{a, b}}, ds);
    for (double v : p.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(predict_ensemble(Ensemble{{a, a, a}}, ds) == predict_point(a, ds));

    Rng rng(79);
    const auto ds3 = testing::random_logits(40, 3, 80);
    const auto arch3 = MlpArchitecture::parse("1x4", 3, 3);
    Ensemble e;
    for (int k = 0; k < 6; ++k) e.members.push_back(init_weights(arch3, rng));
    Matrix want(40, 3);
    for (const auto& m : e.members) {
        const auto q = oracle_probs(arch3, m.params, ds3.inputs);
        for (std::size_t i = 0; i < want.values().size(); ++i) want.values()[i] += q.values()[i] / 6.0;
    }
    const auto got = predict_ensemble(e, ds3);
    for (std::size_t i = 0; i < got.values().size(); ++i) CHECK(std::abs(got.values()[i] - want.values()[i]) <= 1e-12);
    CHECK_THROWS_AS(predict_ensemble(Ensemble{}, ds3), ValidationError);
}
