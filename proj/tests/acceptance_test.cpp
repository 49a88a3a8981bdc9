// Prints one PASS/FAIL line per acceptance criterion; exits non-zero if any fail.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "support.hpp"
#include "metric_oracle.hpp"

#include "bayescal/baselines.hpp"
#include "bayescal/bnn.hpp"
#include "bayescal/hmc.hpp"
#include "bayescal/metrics.hpp"
#include "bayescal/pipeline.hpp"

using namespace bayescal;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void expect(bool cond, const std::string& what) {
        if (!cond) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

void toy_ordering(Outcome& o) {
    ToyStudyConfig cfg;
    // chain length shortened from the 2000/2000 library default to fit the runtime budget
    cfg.hmc.burn_in = 500;
    cfg.hmc.num_samples = 500;
    const auto t0 = std::chrono::steady_clock::now();
    const auto cells = run_toy(cfg);
    const double secs = seconds_since(t0);
    int half = 0;
    for (const auto& c : cells) {
        o.detail << " p" << c.prior_variance << "/" << c.likelihood << ": hmc " << c.hmc.ece << " map " << c.map.ece
                 << ";";
        o.expect(c.hmc.ece < c.map.ece, "HMC < MAP in every cell");
        if (c.hmc.ece <= 0.5 * c.map.ece) ++half;
    }
    o.detail << " halved in " << half << "/6, " << secs << " s";
    o.expect(cells.size() == 6, "six cells");
    o.expect(half >= 4, "HMC <= 0.5x MAP in >= 4 cells");
    o.expect(secs <= 15 * 60, "runtime <= 15 min");
}

void synthetic_recalibration(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto all = synth_miscalibrated(50000, 10, 3.0, stream_seed(0, SeedStream::data));
    SplitSpec spec;
    spec.seed = stream_seed(0, SeedStream::split);
    const auto s = split(all, spec);
    MethodOptions opt;
    const auto r = run_compare(s, {Method::uncalibrated, Method::ts, Method::bnn_mfvilr}, opt);
    const double secs = seconds_since(t0);
    const double raw = r.rows[0].test.ece, ts = r.rows[1].test.ece, bnn = r.rows[2].test.ece;
    const double t = r.rows[1].temperature.value_or(0.0);
    o.detail << " uncalibrated " << raw << ", ts " << ts << " (T=" << t << "), mfvilr " << bnn << " (K="
             << r.rows[2].k.value_or(0) << "), " << secs << " s";
    for (const auto& row : r.rows) o.expect(row.ok, to_string(row.method) + " ran");
    o.expect(bnn <= 0.25 * raw, "MFVILR <= 0.25x uncalibrated");
    o.expect(ts <= 0.25 * raw, "TS <= 0.25x uncalibrated");
    o.expect(t >= 2.9 && t <= 3.1, "T in [2.9, 3.1]");
    o.expect(secs <= 10 * 60, "runtime <= 10 min");
}

void ts_invariance(Outcome& o) {
    int checked = 0;
    for (std::uint64_t d = 0; d < 20; ++d) {
        const auto ds = testing::random_logits(500 + 37 * d, 2 + static_cast<int>(d % 9), 300 + d, 0.5 + d);
        const double base = accuracy(softmax_rows(ds.inputs), ds.labels);
        for (double t : {0.01, 0.5, 1.0, 2.0, 100.0}) {
            o.expect(accuracy(apply_temperature(ds, Temperature{t}), ds.labels) == base, "accuracy unchanged");
            ++checked;
        }
    }
    o.detail << " " << checked << " dataset/temperature pairs";
}

void numerical_suite(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    double worst_grad = 0.0;

    {  // ELBO gradients, frozen noise
        const auto ds = testing::random_logits(25, 3, 92);
        const auto arch = MlpArchitecture::parse("1x10", 3, 3);
        Rng pick(93);
        VariationalParams vp{arch, std::vector<double>(arch.parameter_count()), std::vector<double>(arch.parameter_count())};
        for (double& m : vp.mu) m = 0.5 * pick.normal();
        for (double& r : vp.rho) r = inverse_softplus(0.05 + 0.6 * pick.uniform());
        for (Estimator est : {Estimator::mfvi, Estimator::mfvilr}) {
            auto f = [&](const VariationalParams& p) {
                Rng rng(1234);
                return elbo(p, ds.inputs, ds.labels, 2, 0.3, 500, est, rng).objective;
            };
            ElboGradient g;
            Rng rng(1234);
            elbo(vp, ds.inputs, ds.labels, 2, 0.3, 500, est, rng, &g);
            const auto nm = testing::numeric_grad([&](const std::vector<double>& x) { return f({arch, x, vp.rho}); }, vp.mu);
            const auto nr = testing::numeric_grad([&](const std::vector<double>& x) { return f({arch, vp.mu, x}); }, vp.rho);
            worst_grad = std::max({worst_grad, testing::grad_error(g.mu, nm), testing::grad_error(g.rho, nr)});
        }
    }
    {  // MAP loss and log posterior
        const auto ds = testing::random_features(40, 2, 3, 120);
        const auto arch = MlpArchitecture::parse("1x10", 2, 3);
        Rng rng(121);
        const auto w = init_weights(arch, rng);
        std::vector<double> g(w.params.size(), 0.0);
        map_loss(w, ds, 2.0, &g);
        const auto n1 = testing::numeric_grad(
            [&](const std::vector<double>& x) { return map_loss({arch, x}, ds, 2.0); }, w.params);
        const auto lp = log_unnormalized_posterior(w, ds, 16.0);
        const auto n2 = testing::numeric_grad(
            [&](const std::vector<double>& x) { return log_unnormalized_posterior({arch, x}, ds, 16.0).value; }, w.params);
        worst_grad = std::max({worst_grad, testing::grad_error(g, n1), testing::grad_error(lp.grad, n2)});
    }
    o.detail << " worst gradient error " << worst_grad << ";";
    o.expect(worst_grad <= 1e-4, "gradient checks");

    {  // KL closed form vs Monte Carlo
        const auto arch = MlpArchitecture::parse("0", 2, 2);
        Rng pick(81);
        int within = 0;
        for (int t = 0; t < 20; ++t) {
            VariationalParams vp{arch, std::vector<double>(6), std::vector<double>(6)};
            for (double& m : vp.mu) m = 1.5 * pick.normal();
            for (double& r : vp.rho) r = inverse_softplus(0.05 + 0.6 * pick.uniform());
            const auto sigma = vp.sigma();
            Rng rng(810 + static_cast<std::uint64_t>(t));
            const int n = 1000000;
            double sum = 0.0, sum2 = 0.0;
            for (int s = 0; s < n; ++s) {
                double lr = 0.0;
                for (std::size_t i = 0; i < 6; ++i) {
                    const double e = rng.normal(), th = vp.mu[i] + sigma[i] * e;
                    lr += -0.5 * e * e - std::log(sigma[i]) + 0.5 * th * th;
                }
                sum += lr;
                sum2 += lr * lr;
            }
            const double mean = sum / n, se = std::sqrt((sum2 / n - mean * mean) / n);
            if (std::abs(mean - kl_to_standard_normal(vp)) <= 3.0 * se) ++within;
        }
        o.detail << " KL within 3 SE in " << within << "/20;";
        o.expect(within == 20, "KL vs Monte Carlo");
    }
    {  // local reparameterization moments, single layer
        const auto arch = MlpArchitecture::parse("0", 3, 3);
        Rng pick(89);
        VariationalParams vp{arch, std::vector<double>(12), std::vector<double>(12)};
        for (double& m : vp.mu) m = 0.5 * pick.normal();
        for (double& r : vp.rho) r = inverse_softplus(0.05 + 0.6 * pick.uniform());
        const auto sigma = vp.sigma();
        const double h[3] = {0.8, -1.3, 2.1};
        std::vector<double> mean(3), var(3);
        for (std::size_t j = 0; j < 3; ++j) {
            mean[j] = vp.mu[9 + j];
            var[j] = sigma[9 + j] * sigma[9 + j];
            for (std::size_t i = 0; i < 3; ++i) {
                mean[j] += h[i] * vp.mu[i * 3 + j];
                var[j] += h[i] * h[i] * sigma[i * 3 + j] * sigma[i * 3 + j];
            }
        }
        const std::size_t n = 100000;
        Matrix rows(n, 3);
        for (std::size_t r = 0; r < n; ++r) std::copy(h, h + 3, rows.row(r));
        Rng rng(90);
        const auto out = forward_mfvilr(vp, rows, rng);
        bool ok = true;
        for (std::size_t j = 1; j < 3; ++j) {
            double s = 0.0, s2 = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                const double d = out(r, j) - out(r, 0);
                s += d;
                s2 += d * d;
            }
            const double m = s / n, v = (s2 - n * m * m) / (n - 1);
            const double want_m = mean[j] - mean[0], want_v = var[j] + var[0];
            ok = ok && std::abs(m - want_m) <= 5.0 * std::sqrt(want_v / n) &&
                 std::abs(v - want_v) <= 5.0 * want_v * std::sqrt(2.0 / (n - 1));
        }
        o.expect(ok, "local reparameterization moments");
    }
    {  // leapfrog reversibility
        auto target = [](std::span<const double> x) {
            LogDensity d;
            const double a = x[1] - 0.5 * x[0] * x[0];
            d.value = -0.5 * x[0] * x[0] - a * a;
            d.grad = {-x[0] + 2.0 * a * x[0], -2.0 * a};
            return d;
        };
        const std::vector<double> q{0.3, -1.1}, p{0.7, 0.2};
        const auto fwd = leapfrog(q, p, 0.05, 40, target);
        std::vector<double> neg = fwd.momentum;
        for (double& m : neg) m = -m;
        const auto back = leapfrog(fwd.position, neg, 0.05, 40, target);
        double err = 0.0;
        for (std::size_t i = 0; i < 2; ++i)
            err = std::max({err, std::abs(back.position[i] - q[i]), std::abs(back.momentum[i] + p[i])});
        o.detail << " leapfrog round trip " << err << ";";
        o.expect(err <= 1e-8, "leapfrog reversibility");
    }
    {  // HMC on the prior alone
        const auto arch = MlpArchitecture::parse("0", 2, 2);
        FeatureDataset empty;
        empty.class_count = 2;
        empty.inputs.resize(0, 2);
        HmcConfig cfg;
        cfg.prior_variance = 3.0;
        cfg.step_size = 0.3;
        cfg.leapfrog_steps = 10;
        cfg.burn_in = 200;
        cfg.num_samples = 5000;
        cfg.thinning = 1;
        cfg.seed = 3;
        const auto post = hmc_sample(empty, arch, cfg);
        bool ok = post.samples.size() == 5000;
        for (std::size_t i = 0; ok && i < arch.parameter_count(); ++i) {
            double m = 0.0, s = 0.0;
            for (const auto& w : post.samples) m += w.params[i];
            m /= 5000.0;
            for (const auto& w : post.samples) s += (w.params[i] - m) * (w.params[i] - m);
            s /= 4999.0;
            ok = std::abs(m) <= 4.0 * std::sqrt(cfg.prior_variance / 5000.0) && std::abs(s / cfg.prior_variance - 1.0) <= 0.1;
        }
        o.expect(ok, "HMC prior moments");
    }
    const double secs = seconds_since(t0);
    o.detail << " " << secs << " s";
    o.expect(secs <= 5 * 60, "runtime <= 5 min");
}

void metric_oracles(Outcome& o) {
    double worst = 0.0;
    for (std::uint64_t t = 0; t < 100; ++t) {
        Rng rng(500 + t);
        const std::size_t n = 1 + rng.uniform_index(400), c = 2 + rng.uniform_index(12);
        const int bins = 1 + static_cast<int>(rng.uniform_index(30));
        const auto p = testing::random_probs(n, c, rng);
        const auto y = testing::random_labels(n, static_cast<int>(c), rng);
        worst = std::max({worst, std::abs(ece(p, y, bins) - oracle::ece(p, y, bins)),
                          std::abs(accuracy(p, y) - oracle::accuracy(p, y)), std::abs(nll(p, y) - oracle::nll(p, y)),
                          std::abs(brier(p, y) - oracle::brier(p, y))});
        const double identity = std::abs(accuracy(p, y) - mean_confidence(p));
        o.expect(ece(p, y, 1) == identity, "single-bin identity holds exactly");
    }
    o.detail << " worst deviation " << worst;
    o.expect(worst <= 1e-12, "oracle agreement within 1e-12");
}

void k_selection(Outcome& o) {
    const auto all = synth_miscalibrated(4000, 10, 3.0, 109);
    const auto sp = split(all, SplitSpec{0.7, 0.15, 0.15, 1, false});
    BnnTrainConfig cfg;
    cfg.arch = MlpArchitecture::parse("0", 10, 10);
    cfg.epochs = 20;
    cfg.seed = 2;
    const auto vp = train_bnn(sp.train, cfg).params;
    const std::vector<std::size_t> grid{1, 3, 10, 30, 100, 300, 1000};
    const auto sel = select_k(vp, sp.val, grid, 77);
    double best = 1e300;
    std::size_t best_k = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double e = ece(predict_bnn(vp, sp.val.inputs, PredictiveConfig{grid[i], 77}), sp.val.labels);
        o.expect(sel.curve[i].second == e, "curve equals direct evaluation");
        if (e < best - kEceTieTolerance) best = e, best_k = grid[i];
    }
    o.detail << " chose K=" << sel.k << " (direct argmin " << best_k << ");";
    o.expect(sel.k == best_k, "argmin with smallest-K ties");

    VariationalParams frozen = vp;
    std::fill(frozen.rho.begin(), frozen.rho.end(), -1000.0);
    const auto zero = select_k(frozen, sp.val, grid, 77);
    o.detail << " zero variance chose K=" << zero.k;
    o.expect(zero.k == grid.front(), "zero variance returns the smallest K");
}

void cli_determinism(Outcome& o) {
    const auto dir = testing::scratch_dir("acceptance_cli");
    const auto data = (dir / "synth.csv").string();
    auto run = [&](const std::string& args) {
        const int code = testing::run_cli(args);
        o.expect(code == 0, "exit 0 for: " + args);
    };
    run("synth --out " + data + " --n 3000 --classes 5 --scale 3 --seed 8");
    run("split --data " + data + " --out " + (dir / "split").string() + " --seed 8");
    const auto manifest = (dir / "split" / "manifest.json").string();
    std::size_t compared = 0;
    auto same = [&](const std::filesystem::path& a, const std::filesystem::path& b) {
        const auto x = testing::read_file(a), y = testing::read_file(b);
        o.expect(!x.empty() && x == y, "identical " + a.filename().string() + " under " + a.parent_path().string());
        ++compared;
    };
    for (const char* m : {"uncalibrated", "ts", "map", "ensemble", "bnn-mfvi", "bnn-mfvilr", "hmc"}) {
        const std::string method = m;
        const std::string extra =
            method == "hmc" ? " --hidden 1x5 --hmc-samples 20 --hmc-burn-in 20 --hmc-leapfrog 5"
            : method == "ensemble" ? " --members 2 --epochs 5 --hidden 1x5"
                                   : " --epochs 10 --hidden 1x5";
        for (const char* rep : {"a", "b"}) {
            const auto out = dir / (method + "_" + rep);
            run("train --method " + method + " --manifest " + manifest + extra + " --seed 3 --out " + out.string());
            run("eval --model " + (out / "model.json").string() + " --manifest " + manifest + " --out " +
                (out / "eval").string());
        }
        same(dir / (method + "_a") / "model.json", dir / (method + "_b") / "model.json");
        same(dir / (method + "_a") / "eval" / "metrics.json", dir / (method + "_b") / "eval" / "metrics.json");
    }
    for (const char* rep : {"a", "b"})
        run("compare --method uncalibrated,ts,bnn-mfvilr,map --epochs 10 --data " + data + " --seed 5 --out " +
            (dir / (std::string("cmp_") + rep)).string());
    for (const char* m : {"uncalibrated", "ts", "bnn-mfvilr", "map"}) {
        same(dir / "cmp_a" / m / "metrics.json", dir / "cmp_b" / m / "metrics.json");
        same(dir / "cmp_a" / m / "model.json", dir / "cmp_b" / m / "model.json");
    }
    same(dir / "cmp_a" / "comparison.json", dir / "cmp_b" / "comparison.json");
    for (const char* rep : {"a", "b"})
        run("toy --epochs 3 --hmc-samples 5 --hmc-burn-in 5 --hmc-leapfrog 3 --grid-resolution 5 --seed 2 --out " +
            (dir / (std::string("toy_") + rep)).string());
    same(dir / "toy_a" / "table1.csv", dir / "toy_b" / "table1.csv");
    o.detail << " " << compared << " file pairs compared";
}

}  // namespace

int main() {
    const std::pair<const char*, std::function<void(Outcome&)>> criteria[] = {
        {"toy study: HMC beats MAP on calibration", toy_ordering},
        {"synthetic over-confidence: MFVILR and TS recalibrate", synthetic_recalibration},
        {"temperature scaling keeps accuracy", ts_invariance},
        {"numerical correctness suite", numerical_suite},
        {"metric oracles", metric_oracles},
        {"K selection", k_selection},
        {"CLI determinism", cli_determinism},
    };
    int failed = 0, n = 0;
    for (const auto& [name, fn] : criteria) {
        ++n;
        Outcome o;
        try {
            fn(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << " [exception: " << e.what() << "]";
        }
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << name << " |" << o.detail.str()
                  << std::endl;
    }
    std::cout << (failed == 0 ? "all criteria pass" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
