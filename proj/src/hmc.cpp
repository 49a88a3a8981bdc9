#include "bayescal/hmc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "bayescal/rng.hpp"

namespace bayescal {

void HmcConfig::validate() const {
    require(step_size > 0.0 && std::isfinite(step_size), "HMC step size must be positive");
    require(leapfrog_steps >= 1, "HMC needs at least one leapfrog step");
    require(num_samples >= 1, "HMC num_samples must be >= 1");
    require(thinning >= 1, "HMC thinning must be >= 1");
    require(prior_variance > 0.0, "HMC prior variance must be positive");
}

LogDensity log_unnormalized_posterior(const WeightSample& w, const LabeledData& ds, double prior_variance) {
    w.validate();
    require(prior_variance > 0.0, "prior variance must be positive");
    LogDensity out;
    out.grad.assign(w.params.size(), 0.0);
    if (ds.size() > 0) {
        require(ds.dim() == w.arch.input_dim, "dataset width does not match the architecture input");
        out.value = mlp_loglik_grad(w.arch, w.params, ds.inputs, ds.labels, out.grad);
    }
    const double inv = 1.0 / prior_variance;
    double sq = 0.0;
    for (std::size_t i = 0; i < w.params.size(); ++i) {
        sq += w.params[i] * w.params[i];
        out.grad[i] -= w.params[i] * inv;
    }
    const double dim = static_cast<double>(w.params.size());
    out.value += -0.5 * sq * inv - 0.5 * dim * std::log(2.0 * M_PI * prior_variance);
    if (!std::isfinite(out.value)) throw NumericalError("log posterior is not finite");
    return out;
}

PhasePoint leapfrog(std::span<const double> position, std::span<const double> momentum, double step_size,
                    std::size_t steps, const LogDensityFn& log_density, const LogDensity* start) {
    require(step_size > 0.0, "leapfrog step size must be positive");
    require(steps >= 1, "leapfrog needs at least one step");
    require(position.size() == momentum.size(), "position and momentum sizes differ");
    PhasePoint s{{position.begin(), position.end()}, {momentum.begin(), momentum.end()}, {}};
    const std::size_t d = s.position.size();
    LogDensity cur = start ? *start : log_density(s.position);
    for (std::size_t step = 0; step < steps; ++step) {
        for (std::size_t i = 0; i < d; ++i) s.momentum[i] += 0.5 * step_size * cur.grad[i];
        for (std::size_t i = 0; i < d; ++i) s.position[i] += step_size * s.momentum[i];
        cur = log_density(s.position);
        for (std::size_t i = 0; i < d; ++i) s.momentum[i] += 0.5 * step_size * cur.grad[i];
    }
    for (std::size_t i = 0; i < d; ++i)
        if (!std::isfinite(s.position[i]) || !std::isfinite(s.momentum[i]))
            throw NumericalError("leapfrog produced a non-finite state");
    s.density = std::move(cur);
    return s;
}

ChainResult hmc_chain(const LogDensityFn& log_density, std::vector<double> initial, const HmcConfig& cfg) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, 1));
    const std::size_t d = initial.size();
    ChainResult out;
    double eps = cfg.step_size;

    std::vector<double> current = std::move(initial);
    LogDensity current_density = log_density(current);
    std::vector<double> momentum(d);
    const std::size_t total = cfg.burn_in + cfg.num_samples * cfg.thinning;
    std::size_t accepted_after_burn = 0, window_accepts = 0, window_len = 0;
    double tested_eps = 0.0;  // last step size whose window reached the acceptance floor
    constexpr std::size_t kWindow = 25;

    for (std::size_t iter = 0; iter < total; ++iter) {
        double kinetic0 = 0.0;
        for (double& p : momentum) {
            p = rng.normal();
            kinetic0 += 0.5 * p * p;
        }
        ChainRecord rec;
        rec.iter = iter;
        double proposal_logp = -INFINITY;
        PhasePoint proposal;
        try {
            proposal = leapfrog(current, momentum, eps, cfg.leapfrog_steps, log_density, &current_density);
            proposal_logp = proposal.density.value;
        } catch (const NumericalError&) {
            proposal_logp = -INFINITY;
        }
        double kinetic1 = 0.0;
        for (double p : proposal.momentum) kinetic1 += 0.5 * p * p;
        const double h0 = -current_density.value + kinetic0;
        const double h1 = std::isfinite(proposal_logp) ? -proposal_logp + kinetic1 : INFINITY;
        rec.energy_error = h1 - h0;
        const double u = rng.uniform();
        if (std::isfinite(h1) && std::log(u) < h0 - h1) {
            current = std::move(proposal.position);
            current_density = std::move(proposal.density);
            rec.accepted = true;
        }
        rec.log_post = current_density.value;
        out.diagnostics.push_back(rec);

        if (iter < cfg.burn_in) {
            window_accepts += rec.accepted ? 1 : 0;
            if (++window_len == kWindow) {
                const double rate = static_cast<double>(window_accepts) / kWindow;
                if (cfg.adapt_step_size) {
                    if (rate >= 0.65) tested_eps = eps;
                    if (rate < 0.65) eps *= 0.8;
                    else if (rate > 0.85) eps *= 1.2;
                }
                window_accepts = window_len = 0;
            }
            // an increase made by the last window has not been tried; fall back
            if (iter + 1 == cfg.burn_in && tested_eps > 0.0) eps = 0.8 * std::min(eps, tested_eps);
            continue;
        }
        accepted_after_burn += rec.accepted ? 1 : 0;
        if ((iter - cfg.burn_in + 1) % cfg.thinning == 0) out.samples.push_back(current);
    }
    out.acceptance_rate = static_cast<double>(accepted_after_burn) / static_cast<double>(total - cfg.burn_in);
    out.step_size = eps;
    if (out.acceptance_rate < 0.1)
        log_warning("HMC acceptance rate " + format_double(out.acceptance_rate) +
                    " is below 0.1; the step size is likely too large");
    return out;
}

PosteriorSamples hmc_sample(const LabeledData& ds, const MlpArchitecture& arch, const HmcConfig& cfg,
                            const PointWeights* initial) {
    cfg.validate();
    arch.validate();
    if (ds.size() > 0) {
        ds.validate();
        require(ds.dim() == arch.input_dim, "dataset width does not match the architecture input");
        require(static_cast<std::size_t>(ds.class_count) == arch.output_dim,
                "dataset class count does not match the architecture output");
    }
    std::vector<double> start;
    if (initial) {
        require(initial->arch == arch, "initial weights do not match the architecture");
        start = initial->params;
    } else {
        Rng rng(derive_seed(cfg.seed, 0));
        start = init_weights(arch, rng).params;
    }
    WeightSample probe{arch, {}};
    auto density = [&](std::span<const double> w) {
        probe.params.assign(w.begin(), w.end());
        return log_unnormalized_posterior(probe, ds, cfg.prior_variance);
    };
    ChainResult chain = hmc_chain(density, std::move(start), cfg);
    PosteriorSamples out;
    out.acceptance_rate = chain.acceptance_rate;
    out.step_size = chain.step_size;
    out.diagnostics = std::move(chain.diagnostics);
    out.samples.reserve(chain.samples.size());
    for (auto& s : chain.samples) out.samples.push_back(WeightSample{arch, std::move(s)});
    return out;
}

ProbMatrix predict_hmc(const PosteriorSamples& samples, const LabeledData& ds) {
    require(!samples.samples.empty(), "no posterior samples");
    ProbMatrix sum;
    for (const auto& w : samples.samples) {
        w.validate();
        require(ds.dim() == w.arch.input_dim, "dataset width does not match the architecture input");
        ProbMatrix p = mlp_probs(w.arch, w.params, ds.inputs);
        if (sum.empty()) {
            sum = std::move(p);
            continue;
        }
        for (std::size_t i = 0; i < p.values().size(); ++i) sum.values()[i] += p.values()[i];
    }
    const double denom = static_cast<double>(samples.samples.size());
    for (double& v : sum.values()) v /= denom;
    return sum;
}

void save_chain_csv(const std::vector<ChainRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << "iter,accept,log_post,energy_error\n";
    for (const auto& r : records)
        out << r.iter << ',' << (r.accepted ? 1 : 0) << ',' << format_double(r.log_post) << ','
            << format_double(r.energy_error) << '\n';
}

}  // namespace bayescal
