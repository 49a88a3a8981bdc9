#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "bayescal/data.hpp"
#include "bayescal/metrics.hpp"
#include "bayescal/mlp.hpp"

namespace bayescal {

struct HmcConfig {
    double step_size = 0.005;
    std::size_t leapfrog_steps = 30;
    std::size_t num_samples = 2000;
    std::size_t burn_in = 2000;
    std::size_t thinning = 2;
    double prior_variance = 16.0;
    std::uint64_t seed = 0;
    /// During burn-in, rescale the step size every 25 iterations toward an
    /// acceptance rate of 0.65-0.85.
    bool adapt_step_size = true;

    void validate() const;
};

struct LogDensity {
    double value = 0.0;
    std::vector<double> grad;
};

using LogDensityFn = std::function<LogDensity(std::span<const double>)>;

/// sum_i log softmax-likelihood + log N(w; 0, prior_variance I), with the
/// prior's normalizing constant included. `ds` may have zero rows.
LogDensity log_unnormalized_posterior(const WeightSample& w, const LabeledData& ds, double prior_variance);

struct PhasePoint {
    std::vector<double> position;
    std::vector<double> momentum;
    LogDensity density;  // at the final position
};

/// L steps of half-kick / drift / half-kick on the Hamiltonian
/// -log_density(w) + |p|^2 / 2. Throws NumericalError on a non-finite state.
PhasePoint leapfrog(std::span<const double> position, std::span<const double> momentum, double step_size,
                    std::size_t steps, const LogDensityFn& log_density, const LogDensity* start = nullptr);

struct ChainRecord {
    std::size_t iter = 0;
    bool accepted = false;
    double log_post = 0.0;
    double energy_error = 0.0;  // H(proposal) - H(current)
};

struct ChainResult {
    std::vector<std::vector<double>> samples;
    double acceptance_rate = 0.0;  // over post-burn-in iterations
    double step_size = 0.0;        // after adaptation
    std::vector<ChainRecord> diagnostics;
};

/// Metropolis-corrected HMC with identity mass matrix on an arbitrary density.
ChainResult hmc_chain(const LogDensityFn& log_density, std::vector<double> initial, const HmcConfig& cfg);

struct PosteriorSamples {
    std::vector<WeightSample> samples;
    double acceptance_rate = 0.0;
    double step_size = 0.0;
    std::vector<ChainRecord> diagnostics;
};

/// Chain starts from init_weights(derive_seed(cfg.seed, 0)) unless `initial` is given.
PosteriorSamples hmc_sample(const LabeledData& ds, const MlpArchitecture& arch, const HmcConfig& cfg,
                            const PointWeights* initial = nullptr);

ProbMatrix predict_hmc(const PosteriorSamples& samples, const LabeledData& ds);

/// `iter,accept,log_post,energy_error`
void save_chain_csv(const std::vector<ChainRecord>& records, const std::filesystem::path& path);

}  // namespace bayescal
