#pragma once

// Mean-field variational Bayesian MLP over logits.
//
// Every weight and bias carries an independent Gaussian N(mu, sigma^2) with
// sigma = softplus(rho). Training maximizes the minibatch ELBO
//
//     (1/M) sum_m (1/B) sum_i log p(t_i | x_i, theta_m)  -  beta * KL(q || p) / N
//
// where the KL term is amortized over the N training rows so that a sum of
// minibatch objectives estimates the full-data objective per sample. Two
// gradient estimators are provided: MFVI draws one weight realization per
// minibatch and MC sample; MFVILR draws each layer's pre-activations directly
// with independent noise per row.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bayescal/data.hpp"
#include "bayescal/metrics.hpp"
#include "bayescal/mlp.hpp"
#include "bayescal/optim.hpp"
#include "bayescal/rng.hpp"

namespace bayescal {

inline constexpr double kInitialSigma = 0.05;

double softplus(double x);
double inverse_softplus(double y);

/// Means and raw scales laid out exactly like PointWeights::params.
struct VariationalParams {
    MlpArchitecture arch;
    std::vector<double> mu;
    std::vector<double> rho;

    void validate() const;
    std::vector<double> sigma() const;
    bool operator==(const VariationalParams&) const = default;
};

enum class Estimator { mfvi, mfvilr };

Estimator parse_estimator(const std::string& s);
std::string to_string(Estimator e);

struct BnnTrainConfig {
    MlpArchitecture arch;
    double beta = 0.1;
    std::size_t elbo_samples = 1;
    std::size_t epochs = 100;
    std::size_t batch_size = 100;
    double learning_rate = 1e-2;
    LrSchedule schedule = LrSchedule::linear;
    Estimator estimator = Estimator::mfvilr;
    /// Variance of the zero-mean Gaussian prior; 1 is the standard normal.
    double prior_variance = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// The beta grid searched per architecture.
inline constexpr double kBetaGrid[] = {1.0, 0.1, 0.01, 0.001, 0.0001};

struct PredictiveConfig {
    std::size_t k = 100;
    std::uint64_t seed = 0;
};

/// mu as in init_weights(derive_seed(seed, 0)), every sigma = kInitialSigma.
VariationalParams init_variational(const MlpArchitecture& arch, std::uint64_t seed);

/// Closed form sum of KL(N(mu, sigma^2) || N(0, v)) over every parameter.
double kl_to_prior(const VariationalParams& vp, double prior_variance,
                   std::vector<double>* grad_mu = nullptr, std::vector<double>* grad_rho = nullptr);
double kl_to_standard_normal(const VariationalParams& vp);

/// mu + sigma * eps with eps drawn in parameter order.
WeightSample sample_weights(const VariationalParams& vp, Rng& rng);

/// One MC realization with a single weight sample shared by all rows; returns
/// per-row class log-probabilities.
Matrix forward_mfvi(const VariationalParams& vp, const Matrix& inputs, Rng& rng);

/// One MC realization via local reparameterization: every layer draws
/// a ~ N(h mu_W + mu_b, (h*h) sigma_W^2 + sigma_b^2) independently per row.
Matrix forward_mfvilr(const VariationalParams& vp, const Matrix& inputs, Rng& rng);

struct ElboEstimate {
    double objective = 0.0;  // loglik - beta * kl / dataset_size
    double loglik = 0.0;     // mean per-row log-likelihood over the M realizations
    double kl = 0.0;
    std::size_t correct = 0;  // rows whose first realization predicts the label
};

/// Gradient of the objective (ascent direction) w.r.t. mu and rho.
struct ElboGradient {
    std::vector<double> mu;
    std::vector<double> rho;
};

ElboEstimate elbo(const VariationalParams& vp, const Matrix& inputs, std::span<const int> labels,
                  std::size_t mc_samples, double beta, std::size_t dataset_size, Estimator estimator, Rng& rng,
                  ElboGradient* grad = nullptr, double prior_variance = 1.0);

struct BnnEpochLog {
    std::size_t epoch = 0;  // 1-based
    double elbo = 0.0;
    double loglik = 0.0;
    double kl = 0.0;
    double lr = 0.0;
    double train_accuracy = 0.0;
};

struct BnnTrainResult {
    VariationalParams params;
    std::vector<BnnEpochLog> log;
    /// Final-epoch train accuracy below 1.5 / C (only judged once the first 10%
    /// of epochs have passed).
    bool degraded = false;
};

BnnTrainResult train_bnn(const LabeledData& train, const BnnTrainConfig& cfg);

/// `epoch,elbo,loglik,kl,lr`
void save_train_log_csv(const std::vector<BnnEpochLog>& log, const std::filesystem::path& path);

/// Mean of the softmax outputs over K weight samples; sample k draws from
/// Rng(derive_seed(pc.seed, k)), so a K-sample prediction is a prefix of any
/// larger one.
ProbMatrix predict_bnn(const VariationalParams& vp, const Matrix& inputs, const PredictiveConfig& pc);

/// ECE values within this distance are treated as equal when selecting K.
inline constexpr double kEceTieTolerance = 1e-12;

inline const std::vector<std::size_t> kDefaultKGrid{1, 3, 10, 30, 100, 300, 1000};

struct KSelection {
    std::size_t k = 1;
    std::vector<std::pair<std::size_t, double>> curve;  // (K, validation ECE)
};

/// Validation-ECE argmin over an ascending grid, smallest K on ties.
KSelection select_k(const VariationalParams& vp, const LabeledData& val, std::span<const std::size_t> k_grid,
                    std::uint64_t seed, int bin_count = kDefaultBins);

}  // namespace bayescal
