#pragma once

#include <optional>
#include <vector>

#include "bayescal/data.hpp"
#include "bayescal/metrics.hpp"
#include "bayescal/mlp.hpp"
#include "bayescal/optim.hpp"
#include "bayescal/softmax.hpp"

namespace bayescal {

struct Temperature {
    double value = 1.0;
};

/// Bracket searched on log T.
inline constexpr double kLogTemperatureMin = -4.0;
inline constexpr double kLogTemperatureMax = 4.0;
inline constexpr double kLogTemperatureTolerance = 1e-4;

/// Mean NLL of softmax(logits / T) against the labels.
double temperature_nll(const LogitDataset& ds, double temperature);

/// Golden-section search for the NLL-minimizing temperature. Never returns a
/// T whose NLL exceeds the NLL at T = 1.
Temperature fit_temperature(const LogitDataset& val);

ProbMatrix apply_temperature(const LogitDataset& ds, Temperature t);

// ---------------------------------------------------------------------------
// Point-estimate MLPs

/// Minimization objective: -(1/N) sum log p(t|x,w) + |w|^2 / (2 v). The prior
/// term is dropped when prior_variance is empty (maximum likelihood).
double map_loss(const PointWeights& w, const LabeledData& ds, std::optional<double> prior_variance,
                std::vector<double>* grad = nullptr);

struct MapTrainResult {
    PointWeights weights;
    std::vector<double> epoch_loss;  // mean minibatch loss per epoch
};

MapTrainResult train_map(const LabeledData& ds, const MlpArchitecture& arch,
                         std::optional<double> prior_variance, const OptimConfig& optim);

ProbMatrix predict_point(const PointWeights& w, const LabeledData& ds);

// ---------------------------------------------------------------------------
// Decoupled ensembles

struct Ensemble {
    std::vector<PointWeights> members;

    void validate() const;
};

/// Members are independent train_map runs. Member 0 uses optim.seed, member i
/// uses derive_seed(optim.seed, i). With adversarial_eps > 0 every minibatch is
/// extended by its fast-gradient-sign copy at radius adversarial_eps times the
/// per-dimension range of the training inputs.
Ensemble train_ensemble(const LabeledData& ds, const MlpArchitecture& arch, std::size_t member_count,
                        const OptimConfig& optim, double adversarial_eps,
                        std::optional<double> prior_variance = std::nullopt);

ProbMatrix predict_ensemble(const Ensemble& e, const LabeledData& ds);

}  // namespace bayescal
