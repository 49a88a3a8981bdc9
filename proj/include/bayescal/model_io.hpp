#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "bayescal/baselines.hpp"
#include "bayescal/bnn.hpp"
#include "bayescal/hmc.hpp"

namespace bayescal {

inline constexpr int kModelFormatVersion = 1;

struct UncalibratedModel {};

struct TemperatureModel {
    Temperature temperature;
};

struct PointModel {
    PointWeights weights;
    std::optional<double> prior_variance;  // empty = maximum likelihood
};

struct EnsembleModel {
    Ensemble ensemble;
    double adversarial_eps = 0.0;
};

struct BnnModel {
    VariationalParams params;
    BnnTrainConfig config;
    std::optional<std::size_t> k;  // selected on validation, if any
    std::vector<std::pair<std::size_t, double>> k_curve;
    std::uint64_t predictive_seed = 0;
    bool degraded = false;
};

struct HmcModel {
    PosteriorSamples posterior;  // diagnostics are not serialized
    HmcConfig config;
};

struct CalibrationModel {
    int class_count = 0;
    std::variant<UncalibratedModel, TemperatureModel, PointModel, EnsembleModel, BnnModel, HmcModel> body;

    /// uncalibrated, ts, map, ensemble, bnn-mfvi, bnn-mfvilr or hmc.
    std::string method() const;
};

nlohmann::ordered_json model_to_json(const CalibrationModel& m);
CalibrationModel model_from_json(const nlohmann::json& j);

void save_model(const CalibrationModel& m, const std::filesystem::path& path);
CalibrationModel load_model(const std::filesystem::path& path);

/// Class probabilities for every row. BNN models use `k_override`, else the
/// stored K; a BNN model with neither is a ValidationError.
ProbMatrix predict_model(const CalibrationModel& m, const LogitDataset& ds,
                         std::optional<std::size_t> k_override = std::nullopt);

}  // namespace bayescal
