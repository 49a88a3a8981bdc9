#pragma once

// End-to-end operations behind the command-line tool.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bayescal/model_io.hpp"

namespace bayescal {

enum class Method { uncalibrated, ts, map, ensemble, bnn_mfvi, bnn_mfvilr, hmc };

Method parse_method(const std::string& s);
std::string to_string(Method m);

/// Sub-seed streams fanned out from one global seed.
enum class SeedStream : std::uint64_t { split = 1, train = 2, predictive = 3, data = 4, test_data = 5 };

inline std::uint64_t stream_seed(std::uint64_t global, SeedStream s) {
    return derive_seed(global, static_cast<std::uint64_t>(s));
}

struct MethodOptions {
    std::string hidden = "0";
    double beta = 0.1;
    std::size_t elbo_samples = 1;
    std::size_t epochs = 100;
    std::size_t batch_size = 100;
    double learning_rate = 1e-2;
    LrSchedule schedule = LrSchedule::linear;
    std::vector<std::size_t> k_grid = kDefaultKGrid;
    std::optional<double> prior_variance;  // map / ensemble / hmc / bnn prior
    std::size_t members = 5;
    double adversarial_eps = 0.01;
    HmcConfig hmc;
    std::uint64_t seed = 0;
    int bins = kDefaultBins;
};

struct TrainOutcome {
    CalibrationModel model;
    std::vector<BnnEpochLog> log;       // BNN methods
    std::vector<ChainRecord> chain;     // HMC
    bool degraded = false;
};

/// `train` is used for fitting; TS fits on it directly. When `val` is given,
/// BNN methods select K on it.
TrainOutcome train_method(Method method, const LabeledData& train, const LabeledData* val,
                          const MethodOptions& opt);

/// Writes the model (default <out_dir>/model.json) and, when applicable,
/// train_log.csv, train_summary.json and chain.csv into `out_dir`.
void write_train_outputs(const TrainOutcome& t, const std::filesystem::path& out_dir,
                         const std::filesystem::path& model_path = {});

struct EvalOutcome {
    CalibrationMetrics metrics;
    ReliabilityBins bins;
    ProbMatrix probs;
};

EvalOutcome evaluate_model(const CalibrationModel& m, const LogitDataset& ds, int bins,
                           std::optional<std::size_t> k_override = std::nullopt);

/// metrics.json, reliability.csv, per_sample.csv.
void write_eval_outputs(const EvalOutcome& e, std::span<const int> labels, const std::filesystem::path& out_dir);

struct MethodReport {
    Method method{};
    bool ok = false;
    std::string error;
    CalibrationMetrics val;
    CalibrationMetrics test;
    std::optional<double> temperature;
    std::optional<double> beta;
    std::optional<std::size_t> k;
    std::string hidden;
    bool degraded = false;
    double runtime_seconds = 0.0;
};

struct ComparisonReport {
    std::vector<MethodReport> rows;
};

/// Runs every method on the same splits and seed. A failing method is
/// recorded in its row and does not stop the others. With `out_dir`, writes
/// comparison.json, comparison.csv, timing.json and one subdirectory per method.
ComparisonReport run_compare(const Split<LogitDataset>& data, const std::vector<Method>& methods,
                             const MethodOptions& opt, const std::filesystem::path* out_dir = nullptr);

std::string comparison_json(const ComparisonReport& r);
std::string comparison_csv(const ComparisonReport& r);

// ---------------------------------------------------------------------------

struct ToyStudyConfig {
    ToyConfig toy;  // training data; test data uses the same geometry with another seed
    int test_samples_per_class = 1000;
    std::vector<double> prior_variances{16.0, 32.0};
    std::vector<std::string> likelihoods{"0", "1x25", "1x50"};
    HmcConfig hmc;
    OptimConfig map_optim{200, 100, 1e-2, LrSchedule::linear, 0};
    BnnTrainConfig bnn;        // arch and prior_variance are set per cell
    std::size_t bnn_k = 100;   // MFVILR predictive samples
    int grid_resolution = 100;
    GridBounds bounds{-5.0, 5.0, -5.0, 5.0};
    std::uint64_t seed = 0;
    int bins = kDefaultBins;
};

struct ToyCell {
    double prior_variance = 0.0;
    std::string likelihood;
    CalibrationMetrics hmc, mfvilr, map;
    double hmc_acceptance = 0.0;
};

/// MAP, MFVILR and HMC on the same toy data for every (prior, likelihood)
/// cell. With `out_dir`, writes table1.csv and per-cell grid_<method>.csv
/// and chain.csv under <out_dir>/p<prior>_<likelihood>/.
std::vector<ToyCell> run_toy(const ToyStudyConfig& cfg, const std::filesystem::path* out_dir = nullptr);

std::string toy_table_csv(const std::vector<ToyCell>& cells);

}  // namespace bayescal
