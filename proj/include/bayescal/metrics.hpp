#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bayescal/common.hpp"

namespace bayescal {

/// N x C matrix whose rows are class distributions.
using ProbMatrix = Matrix;

inline constexpr int kDefaultBins = 15;
inline constexpr double kSimplexTolerance = 1e-6;
inline constexpr double kNllFloor = 1e-12;

/// Throws ValidationError if a row leaves [0,1] or does not sum to 1 within
/// kSimplexTolerance, or if a label is outside [0, C).
void validate_probabilities(const ProbMatrix& probs, std::span<const int> labels);
void validate_probabilities(const ProbMatrix& probs);

/// Index of the largest entry; the lowest index wins ties.
std::size_t argmax(const double* row, std::size_t n);

struct ReliabilityBin {
    double lower = 0.0;
    double upper = 0.0;
    std::size_t count = 0;
    std::size_t correct = 0;
    double confidence_sum = 0.0;

    double mean_confidence() const { return count ? confidence_sum / static_cast<double>(count) : 0.0; }
    double accuracy() const { return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0; }
};

struct ReliabilityBins {
    std::vector<ReliabilityBin> bins;
    std::size_t total = 0;
};

/// Equal-width bins over the max-probability confidence: bin 0 is [0, 1/B],
/// bin i > 0 is (i/B, (i+1)/B].
std::size_t bin_index(double confidence, int bin_count);

ReliabilityBins reliability_bins(const ProbMatrix& probs, std::span<const int> labels,
                                 int bin_count = kDefaultBins);

/// Sum over bins of |B_i|/N * |acc(B_i) - conf(B_i)|, as a fraction.
double ece(const ReliabilityBins& bins);
double ece(const ProbMatrix& probs, std::span<const int> labels, int bin_count = kDefaultBins);

double accuracy(const ProbMatrix& probs, std::span<const int> labels);
double mean_confidence(const ProbMatrix& probs);

/// Mean of -log max(p_label, 1e-12).
double nll(const ProbMatrix& probs, std::span<const int> labels);

/// Mean over rows of sum_c (p_c - [c == label])^2; lies in [0, 2].
double brier(const ProbMatrix& probs, std::span<const int> labels);

struct CalibrationMetrics {
    double ece = 0.0;
    double accuracy = 0.0;
    double nll = 0.0;
    double brier = 0.0;
};

CalibrationMetrics evaluate_metrics(const ProbMatrix& probs, std::span<const int> labels,
                                    int bin_count = kDefaultBins);

/// `{ "ece", "ece_percent", "accuracy", "nll", "brier" }`
std::string metrics_json(const CalibrationMetrics& m);
void save_metrics_json(const CalibrationMetrics& m, const std::filesystem::path& path);

/// `bin_lower,bin_upper,count,mean_confidence,accuracy`
void save_reliability_csv(const ReliabilityBins& bins, const std::filesystem::path& path);

/// `confidence,predicted,label,correct`
void save_per_sample_csv(const ProbMatrix& probs, std::span<const int> labels,
                         const std::filesystem::path& path);

}  // namespace bayescal
